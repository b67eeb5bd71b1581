//! Experiment configuration file.
//!
//! TOML with one table per concern. Every table rejects unknown keys and the
//! parse error names the offending key and its line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apprentice::{EvalAgent, ExpertIterationConfig, GateConfig, TrainConfig};
use crate::error::{HedgeError, Result};
use crate::instruments::{CallContract, CostModel};
use crate::market::{MarketParams, TrinomialLattice};
use crate::mdp::{GaugeParams, HedgingProblem, RewardModel};
use crate::oracle::{rn_option_price, HoldingsGrid};
use crate::search::SearchConfig;

/// Commented default configuration, reproducing the paper-scale setup.
pub const DEFAULT_CONFIG: &str = include_str!("default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    TerminalVariance,
    Cara,
    BsmIncremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub model: RewardKind,
    /// Risk aversion, required for `cara`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Replaces the calibrated gauge reference loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_ref: Option<f64>,
}

impl RewardSection {
    pub fn model(&self) -> Result<RewardModel> {
        let model = match (self.model, self.lambda) {
            (RewardKind::TerminalVariance, None) => RewardModel::TerminalVariance,
            (RewardKind::BsmIncremental, None) => RewardModel::BsmIncremental,
            (RewardKind::Cara, Some(lambda)) => RewardModel::Cara { lambda },
            (RewardKind::Cara, None) => return Err(HedgeError::Config("reward.lambda is required for cara".into())),
            (_, Some(_)) => return Err(HedgeError::Config("reward.lambda only applies to cara".into())),
        };
        model.validate().map_err(|e| HedgeError::Config(format!("reward: {e}")))?;
        Ok(model)
    }
}

/// Initial portfolio value: a number, or `"rn_price"` for the risk-neutral
/// lattice premium of the whole position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capital {
    Amount(f64),
    Named(CapitalRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapitalRule {
    RnPrice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_eval_agent")]
    pub eval_agent: EvalAgent,
    #[serde(default = "one_usize")]
    pub warmup_iterations: usize,
    #[serde(default = "one_usize")]
    pub replay_iterations: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_channels() -> usize {
    crate::apprentice::DEFAULT_CHANNELS
}

fn default_eval_agent() -> EvalAgent {
    EvalAgent::Search
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub eval: u64,
    pub assess: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Holdings range of the policy tables; defaults to every position
    /// reachable within the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdings_min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdings_max: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketParams,
    pub contract: CallContract,
    pub cost: CostModel,
    pub reward: RewardSection,
    pub capital: Capital,
    #[serde(default)]
    pub search: SearchConfig,
    pub training: TrainingSection,
    #[serde(default)]
    pub optimizer: TrainConfig,
    #[serde(default)]
    pub gate: GateConfig,
    pub seeds: Seeds,
    pub output: OutputSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HedgeError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HedgeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HedgeError::Config(msg) => HedgeError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |section: &'static str| move |e: HedgeError| HedgeError::Config(format!("{section}: {e}"));
        self.market.validate().map_err(ctx("market"))?;
        CallContract::new(self.contract.strike, self.contract.theta).map_err(ctx("contract"))?;
        CostModel::new(self.cost.beta, self.cost.liquidation_beta).map_err(ctx("cost"))?;
        self.reward.model()?;
        if let Some(l) = self.reward.l_ref {
            GaugeParams::new(l, 0.0).map_err(ctx("reward.l_ref"))?;
        }
        if let Capital::Amount(x) = self.capital {
            if !x.is_finite() {
                return Err(HedgeError::Config("capital must be finite".into()));
            }
        }
        let s = self.seeds;
        let all = [("train", s.train), ("eval", s.eval), ("assess", s.assess), ("init", s.init)];
        for (i, (a, x)) in all.iter().enumerate() {
            for (b, y) in &all[i + 1..] {
                if x == y {
                    return Err(HedgeError::Config(format!("seeds.{a} and seeds.{b} must differ")));
                }
            }
        }
        self.expert_iteration().validate().map_err(ctx("training"))?;
        self.holdings_grid()?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<TrinomialLattice> {
        TrinomialLattice::new(self.market)
    }

    pub fn capital_value(&self, lattice: &TrinomialLattice) -> f64 {
        match self.capital {
            Capital::Amount(x) => x,
            Capital::Named(CapitalRule::RnPrice) => {
                self.contract.theta * rn_option_price(lattice, &self.contract).value(0, 0)
            }
        }
    }

    /// Hedging problem with its gauge calibrated, or overridden by
    /// `reward.l_ref`.
    pub fn problem(&self) -> Result<HedgingProblem> {
        let lattice = self.lattice()?;
        let capital = self.capital_value(&lattice);
        let problem = HedgingProblem::new(lattice, self.contract, self.cost, self.reward.model()?, capital)?;
        match self.reward.l_ref {
            Some(l) => problem.with_l_ref(l),
            None => Ok(problem),
        }
    }

    pub fn holdings_grid(&self) -> Result<HoldingsGrid> {
        let full = HoldingsGrid::reachable(self.market.n_steps);
        HoldingsGrid::new(
            self.oracle.holdings_min.unwrap_or(full.min),
            self.oracle.holdings_max.unwrap_or(full.max),
        )
        .map_err(|e| HedgeError::Config(format!("oracle: {e}")))
    }

    pub fn expert_iteration(&self) -> ExpertIterationConfig {
        let t = &self.training;
        ExpertIterationConfig {
            iterations: t.iterations,
            episodes_per_iteration: t.episodes_per_iteration,
            temperature: t.temperature,
            channels: t.channels,
            eval_agent: t.eval_agent,
            warmup_iterations: t.warmup_iterations,
            replay_iterations: t.replay_iterations,
            search: self.search,
            train: self.optimizer,
            gate: self.gate,
            train_seed: self.seeds.train,
            eval_seed: self.seeds.eval,
            init_seed: self.seeds.init,
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
