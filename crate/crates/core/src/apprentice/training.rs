//! Expert iteration: search-generated episodes, supervised fitting of the
//! apprentice, out-of-sample evaluation and gated acceptance.

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoding::{encode, StateEncoding};
use super::GreedyApprentice;
use super::network::{ApprenticeNet, BatchLoss, Sample, DEFAULT_CHANNELS};
use crate::error::{HedgeError, Result};
use crate::market::{sample_paths, MarketPath};
use crate::mdp::{HedgingAgent, HedgingProblem, N_ACTIONS};
use crate::search::{play_episode, RolloutMode, SearchAgent, SearchConfig, SearchedEpisode};
use crate::stats::{derive_seed, seeded_rng, RewardSummary};

/// Training samples from one searched episode; every decision shares the
/// terminal gauged reward.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<(StateEncoding, [f64; N_ACTIONS])>,
    pub z: f64,
}

impl EpisodeRecord {
    pub fn from_episode(episode: &SearchedEpisode, problem: &HedgingProblem) -> Result<Self> {
        let traj = &episode.trajectory;
        if episode.targets.len() != traj.actions.len() || traj.states.len() != problem.n_steps() + 1 {
            return Err(HedgeError::InvalidParameter("episode must cover every decision".into()));
        }
        let z = problem.reward(traj.terminal())?;
        let steps = traj
            .states
            .iter()
            .zip(&episode.targets)
            .map(|(s, t)| (encode(s, problem), *t))
            .collect();
        Ok(Self { steps, z })
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.steps.iter().map(move |(input, target)| Sample {
            input: *input,
            target: *target,
            z: self.z,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs: 4,
            dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(HedgeError::InvalidParameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HedgeError::InvalidParameter("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size < 2 {
            return Err(HedgeError::InvalidParameter("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HedgeError::InvalidParameter("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Stochastic gradient descent with heavy-ball momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    velocity: Vec<f64>,
    learning_rate: f64,
    momentum: f64,
}

impl Sgd {
    pub fn new(n_params: usize, learning_rate: f64, momentum: f64) -> Self {
        Self {
            velocity: vec![0.0; n_params],
            learning_rate,
            momentum,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v - self.learning_rate * g;
            *p += *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub samples: usize,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<BatchLoss>,
}

/// Fits the net to the replay for `cfg.epochs` passes over shuffled
/// minibatches. Batches of a single sample are skipped since batch
/// normalisation is degenerate on them.
pub fn train_iteration(
    net: &mut ApprenticeNet,
    replay: &[EpisodeRecord],
    cfg: &TrainConfig,
    sgd: &mut Sgd,
    seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut samples: Vec<Sample> = replay.iter().flat_map(|r| r.samples()).collect();
    if samples.len() < 2 {
        return Err(HedgeError::InvalidParameter("replay needs at least two samples".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        samples.shuffle(&mut rng);
        let (mut policy, mut value, mut batches) = (0.0, 0.0, 0usize);
        for batch in samples.chunks(cfg.batch_size).filter(|b| b.len() >= 2) {
            let (loss, grad, stats) = net.loss_and_gradient(batch, cfg.dropout, Some(&mut rng));
            if !loss.total().is_finite() {
                return Err(HedgeError::Divergence(loss.total()));
            }
            sgd.step(net.params_mut(), &grad);
            net.update_running_stats(&stats, batch.len());
            policy += loss.policy;
            value += loss.value;
            batches += 1;
        }
        let mean = BatchLoss {
            policy: policy / batches as f64,
            value: value / batches as f64,
        };
        debug!("epoch {epoch}: policy loss {:.6} value loss {:.6}", mean.policy, mean.value);
        epoch_losses.push(mean);
    }
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(HedgeError::Divergence(f64::NAN));
    }
    Ok(TrainReport {
        samples: samples.len(),
        epoch_losses,
    })
}

/// Gauged rewards of one agent over a fixed path set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rewards: Vec<f64>,
    pub summary: RewardSummary,
}

/// Plays the agent along every path in parallel. Each path gets its own
/// seed derived from `seed` and its index, so results do not depend on the
/// thread count.
pub fn evaluate_policy<G: HedgingAgent + ?Sized>(
    agent: &G,
    paths: &[MarketPath],
    problem: &HedgingProblem,
    seed: u64,
) -> Result<Evaluation> {
    if paths.is_empty() {
        return Err(HedgeError::InvalidParameter("evaluation needs at least one path".into()));
    }
    let rewards = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let traj = agent.run_episode(problem, path, derive_seed(seed, 1, i as u64))?;
            problem.reward(traj.terminal())
        })
        .collect::<Result<Vec<f64>>>()?;
    let summary = RewardSummary::from_samples(&rewards);
    Ok(Evaluation { rewards, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub eval_paths: usize,
    /// Relative improvement over the incumbent's mean reward.
    pub improvement_threshold: f64,
    /// Absolute improvement used when the incumbent mean is essentially 0.
    pub additive_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            eval_paths: 100,
            improvement_threshold: 0.01,
            additive_threshold: 0.01,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_paths == 0 {
            return Err(HedgeError::InvalidParameter("eval_paths must be at least 1".into()));
        }
        if !(self.improvement_threshold >= 0.0 && self.additive_threshold >= 0.0) {
            return Err(HedgeError::InvalidParameter("gate thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Accepts the candidate when its mean reward beats the incumbent's by the
/// configured margin.
pub fn gate(candidate: f64, incumbent: f64, cfg: &GateConfig) -> bool {
    let margin = if incumbent.abs() <= 1e-6 {
        cfg.additive_threshold
    } else {
        cfg.improvement_threshold * incumbent.abs()
    };
    candidate >= incumbent + margin
}

/// Which agent the gate evaluates for a given net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalAgent {
    /// Tree search guided by the net, most visited move.
    Search,
    /// The net's most likely action, no search.
    Apprentice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertIterationConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Sampling temperature for the played move during self-play.
    pub temperature: f64,
    pub channels: usize,
    pub eval_agent: EvalAgent,
    /// Leading iterations that use apprentice-greedy rollouts even when the
    /// search is configured for value bootstrapping, since an untrained
    /// value head carries no information.
    pub warmup_iterations: usize,
    /// Number of most recent iterations whose episodes are trained on.
    pub replay_iterations: usize,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub gate: GateConfig,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub init_seed: u64,
}

impl Default for ExpertIterationConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            episodes_per_iteration: 1000,
            temperature: 1.0,
            channels: DEFAULT_CHANNELS,
            eval_agent: EvalAgent::Search,
            warmup_iterations: 1,
            replay_iterations: 1,
            search: SearchConfig {
                rollout_mode: RolloutMode::ApprenticeGreedy,
                ..SearchConfig::default()
            },
            train: TrainConfig::default(),
            gate: GateConfig::default(),
            train_seed: 1,
            eval_seed: 2,
            init_seed: 3,
        }
    }
}

impl ExpertIterationConfig {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.train.validate()?;
        self.gate.validate()?;
        if self.iterations > 0 && self.episodes_per_iteration == 0 {
            return Err(HedgeError::InvalidParameter("episodes_per_iteration must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(HedgeError::InvalidParameter("temperature must be non-negative".into()));
        }
        if self.replay_iterations == 0 {
            return Err(HedgeError::InvalidParameter("replay_iterations must be at least 1".into()));
        }
        if self.train_seed == self.eval_seed {
            return Err(HedgeError::InvalidParameter(
                "evaluation seed must differ from the training seed".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the training curve: the candidate's evaluation and whether
/// it replaced the champion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ExpertIterationOutcome {
    pub champion: ApprenticeNet,
    /// Evaluation of the initial net.
    pub initial: RewardSummary,
    /// Mean evaluation reward of the initial net and of each accepted
    /// candidate, in order.
    pub accepted_rewards: Vec<f64>,
    pub curve: Vec<CurveRow>,
}

impl ExpertIterationOutcome {
    pub fn champion_reward(&self) -> f64 {
        *self.accepted_rewards.last().expect("initial reward is always present")
    }
}

/// Runs the expert-iteration loop. A trainee net generates the self-play
/// episodes from a frozen snapshot, keeps learning across iterations and is
/// offered to the gate after each one; the champion only changes when the
/// gate accepts. `on_iteration` sees every curve row
/// with the current champion and may persist it.
pub fn expert_iteration<F>(
    problem: &HedgingProblem,
    cfg: &ExpertIterationConfig,
    mut on_iteration: F,
) -> Result<ExpertIterationOutcome>
where
    F: FnMut(&CurveRow, &ApprenticeNet) -> Result<()>,
{
    cfg.validate()?;
    let mut champion = ApprenticeNet::new(cfg.channels, cfg.init_seed)?;
    let mut trainee = champion.clone();
    let mut sgd = Sgd::new(trainee.params().len(), cfg.train.learning_rate, cfg.train.momentum);
    let eval_paths = sample_paths(&problem.lattice, cfg.gate.eval_paths, cfg.eval_seed);
    let evaluate = |net: &ApprenticeNet| match cfg.eval_agent {
        EvalAgent::Search => {
            let agent = SearchAgent {
                config: cfg.search,
                apprentice: net,
            };
            evaluate_policy(&agent, &eval_paths, problem, cfg.eval_seed)
        }
        EvalAgent::Apprentice => evaluate_policy(&GreedyApprentice(net), &eval_paths, problem, cfg.eval_seed),
    };
    let initial = evaluate(&champion)?.summary;
    info!("initial evaluation reward {:.6}", initial.mean);
    let mut accepted_rewards = vec![initial.mean];
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut window: std::collections::VecDeque<Vec<EpisodeRecord>> = std::collections::VecDeque::new();

    for iteration in 1..=cfg.iterations {
        let it = iteration as u64;
        let paths = sample_paths(
            &problem.lattice,
            cfg.episodes_per_iteration,
            derive_seed(cfg.train_seed, 2, it),
        );
        let snapshot = &trainee;
        let search = if iteration <= cfg.warmup_iterations && cfg.search.rollout_mode == RolloutMode::ValueBootstrap {
            SearchConfig {
                rollout_mode: RolloutMode::ApprenticeGreedy,
                ..cfg.search
            }
        } else {
            cfg.search
        };
        let episodes = paths
            .par_iter()
            .enumerate()
            .map(|(e, path)| {
                let seed = derive_seed(cfg.train_seed, it, e as u64);
                let episode = play_episode(problem, path, &search, cfg.temperature, snapshot, seed)?;
                EpisodeRecord::from_episode(&episode, problem)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_z = episodes.iter().map(|r| r.z).sum::<f64>() / episodes.len() as f64;
        if window.len() == cfg.replay_iterations {
            window.pop_front();
        }
        window.push_back(episodes);
        let replay: Vec<EpisodeRecord> = window.iter().flatten().cloned().collect();
        let report = train_iteration(&mut trainee, &replay, &cfg.train, &mut sgd, derive_seed(cfg.train_seed, 3, it))?;
        let eval = evaluate(&trainee)?.summary;
        let incumbent = *accepted_rewards.last().expect("non-empty");
        let accepted = gate(eval.mean, incumbent, &cfg.gate);
        if accepted {
            champion = trainee.clone();
            accepted_rewards.push(eval.mean);
        }
        let last_loss = report.epoch_losses.last().map(|l| l.total()).unwrap_or(f64::NAN);
        info!(
            "iteration {iteration}: self-play z {mean_z:.4}, loss {last_loss:.4}, candidate {:.6} vs champion {incumbent:.6} -> {}",
            eval.mean,
            if accepted { "accepted" } else { "rejected" }
        );
        let row = CurveRow {
            iteration,
            mean: eval.mean,
            p25: eval.p25,
            p75: eval.p75,
            accepted,
        };
        on_iteration(&row, &champion)?;
        curve.push(row);
    }
    Ok(ExpertIterationOutcome {
        champion,
        initial,
        accepted_rewards,
        curve,
    })
}
