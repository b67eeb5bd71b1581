//! Command-line experiment runner.
//!
//! Every command reads an [`ExperimentConfig`] and writes its artefacts into
//! the output directory. Outputs depend only on the config and seeds, never
//! on the thread count or the output location.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::apprentice::{
    evaluate_policy, expert_iteration, load_checkpoint, save_checkpoint, ApprenticeNet, CheckpointMeta, EvalAgent,
    GreedyApprentice,
};
use crate::error::{HedgeError, Result};
use crate::instruments::call_payoff;
use crate::market::sample_paths;
use crate::mdp::{DoNothing, GaugeParams, HedgingAgent, HedgingProblem, RewardModel};
use crate::oracle::{
    dp_cara, dp_terminal_variance_window, fair_hedging_price, optimal_baseline_pnl, reservation_prices,
    rn_option_price, HedgePolicyTable, SolverKind,
};
use crate::search::SearchAgent;
use crate::stats::{derive_seed, fmt_sig, histogram, std_dev, RewardSummary};

pub use config::{ExperimentConfig, DEFAULT_CONFIG};

/// Bins of the pre-binned P&L companion file.
pub const HISTOGRAM_BINS: usize = 50;
pub const LOG_ENV: &str = "HEDGETREE_LOG";

#[derive(Debug, Parser)]
#[command(name = "hedgetree", version, about = "Option hedging with apprentice-guided tree search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run expert iteration and write checkpoints, the training curve and a manifest.
    Train(CommonArgs),
    /// Terminal P&L per path for the trained agent and the baselines, costs off.
    Assess(CommonArgs),
    /// Risk-neutral, fair hedging and reservation prices per option.
    Price(CommonArgs),
    /// Dump the lattice, option values and the optimal policy.
    Oracle(CommonArgs),
    /// Gauged rewards of the trained agent and the baselines, costs on.
    Eval(CommonArgs),
    /// Print the commented default configuration.
    DefaultConfig,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML), or a run manifest written by `train`.
    #[arg(long)]
    pub config: PathBuf,
    /// Network checkpoint; defaults to `champion.bin` in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of market paths for `assess` and `eval`.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Path-sampling seed for `assess` and `eval`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, overriding `run.threads`.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses the arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cli: &Cli) -> Result<()> {
    let args = match &cli.command {
        Command::DefaultConfig => {
            print!("{DEFAULT_CONFIG}");
            return Ok(());
        }
        Command::Train(a) | Command::Assess(a) | Command::Price(a) | Command::Oracle(a) | Command::Eval(a) => a,
    };
    let cfg = load_config(&args.config)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out)?;
    let threads = args.threads.unwrap_or(cfg.run.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HedgeError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Train(_) => cmd_train(&cfg, &out),
        Command::Assess(a) => cmd_assess(&cfg, &out, a),
        Command::Price(_) => cmd_price(&cfg, &out),
        Command::Oracle(_) => cmd_oracle(&cfg, &out),
        Command::Eval(a) => cmd_eval(&cfg, &out, a),
        Command::DefaultConfig => unreachable!("handled above"),
    })
}

/// Reads a TOML config, or the config embedded in a run manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| HedgeError::Config(format!("{}: {e}", path.display())))?;
        manifest.config.validate()?;
        return Ok(manifest.config);
    }
    ExperimentConfig::load(path)
}

/// Everything needed to rerun a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub seeds: config::Seeds,
    pub capital: f64,
    pub gauge: GaugeParams,
    pub initial_reward: f64,
    pub champion_reward: f64,
    pub config: ExperimentConfig,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HedgeError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HedgeError::Numeric(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    info!(
        "capital {:.6}, gauge l_ref {:.6} offset {:.6}",
        problem.capital, problem.gauge.l_ref, problem.gauge.offset
    );
    let hyper = serde_json::to_value(cfg).map_err(|e| HedgeError::Numeric(e.to_string()))?;
    let ei = cfg.expert_iteration();
    let mut curve = create(&out.join("curve.csv"))?;
    writeln!(curve, "iteration,mean,p25,p75,accepted")?;
    let mut champion_iteration = 0;
    let outcome = expert_iteration(&problem, &ei, |row, champion| {
        writeln!(
            curve,
            "{},{},{},{},{}",
            row.iteration,
            fmt_sig(row.mean),
            fmt_sig(row.p25),
            fmt_sig(row.p75),
            row.accepted
        )?;
        curve.flush()?;
        if row.accepted {
            champion_iteration = row.iteration;
            let meta = CheckpointMeta {
                iteration: row.iteration,
                evaluation_reward: row.mean,
                hyperparameters: hyper.clone(),
            };
            save_checkpoint(&out.join(format!("checkpoint_{:03}.bin", row.iteration)), champion, &meta)?;
        }
        Ok(())
    })?;
    curve.flush()?;
    let meta = CheckpointMeta {
        iteration: champion_iteration,
        evaluation_reward: outcome.champion_reward(),
        hyperparameters: hyper,
    };
    save_checkpoint(&out.join("champion.bin"), &outcome.champion, &meta)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        seeds: cfg.seeds,
        capital: problem.capital,
        gauge: problem.gauge,
        initial_reward: outcome.initial.mean,
        champion_reward: outcome.champion_reward(),
        config: cfg.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "champion from iteration {champion_iteration}: reward {:.6} (initial {:.6})",
        outcome.champion_reward(),
        outcome.initial.mean
    );
    Ok(())
}

fn load_net(cfg: &ExperimentConfig, out: &Path, args: &CommonArgs) -> Result<ApprenticeNet> {
    let path = args.checkpoint.clone().unwrap_or_else(|| out.join("champion.bin"));
    let (net, meta) = load_checkpoint(&path).map_err(|e| match e {
        HedgeError::Io(io) => HedgeError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    if net.channels() != cfg.training.channels {
        return Err(HedgeError::ShapeMismatch {
            expected: format!("{} channels", cfg.training.channels),
            got: format!("{} channels in {}", net.channels(), path.display()),
        });
    }
    if let Some(m) = meta {
        info!("loaded {} (iteration {}, reward {:.6})", path.display(), m.iteration, m.evaluation_reward);
    }
    Ok(net)
}

/// The agent the config evaluates: search guided by the net, or the net alone.
fn trained_agent<'a>(cfg: &ExperimentConfig, net: &'a ApprenticeNet) -> Box<dyn HedgingAgent + 'a> {
    match cfg.training.eval_agent {
        EvalAgent::Search => Box::new(SearchAgent {
            config: cfg.search,
            apprentice: net,
        }),
        EvalAgent::Apprentice => Box::new(GreedyApprentice(net)),
    }
}

/// Optimal policy for the problem's reward. The incremental reward has no
/// exact solver and falls back to terminal variance.
fn dp_policy(cfg: &ExperimentConfig, problem: &HedgingProblem) -> Result<HedgePolicyTable> {
    let grid = cfg.holdings_grid()?;
    match problem.reward {
        RewardModel::Cara { lambda } => dp_cara(&problem.lattice, &problem.contract, &problem.cost, lambda, grid),
        RewardModel::TerminalVariance | RewardModel::BsmIncremental => {
            let premium = problem.contract.theta * problem.option_values().value(0, 0);
            let window = (problem.capital.min(0.0), problem.capital.max(2.0 * premium));
            dp_terminal_variance_window(&problem.lattice, &problem.contract, &problem.cost, grid, window)
        }
    }
}

/// Terminal P&L of an agent on each path.
fn agent_pnl(agent: &dyn HedgingAgent, problem: &HedgingProblem, paths: &[crate::market::MarketPath], seed: u64) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let traj = agent.run_episode(problem, path, derive_seed(seed, 1, i as u64))?;
            problem.terminal_wealth(traj.terminal())
        })
        .collect()
}

pub fn cmd_assess(cfg: &ExperimentConfig, out: &Path, args: &CommonArgs) -> Result<()> {
    let net = load_net(cfg, out, args)?;
    let problem = cfg.problem()?.frictionless();
    let n_paths = args.paths.unwrap_or(1000);
    let seed = args.seed.unwrap_or(cfg.seeds.assess);
    let paths = sample_paths(&problem.lattice, n_paths, seed);
    let dp = dp_policy(cfg, &problem)?;
    let trained = trained_agent(cfg, &net);
    let runs = [
        ("trained", agent_pnl(trained.as_ref(), &problem, &paths, seed)?),
        ("dp", optimal_baseline_pnl(&dp, &paths, &problem)?),
        ("do_nothing", agent_pnl(&DoNothing, &problem, &paths, seed)?),
    ];

    let lat = &problem.lattice;
    let theta = problem.contract.theta;
    let mut csv = create(&out.join("assess.csv"))?;
    writeln!(csv, "agent,path,s_t,option_value,pi_t,pnl")?;
    for (name, pnl) in &runs {
        for (i, (path, w)) in paths.iter().zip(pnl).enumerate() {
            let s_t = lat.node_price(path.terminal());
            let option = theta * call_payoff(s_t, problem.contract.strike);
            writeln!(
                csv,
                "{name},{i},{},{},{},{}",
                fmt_sig(s_t),
                fmt_sig(option),
                fmt_sig(w + option),
                fmt_sig(*w)
            )?;
        }
    }
    csv.flush()?;

    let all: Vec<f64> = runs.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut hist = create(&out.join("assess_hist.csv"))?;
    writeln!(hist, "agent,bin,lo,hi,count")?;
    for (name, pnl) in &runs {
        for (b, count) in histogram(pnl, lo, hi, HISTOGRAM_BINS).iter().enumerate() {
            let a = lo + width * b as f64;
            writeln!(hist, "{name},{b},{},{},{count}", fmt_sig(a), fmt_sig(a + width))?;
        }
    }
    hist.flush()?;
    for (name, pnl) in &runs {
        println!("{name:>10}: P&L mean {:.6} std {:.6}", crate::stats::mean(pnl), std_dev(pnl));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub rn_price: f64,
    pub fair_price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reservation_sell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reservation_buy: Option<f64>,
}

pub fn price_report(cfg: &ExperimentConfig) -> Result<PriceReport> {
    let lattice = cfg.lattice()?;
    let grid = cfg.holdings_grid()?;
    let theta = cfg.contract.theta;
    let rn_price = rn_option_price(&lattice, &cfg.contract).value(0, 0);
    let fair = fair_hedging_price(&lattice, &cfg.contract, &cfg.cost, &RewardModel::TerminalVariance, grid)?;
    let (reservation_sell, reservation_buy) = match cfg.reward.model()? {
        RewardModel::Cara { lambda } => {
            let (s, b) = reservation_prices(&lattice, &cfg.contract, &cfg.cost, lambda, grid)?;
            (Some(s), Some(b))
        }
        _ => (None, None),
    };
    Ok(PriceReport {
        rn_price,
        fair_price: fair / theta,
        reservation_sell,
        reservation_buy,
    })
}

pub fn cmd_price(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let report = price_report(cfg)?;
    println!("rn price          {:.6}", report.rn_price);
    println!("fair price        {:.6}", report.fair_price);
    if let (Some(s), Some(b)) = (report.reservation_sell, report.reservation_buy) {
        println!("reservation sell  {s:.6}");
        println!("reservation buy   {b:.6}");
    }
    write_json(&out.join("price.json"), &report)
}

#[derive(Debug, Clone, Serialize)]
struct RootSummary {
    capital: f64,
    value: f64,
    action: i32,
}

pub fn cmd_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let lat = &problem.lattice;
    let mut f = create(&out.join("lattice.csv"))?;
    lat.write_csv(&mut f)?;
    f.flush()?;
    let values = rn_option_price(lat, &problem.contract);
    let mut f = create(&out.join("value_table.csv"))?;
    values.write_csv(lat, &mut f)?;
    f.flush()?;
    let policy = dp_policy(cfg, &problem)?;
    if policy.kind() == SolverKind::GridVariance {
        // the costly policy depends on wealth; only the root is meaningful
        let root = RootSummary {
            capital: problem.capital,
            value: policy.root_value(problem.capital)?,
            action: policy.root_action(problem.capital)?.delta_n(),
        };
        write_json(&out.join("policy_root.json"), &root)?;
    } else {
        let mut f = create(&out.join("policy_table.csv"))?;
        policy.write_csv(&mut f)?;
        f.flush()?;
    }
    println!("{} lattice nodes, root option value {:.6}", lat.node_count(), values.value(0, 0));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub paths: usize,
    pub seed: u64,
    pub trained: RewardSummary,
    pub dp: RewardSummary,
    pub do_nothing: RewardSummary,
}

pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, args: &CommonArgs) -> Result<()> {
    let net = load_net(cfg, out, args)?;
    let problem = cfg.problem()?;
    let n_paths = args.paths.unwrap_or(cfg.gate.eval_paths);
    let seed = args.seed.unwrap_or(cfg.seeds.eval);
    let paths = sample_paths(&problem.lattice, n_paths, seed);
    let dp = dp_policy(cfg, &problem)?;
    let trained = trained_agent(cfg, &net);
    let report = EvalReport {
        paths: n_paths,
        seed,
        trained: evaluate_policy(trained.as_ref(), &paths, &problem, seed)?.summary,
        dp: evaluate_policy(&dp, &paths, &problem, seed)?.summary,
        do_nothing: evaluate_policy(&DoNothing, &paths, &problem, seed)?.summary,
    };
    for (name, s) in [("trained", report.trained), ("dp", report.dp), ("do_nothing", report.do_nothing)] {
        println!("{name:>10}: reward {:.6} [{:.6}, {:.6}]", s.mean, s.p25, s.p75);
    }
    write_json(&out.join("eval.json"), &report)
}
