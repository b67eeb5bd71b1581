//! Policy/value apprentice for the tree search and the expert-iteration
//! loop that trains it.

mod checkpoint;
mod encoding;
mod network;
mod training;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::Result;
use crate::market::MarketPath;
use crate::mdp::{HedgeState, HedgingAgent, HedgingProblem, Trajectory, N_ACTIONS};
use crate::search::greedy;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta};
pub use encoding::{encode, StateEncoding, ENCODING_LEN, ENCODING_ROWS, ENCODING_WIDTH};
pub use network::{ApprenticeNet, BatchLoss, Sample, DEFAULT_CHANNELS};
pub use training::{
    evaluate_policy, expert_iteration, gate, train_iteration, CurveRow, EpisodeRecord, Evaluation,
    EvalAgent, ExpertIterationConfig, ExpertIterationOutcome, GateConfig, Sgd, TrainConfig, TrainReport,
};

/// Apprentice output for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Probability of each action, indexed like [`crate::mdp::action_space`].
    pub policy: [f64; N_ACTIONS],
    /// Expected gauged reward in `[-1, 1]`.
    pub value: f64,
}

impl Prediction {
    pub fn uniform() -> Self {
        Self {
            policy: [1.0 / N_ACTIONS as f64; N_ACTIONS],
            value: 0.0,
        }
    }
}

/// Source of priors and leaf values for the search.
pub trait Apprentice: Sync {
    fn predict(&self, state: &HedgeState, problem: &HedgingProblem) -> Result<Prediction>;
}

/// Plays the apprentice's most likely action at every decision, no search.
pub struct GreedyApprentice<'a, A: Apprentice + ?Sized>(pub &'a A);

impl<A: Apprentice + ?Sized> HedgingAgent for GreedyApprentice<'_, A> {
    fn run_episode(&self, problem: &HedgingProblem, path: &MarketPath, _seed: u64) -> Result<Trajectory> {
        problem.replay(path, |s| Ok(greedy(&self.0.predict(s, problem)?.policy)))
    }
}

/// Lookup on `(t, j, n)` with a uniform fallback. Counts its evaluations,
/// which makes the search's prior caching observable.
#[derive(Debug, Default)]
pub struct TabularApprentice {
    table: HashMap<(usize, i32, i64), Prediction>,
    evaluations: AtomicUsize,
}

impl TabularApprentice {
    pub fn insert(&mut self, t: usize, j: i32, n: i64, prediction: Prediction) {
        self.table.insert((t, j, n), prediction);
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

impl Apprentice for TabularApprentice {
    fn predict(&self, state: &HedgeState, _problem: &HedgingProblem) -> Result<Prediction> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Ok(self
            .table
            .get(&(state.t, state.j, state.n))
            .copied()
            .unwrap_or_else(Prediction::uniform))
    }
}
