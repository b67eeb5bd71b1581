//! Exhaustive search over history-dependent policies on tiny trees.
//!
//! Every decision node of the full history tree chooses its own trade, so
//! the optimum is the expectimin over the history tree. Nothing here shares
//! code with the backward-induction solvers.

use crate::error::{HedgeError, Result};
use crate::market::Node;
use crate::mdp::{HedgeAction, HedgeState, HedgingProblem, N_ACTIONS};

use super::{preference_order, select_min};

/// Largest number of terminal loss evaluations allowed.
pub const BRUTE_FORCE_BUDGET: f64 = 5.0e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceResult {
    /// Minimal expected raw loss.
    pub value: f64,
    pub log_value: f64,
    pub action: HedgeAction,
}

pub fn brute_force_best(problem: &HedgingProblem) -> Result<BruteForceResult> {
    let t = problem.n_steps() as i32;
    let branching = (N_ACTIONS * 3) as f64;
    let work = branching.powi(t);
    if work > BRUTE_FORCE_BUDGET {
        return Err(HedgeError::InstanceTooLarge {
            work,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let (action, value) = best(problem, &problem.initial_state())?;
    let action = action.expect("root is a decision node");
    Ok(BruteForceResult {
        value,
        log_value: value.ln(),
        action,
    })
}

fn best(problem: &HedgingProblem, state: &HedgeState) -> Result<(Option<HedgeAction>, f64)> {
    if state.is_terminal(&problem.lattice) {
        return Ok((None, problem.terminal_loss(state)?));
    }
    let probs = problem.lattice.move_probabilities();
    let mut candidates = Vec::with_capacity(N_ACTIONS);
    for a in preference_order() {
        let mut v = 0.0;
        for (k, p) in probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let next = Node::new(state.t + 1, state.j + k as i32 - 1);
            v += p * best(problem, &problem.step(state, a, next)?)?.1;
        }
        candidates.push((a, v));
    }
    let (a, v) = select_min(candidates).expect("non-empty action space");
    Ok((Some(a), v))
}
