//! Exponential-utility hedging, `min E[exp(−λ·w_T)]`.
//!
//! Cash translates out of the loss, `V(Π + c) = e^{−λc}·V(Π)`, so
//! `V = exp(−λΠ)·G(t, j, n)` and the recursion runs on `log G` alone.

use super::policy::{reachable_range, Layers, SolverKind, ValueSurface};
use super::variance::require_zero_rates;
use super::{preference_order, select_min, HedgePolicyTable, HoldingsGrid};
use crate::error::{HedgeError, Result};
use crate::instruments::{call_payoff, CallContract, CostModel};
use crate::market::TrinomialLattice;

/// CARA policy for a short position in `contract.theta` calls.
pub fn dp_cara(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    lambda: f64,
    grid: HoldingsGrid,
) -> Result<HedgePolicyTable> {
    dp_cara_position(lattice, contract.strike, contract.theta, cost, lambda, grid)
}

/// CARA policy for `position` calls sold; zero means no option and a
/// negative position is a long one.
pub fn dp_cara_position(
    lattice: &TrinomialLattice,
    strike: f64,
    position: f64,
    cost: &CostModel,
    lambda: f64,
    grid: HoldingsGrid,
) -> Result<HedgePolicyTable> {
    require_zero_rates(lattice)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(HedgeError::InvalidParameter("CARA lambda must be positive".into()));
    }
    let n_steps = lattice.n_steps();
    let probs = lattice.move_probabilities();
    let ranges: Vec<_> = (0..=n_steps).map(|t| reachable_range(&grid, 0, t)).collect();
    let mut log_g = Layers::new(ranges.clone(), 0.0);
    let mut actions = Layers::new(ranges[..n_steps].to_vec(), 0i8);

    let (lo, hi) = ranges[n_steps];
    for j in -(n_steps as i32)..=n_steps as i32 {
        let s = lattice.price(n_steps, j);
        for n in lo..=hi {
            let liability = position * call_payoff(s, strike) + cost.liquidation_beta * n.unsigned_abs() as f64 * s;
            log_g.set(n_steps, j, n, lambda * liability);
        }
    }

    let order = preference_order();
    for t in (0..n_steps).rev() {
        let (lo, hi) = ranges[t];
        for j in -(t as i32)..=t as i32 {
            let s = lattice.price(t, j);
            for n in lo..=hi {
                let candidates = order.iter().filter_map(|&a| {
                    let n1 = n + a.delta_n() as i64;
                    let fee = cost.beta * a.delta_n().unsigned_abs() as f64 * s;
                    let mut terms = [0.0; 3];
                    for (k, term) in terms.iter_mut().enumerate() {
                        let dj = k as i32 - 1;
                        let gain = n1 as f64 * (lattice.price(t + 1, j + dj) - s) - fee;
                        *term = probs[k].ln() - lambda * gain + log_g.get(t + 1, j + dj, n1)?;
                    }
                    Some((a, log_sum_exp(&terms)))
                });
                let (a, v) = select_min(candidates).ok_or(HedgeError::GridExhausted {
                    min: grid.min,
                    max: grid.max,
                })?;
                if !v.is_finite() {
                    return Err(HedgeError::Numeric(format!("log G({t}, {j}, {n}) is {v}")));
                }
                log_g.set(t, j, n, v);
                actions.set(t, j, n, a.delta_n() as i8);
            }
        }
    }
    let table = HedgePolicyTable {
        kind: SolverKind::Cara,
        lattice: lattice.clone(),
        position,
        grid,
        root_holdings: 0,
        surface: ValueSurface::Exponential { lambda, log_g, actions },
    };
    table.check_grid()?;
    Ok(table)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
