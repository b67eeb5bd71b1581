//! Fair hedging price and CARA reservation prices.

use super::variance::dp_terminal_variance_window;
use super::{dp_cara_position, dp_terminal_variance, rn_option_price, HoldingsGrid};
use crate::error::{HedgeError, Result};
use crate::instruments::{CallContract, CostModel};
use crate::market::TrinomialLattice;
use crate::mdp::RewardModel;

/// Scan points used to bracket the minimum before refinement.
const SCAN_POINTS: usize = 41;
const GOLDEN_TOL: f64 = 1e-9;

/// Initial capital minimising the optimal expected terminal variance.
pub fn fair_hedging_price(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    reward: &RewardModel,
    grid: HoldingsGrid,
) -> Result<f64> {
    if !matches!(reward, RewardModel::TerminalVariance) {
        return Err(HedgeError::InvalidParameter(
            "fair hedging price is defined for the terminal-variance loss".into(),
        ));
    }
    if cost.is_frictionless() {
        // V(Π) is an exact parabola: read its vertex off three evaluations
        let table = dp_terminal_variance(lattice, contract, cost, grid)?;
        let (a, b, c) = (table.root_value(-1.0)?, table.root_value(0.0)?, table.root_value(1.0)?);
        let curvature = a - 2.0 * b + c;
        if curvature <= 0.0 {
            return Err(HedgeError::Numeric("root value is not convex in capital".into()));
        }
        return Ok(0.5 * (a - c) / curvature);
    }
    let premium = contract.theta * rn_option_price(lattice, contract).value(0, 0);
    let s0 = lattice.params().s0;
    let lo = 0.5 * premium - 1.0;
    let hi = premium + cost.beta.max(cost.liquidation_beta) * s0 * contract.theta * (lattice.n_steps() + 2) as f64 + 1.0;
    let table = dp_terminal_variance_window(lattice, contract, cost, grid, (lo, hi))?;
    minimise_bracketed(|pi| table.root_value(pi), lo, hi)
}

/// Scan then golden-section search; fails unless the scan shows a single
/// interior valley.
pub(crate) fn minimise_bracketed<F>(f: F, lo: f64, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let ys = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    let k = (0..SCAN_POINTS)
        .min_by(|&a, &b| ys[a].total_cmp(&ys[b]))
        .expect("non-empty scan");
    if k == 0 || k == SCAN_POINTS - 1 {
        return Err(HedgeError::Bracket(format!(
            "minimum sits on the edge of [{lo}, {hi}]"
        )));
    }
    let slack = 1e-10 * ys[k].abs().max(1.0);
    let unimodal = ys[..=k].windows(2).all(|w| w[1] <= w[0] + slack)
        && ys[k..].windows(2).all(|w| w[1] >= w[0] - slack);
    if !unimodal {
        return Err(HedgeError::Bracket(format!("loss is not unimodal on [{lo}, {hi}]")));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (xs[k - 1], xs[k + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > GOLDEN_TOL * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Price per option at which a CARA writer of `contract.theta` calls is
/// indifferent to not selling.
pub fn reservation_sell_price(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    lambda: f64,
    grid: HoldingsGrid,
) -> Result<f64> {
    Ok(reservation_prices(lattice, contract, cost, lambda, grid)?.0)
}

/// Price per option at which a CARA buyer of `contract.theta` calls is
/// indifferent to not buying.
pub fn reservation_buy_price(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    lambda: f64,
    grid: HoldingsGrid,
) -> Result<f64> {
    Ok(reservation_prices(lattice, contract, cost, lambda, grid)?.1)
}

/// `(sell, buy)` reservation prices per option.
pub fn reservation_prices(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    lambda: f64,
    grid: HoldingsGrid,
) -> Result<(f64, f64)> {
    let theta = contract.theta;
    let root = |position: f64| -> Result<f64> {
        let v = dp_cara_position(lattice, contract.strike, position, cost, lambda, grid)?.root_log_value(0.0)?;
        if !v.is_finite() {
            return Err(HedgeError::Numeric(format!("CARA value for position {position} is {v}")));
        }
        Ok(v)
    };
    let (short, none, long) = (root(theta)?, root(0.0)?, root(-theta)?);
    Ok(((short - none) / (lambda * theta), (none - long) / (lambda * theta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_interior_minimum() {
        let x = minimise_bracketed(|x| Ok((x - 1.234).powi(2) + 3.0), -5.0, 5.0).unwrap();
        assert!((x - 1.234).abs() < 1e-7);
    }

    #[test]
    fn edge_minimum_is_a_bracket_failure() {
        let r = minimise_bracketed(|x| Ok(x), 0.0, 1.0);
        assert!(matches!(r, Err(HedgeError::Bracket(_))));
    }

    #[test]
    fn two_valleys_are_a_bracket_failure() {
        let r = minimise_bracketed(|x| Ok((x * x - 1.0).powi(2) + 0.1 * x), -2.0, 2.0);
        assert!(matches!(r, Err(HedgeError::Bracket(_))));
    }
}
