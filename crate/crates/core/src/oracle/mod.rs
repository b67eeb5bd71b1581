//! Exact reference solvers for the hedging problem.
//!
//! Everything here is deterministic backward induction or enumeration on the
//! lattice. The results serve as ground truth for the search and as the
//! "optimal hedger" baseline in assessments.

mod brute;
mod cara;
mod policy;
mod pricing;
mod variance;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::instruments::{call_payoff, CallContract};
use crate::market::TrinomialLattice;
use crate::mdp::{tie_rank, HedgeAction, MAX_TRADE, N_ACTIONS};
use crate::stats::fmt_sig;

pub use brute::{brute_force_best, BruteForceResult, BRUTE_FORCE_BUDGET};
pub use cara::{dp_cara, dp_cara_position};
pub use policy::{optimal_baseline_pnl, HedgePolicyTable, SolverKind};
pub use pricing::{fair_hedging_price, reservation_buy_price, reservation_prices, reservation_sell_price};
pub use variance::{dp_terminal_variance, dp_terminal_variance_window, PI_GRID_POINTS};

/// Option value per node, `C(t, j)`, for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn value(&self, t: usize, j: i32) -> f64 {
        self.values[t][(j + t as i32) as usize]
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn row_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn write_csv<W: Write>(&self, lattice: &TrinomialLattice, mut out: W) -> Result<()> {
        writeln!(out, "t,j,price,option_value")?;
        for (t, row) in self.values.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let j = k as i32 - t as i32;
                writeln!(out, "{},{},{},{}", t, j, fmt_sig(lattice.price(t, j)), fmt_sig(*v))?;
            }
        }
        Ok(())
    }
}

/// Backward induction of the call under the lattice probabilities.
pub fn rn_option_price(lattice: &TrinomialLattice, contract: &CallContract) -> ValueTable {
    let n = lattice.n_steps();
    let [pd, pm, pu] = lattice.move_probabilities();
    let disc = (-lattice.params().rate * lattice.params().dt()).exp();
    let mut values = vec![Vec::new(); n + 1];
    values[n] = (-(n as i32)..=n as i32)
        .map(|j| call_payoff(lattice.price(n, j), contract.strike))
        .collect();
    for t in (0..n).rev() {
        let next = &values[t + 1];
        values[t] = (0..=2 * t)
            .map(|k| disc * (pd * next[k] + pm * next[k + 1] + pu * next[k + 2]))
            .collect();
    }
    ValueTable { values }
}

/// `erf(x)`: Maclaurin series near zero, continued fraction in the tails.
pub fn erf(x: f64) -> f64 {
    if x.abs() < 3.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0.0;
        while term.abs() > 1e-17 * sum.abs().max(1e-300) {
            k += 1.0;
            term *= -x2 / k;
            sum += term / (2.0 * k + 1.0);
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        x.signum() * (1.0 - erfc_tail(x.abs()))
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 3.0 {
        erfc_tail(x)
    } else if x <= -3.0 {
        2.0 - erfc_tail(-x)
    } else {
        1.0 - erf(x)
    }
}

fn erfc_tail(x: f64) -> f64 {
    // erfc(x) = exp(-x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut k = x;
    for i in (1..=80).rev() {
        k = x + (i as f64 / 2.0) / k;
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * k)
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes call delta at zero rates.
pub fn bsm_delta(s: f64, k: f64, sigma: f64, tau: f64) -> Result<f64> {
    if !(s > 0.0 && k > 0.0 && sigma > 0.0 && tau > 0.0) {
        return Err(HedgeError::InvalidParameter(
            "bsm_delta needs positive price, strike, volatility and maturity".into(),
        ));
    }
    let vol = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + 0.5 * vol * vol) / vol;
    Ok(norm_cdf(d1))
}

/// Range of share holdings covered by a policy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldingsGrid {
    pub min: i64,
    pub max: i64,
}

impl HoldingsGrid {
    pub fn new(min: i64, max: i64) -> Result<Self> {
        if min > max {
            return Err(HedgeError::InvalidParameter("empty holdings grid".into()));
        }
        Ok(Self { min, max })
    }

    /// Exact cover of every position reachable from zero in `n_steps` trades.
    pub fn reachable(n_steps: usize) -> Self {
        let h = MAX_TRADE as i64 * n_steps as i64;
        Self { min: -h, max: h }
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.min..=self.max).contains(&n)
    }

    /// True when every trade from `n` stays inside the grid.
    pub fn all_trades_feasible(&self, n: i64) -> bool {
        self.contains(n - MAX_TRADE as i64) && self.contains(n + MAX_TRADE as i64)
    }
}

/// Actions in tie-break preference order: 0, −1, +1, −2, +2, …
pub(crate) fn preference_order() -> [HedgeAction; N_ACTIONS] {
    let mut acts: Vec<HedgeAction> = crate::mdp::action_space().to_vec();
    acts.sort_by_key(|a| tie_rank(a.delta_n()));
    acts.try_into().expect("21 actions")
}

/// Tolerance under which two candidate values count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-12;

/// Minimum over candidates visited in preference order; a later candidate
/// replaces the incumbent only when strictly better beyond the tie tolerance.
pub(crate) fn select_min<I>(candidates: I) -> Option<(HedgeAction, f64)>
where
    I: IntoIterator<Item = (HedgeAction, f64)>,
{
    let mut best: Option<(HedgeAction, f64)> = None;
    for (a, v) in candidates {
        match best {
            None => best = Some((a, v)),
            Some((_, b)) if v < b - TIE_TOLERANCE * b.abs().max(1.0) => best = Some((a, v)),
            _ => {}
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketParams;

    fn simpson_cdf(x: f64) -> f64 {
        // ∫_{-12}^{x} φ(u) du by composite Simpson
        let (a, n) = (-12.0, 200_000);
        let h = (x - a) / n as f64;
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = phi(a) + phi(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * phi(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn normal_cdf_matches_quadrature() {
        for x in [-6.0, -3.5, -2.9, -1.0, -0.3, 0.0, 0.0608, 0.7, 2.5, 3.1, 5.0] {
            let q = simpson_cdf(x);
            assert!((norm_cdf(x) - q).abs() < 1e-12, "x={x}: {} vs {q}", norm_cdf(x));
        }
        assert!((erf(3.0) - 0.999_977_909_503_001_4).abs() < 1e-15);
        assert!((erfc(4.0) - 1.541_725_790_028_002e-8).abs() < 1e-20);
    }

    #[test]
    fn bsm_delta_examples() {
        let tau = 60.0 / 365.0;
        let d1 = 0.5 * 0.30 * f64::sqrt(tau);
        assert!((d1 - 0.0608).abs() < 1e-4);
        let delta = bsm_delta(90.0, 90.0, 0.30, tau).unwrap();
        assert!((delta - simpson_cdf(d1)).abs() < 1e-12);
        assert!((delta - 0.5242).abs() < 1e-4);
        assert!((bsm_delta(900.0, 90.0, 0.3, tau).unwrap() - 1.0).abs() < 1e-6);
        assert!(bsm_delta(9.0, 90.0, 0.3, tau).unwrap() < 1e-6);
        assert!(bsm_delta(0.0, 90.0, 0.3, tau).is_err());
        assert!(bsm_delta(90.0, 90.0, 0.3, 0.0).is_err());
    }

    fn lattice(n: usize) -> TrinomialLattice {
        TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, n)).unwrap()
    }

    #[test]
    fn deep_in_the_money_one_step_price_is_forward_minus_strike() {
        let lat = lattice(1);
        let c = rn_option_price(&lat, &CallContract::single(50.0));
        assert!((c.value(0, 0) - 40.0).abs() < 1e-12);
        let worthless = rn_option_price(&lat, &CallContract::single(500.0));
        assert_eq!(worthless.value(0, 0), 0.0);
    }

    #[test]
    fn value_table_invariants() {
        let lat = lattice(20);
        let c = rn_option_price(&lat, &CallContract::single(90.0));
        let [pd, pm, pu] = lat.move_probabilities();
        for j in -20..=20 {
            assert_eq!(c.value(20, j), call_payoff(lat.price(20, j), 90.0));
        }
        for t in 0..20 {
            for j in -(t as i32)..=t as i32 {
                let back = pu * c.value(t + 1, j + 1) + pm * c.value(t + 1, j) + pd * c.value(t + 1, j - 1);
                assert!((c.value(t, j) - back).abs() < 1e-12);
            }
        }
        assert_eq!(c.row_count(), 21 * 21);
    }

    #[test]
    fn lattice_price_is_close_to_lognormal_quadrature() {
        // E[(S_T − K)^+] for lognormal S_T with zero drift, by Simpson on z
        let (s0, k, sigma, tau) = (90.0, 90.0, 0.30_f64, 60.0_f64 / 365.0);
        let vol = sigma * tau.sqrt();
        let f = |z: f64| {
            let s = s0 * (vol * z - 0.5 * vol * vol).exp();
            (s - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let (a, b, n) = (-10.0, 10.0, 400_000);
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        let bs = acc * h / 3.0;
        let lat_price = rn_option_price(&lattice(20), &CallContract::single(90.0)).value(0, 0);
        assert!((lat_price - bs).abs() < 0.02 * bs, "{lat_price} vs {bs}");
    }

    #[test]
    fn select_min_breaks_ties_by_preference() {
        let order = preference_order();
        assert_eq!(order[0].delta_n(), 0);
        assert_eq!(order[1].delta_n(), -1);
        assert_eq!(order[2].delta_n(), 1);
        let a = |d| HedgeAction::new(d).unwrap();
        let best = select_min([(a(0), 2.0), (a(-1), 1.0), (a(1), 1.0)]).unwrap();
        assert_eq!(best.0.delta_n(), -1);
        let best = select_min([(a(0), 1.0), (a(-1), 1.0 - 1e-15)]).unwrap();
        assert_eq!(best.0.delta_n(), 0);
    }
}
