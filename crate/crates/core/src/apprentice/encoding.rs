//! Fixed 2-D state layout: one feature per row, broadcast across the row.

use crate::mdp::{HedgeState, HedgingProblem};

pub const ENCODING_ROWS: usize = 6;
pub const ENCODING_WIDTH: usize = 8;
pub const ENCODING_LEN: usize = ENCODING_ROWS * ENCODING_WIDTH;

/// Row-major `ENCODING_ROWS × ENCODING_WIDTH` array with entries in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEncoding(pub [f64; ENCODING_LEN]);

impl StateEncoding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.0[r * ENCODING_WIDTH..(r + 1) * ENCODING_WIDTH]
    }
}

/// Rows: time `t/T`, log-moneyness `ln(S/K)`, holdings `x/(1 + |x|)` with
/// `x = n/θ`, portfolio value and accumulated costs in units of
/// `sqrt(l_ref)`, sign of `S − K`.
pub fn encode(state: &HedgeState, problem: &HedgingProblem) -> StateEncoding {
    let lat = &problem.lattice;
    let n_steps = lat.n_steps();
    let s = state.price(lat);
    let k = problem.contract.strike;
    let scale = problem.gauge.l_ref.sqrt();
    let x = state.n as f64 / problem.contract.theta.max(1.0);
    let features = [
        state.t as f64 / n_steps as f64,
        (s / k).ln(),
        x / (1.0 + x.abs()),
        state.portfolio_value(lat) / scale,
        state.acc_cost / scale,
        (s - k).signum() * ((s - k).abs() > 1e-12 * k) as i32 as f64,
    ];
    let mut data = [0.0; ENCODING_LEN];
    for (r, f) in features.iter().enumerate() {
        let v = if f.is_finite() { f.clamp(-1.0, 1.0) } else { 0.0 };
        data[r * ENCODING_WIDTH..(r + 1) * ENCODING_WIDTH].fill(v);
    }
    StateEncoding(data)
}
