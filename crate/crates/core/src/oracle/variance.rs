//! Terminal-variance hedging, `min E[w_T²]`.
//!
//! Without frictions the value is `(Π − θC)² + R(t, j, n)` exactly and the
//! policy ignores wealth. With costs the value is `Π² + h(t, j, n, Π)` where
//! `h` is concave and piecewise linear in `Π`: the last decision stage keeps
//! its lines exactly, earlier stages sample `h` on a per-node `Π` grid.

use super::policy::{reachable_range, Layers, SolverKind, ValueSurface};
use super::{preference_order, rn_option_price, select_min, HedgePolicyTable, HoldingsGrid, ValueTable};
use crate::error::{HedgeError, Result};
use crate::instruments::{call_payoff, CallContract, CostModel};
use crate::market::TrinomialLattice;
use crate::mdp::{HedgeAction, N_ACTIONS};

/// Points per `Π` grid in the costly solver.
pub const PI_GRID_POINTS: usize = 201;
/// Half-width of the `Π` grid in standard deviations of the frictionless
/// residual risk.
const PI_GRID_SDS: f64 = 3.0;

pub(crate) fn require_zero_rates(lattice: &TrinomialLattice) -> Result<()> {
    let p = lattice.params();
    if p.rate != 0.0 || p.dividend != 0.0 {
        return Err(HedgeError::InvalidParameter(
            "hedging solvers assume zero interest and dividends".into(),
        ));
    }
    Ok(())
}

/// Optimal terminal-variance policy. Frictionless instances use the exact
/// quadratic solver; otherwise the gridded solver is tuned for initial
/// capital between zero and twice the option premium.
pub fn dp_terminal_variance(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    grid: HoldingsGrid,
) -> Result<HedgePolicyTable> {
    if cost.is_frictionless() {
        return quadratic(lattice, contract, grid);
    }
    let premium = contract.theta * rn_option_price(lattice, contract).value(0, 0);
    dp_terminal_variance_window(lattice, contract, cost, grid, (0.0, 2.0 * premium))
}

/// Like [`dp_terminal_variance`], with the `Π` grids of the costly solver
/// centred on the initial-capital interval `capital`.
pub fn dp_terminal_variance_window(
    lattice: &TrinomialLattice,
    contract: &CallContract,
    cost: &CostModel,
    grid: HoldingsGrid,
    capital: (f64, f64),
) -> Result<HedgePolicyTable> {
    if cost.is_frictionless() {
        return quadratic(lattice, contract, grid);
    }
    require_zero_rates(lattice)?;
    let full = HoldingsGrid::reachable(lattice.n_steps());
    if grid.min > full.min || grid.max < full.max {
        // clipped rows would leave holes in the sampled surface
        return Err(HedgeError::GridExhausted {
            min: grid.min,
            max: grid.max,
        });
    }
    if !(capital.0.is_finite() && capital.1.is_finite() && capital.0 <= capital.1) {
        return Err(HedgeError::InvalidParameter("capital window must be a finite interval".into()));
    }
    let zero_cost = quadratic(lattice, contract, grid)?;
    let sd = zero_cost.root_value(contract.theta * rn_option_price(lattice, contract).value(0, 0))?.sqrt();
    let surface = GriddedSurface::solve(lattice, contract, cost, grid, capital, sd)?;
    Ok(HedgePolicyTable {
        kind: SolverKind::GridVariance,
        lattice: lattice.clone(),
        position: contract.theta,
        grid,
        root_holdings: 0,
        surface: ValueSurface::Gridded(Box::new(surface)),
    })
}

fn quadratic(lattice: &TrinomialLattice, contract: &CallContract, grid: HoldingsGrid) -> Result<HedgePolicyTable> {
    require_zero_rates(lattice)?;
    let n_steps = lattice.n_steps();
    let option = rn_option_price(lattice, contract);
    let theta = contract.theta;
    let probs = lattice.move_probabilities();
    let ranges: Vec<_> = (0..=n_steps).map(|t| reachable_range(&grid, 0, t)).collect();
    let mut residual = Layers::new(ranges.clone(), 0.0);
    let mut actions = Layers::new(ranges[..n_steps].to_vec(), 0i8);
    let order = preference_order();
    for t in (0..n_steps).rev() {
        let (lo, hi) = ranges[t];
        for j in -(t as i32)..=t as i32 {
            let s = lattice.price(t, j);
            let c = option.value(t, j);
            let moves: [(i32, f64, f64, f64); 3] = std::array::from_fn(|k| {
                let dj = k as i32 - 1;
                (j + dj, probs[k], lattice.price(t + 1, j + dj) - s, theta * (option.value(t + 1, j + dj) - c))
            });
            for n in lo..=hi {
                let candidates = order.iter().filter_map(|&a| {
                    let n1 = n + a.delta_n() as i64;
                    let mut acc = 0.0;
                    for &(j1, p, ds, dc) in &moves {
                        acc += p * ((n1 as f64 * ds - dc).powi(2) + residual.get(t + 1, j1, n1)?);
                    }
                    Some((a, acc))
                });
                let (a, v) = select_min(candidates).ok_or(HedgeError::GridExhausted {
                    min: grid.min,
                    max: grid.max,
                })?;
                residual.set(t, j, n, v);
                actions.set(t, j, n, a.delta_n() as i8);
            }
        }
    }
    let table = HedgePolicyTable {
        kind: SolverKind::QuadraticVariance,
        lattice: lattice.clone(),
        position: theta,
        grid,
        root_holdings: 0,
        surface: ValueSurface::Quadratic {
            option,
            residual,
            actions,
        },
    };
    table.check_grid()?;
    Ok(table)
}

/// Successor data of one trade from one node.
#[derive(Clone, Copy)]
struct Move {
    j1: i32,
    p: f64,
    /// Change of portfolio value over the step, trading cost included.
    s: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct GriddedSurface {
    lattice: TrinomialLattice,
    option: ValueTable,
    theta: f64,
    strike: f64,
    cost: CostModel,
    probs: [f64; 3],
    /// `h` at the last decision stage: `slope·Π + intercept` per trade,
    /// infeasible trades carry an infinite intercept.
    lines: Layers<[(f64, f64); N_ACTIONS]>,
    /// Per-node `Π` grid origin and spacing, indexed `[t][j + t]`.
    pi_lo: Vec<Vec<f64>>,
    pi_step: Vec<Vec<f64>>,
    /// `h` samples at stages `1..T−1`, `PI_GRID_POINTS` per `(j, n)`.
    samples: Vec<Vec<f64>>,
    ranges: Vec<(i64, i64)>,
}

impl GriddedSurface {
    fn solve(
        lattice: &TrinomialLattice,
        contract: &CallContract,
        cost: &CostModel,
        grid: HoldingsGrid,
        capital: (f64, f64),
        residual_sd: f64,
    ) -> Result<Self> {
        let n_steps = lattice.n_steps();
        let ranges: Vec<_> = (0..=n_steps).map(|t| reachable_range(&grid, 0, t)).collect();
        let option = rn_option_price(lattice, contract);
        let theta = contract.theta;
        let premium = theta * option.value(0, 0);
        let s0 = lattice.params().s0;
        let mut pi_lo = vec![Vec::new(); n_steps + 1];
        let mut pi_step = vec![Vec::new(); n_steps + 1];
        for t in 1..n_steps.saturating_sub(1) {
            let half = 0.5 * (capital.1 - capital.0)
                + PI_GRID_SDS * residual_sd
                + cost.beta * s0 * theta * t as f64
                + 1.0;
            for j in -(t as i32)..=t as i32 {
                let centre = theta * option.value(t, j) - premium + 0.5 * (capital.0 + capital.1);
                pi_lo[t].push(centre - half);
                pi_step[t].push(2.0 * half / (PI_GRID_POINTS - 1) as f64);
            }
        }
        let line_ranges: Vec<_> = (0..n_steps)
            .map(|t| if t + 1 == n_steps && t > 0 { ranges[t] } else { (0, -1) })
            .collect();
        let mut surface = Self {
            lattice: lattice.clone(),
            option,
            theta,
            strike: contract.strike,
            cost: *cost,
            probs: lattice.move_probabilities(),
            lines: Layers::new(line_ranges, [(0.0, f64::INFINITY); N_ACTIONS]),
            pi_lo,
            pi_step,
            samples: vec![Vec::new(); n_steps + 1],
            ranges,
        };
        if n_steps >= 2 {
            surface.build_lines(n_steps - 1);
        }
        for t in (1..n_steps.saturating_sub(1)).rev() {
            surface.build_samples(t);
        }
        Ok(surface)
    }

    fn n_steps(&self) -> usize {
        self.lattice.n_steps()
    }

    fn moves(&self, t: usize, j: i32, n: i64, a: HedgeAction) -> Option<(i64, [Move; 3])> {
        let n1 = n + a.delta_n() as i64;
        let (lo, hi) = self.ranges[t + 1];
        if n1 < lo || n1 > hi {
            return None;
        }
        let s = self.lattice.price(t, j);
        let fee = self.cost.beta * a.delta_n().unsigned_abs() as f64 * s;
        Some((
            n1,
            std::array::from_fn(|k| {
                let dj = k as i32 - 1;
                Move {
                    j1: j + dj,
                    p: self.probs[k],
                    s: n1 as f64 * (self.lattice.price(t + 1, j + dj) - s) - fee,
                }
            }),
        ))
    }

    /// Terminal liability, `θ·payoff + liquidation fee`.
    fn liability(&self, j: i32, n: i64) -> f64 {
        let s = self.lattice.price(self.n_steps(), j);
        self.theta * call_payoff(s, self.strike) + self.cost.liquidation_beta * n.unsigned_abs() as f64 * s
    }

    fn build_lines(&mut self, t: usize) {
        let (lo, hi) = self.ranges[t];
        for j in -(t as i32)..=t as i32 {
            for n in lo..=hi {
                let mut lines = [(0.0, f64::INFINITY); N_ACTIONS];
                for a in crate::mdp::action_space() {
                    if let Some((n1, moves)) = self.moves(t, j, n, a) {
                        let (mut slope, mut icpt) = (0.0, 0.0);
                        for m in moves {
                            let e = m.s - self.liability(m.j1, n1);
                            slope += 2.0 * m.p * e;
                            icpt += m.p * e * e;
                        }
                        lines[a.index()] = (slope, icpt);
                    }
                }
                self.lines.set(t, j, n, lines);
            }
        }
    }

    fn build_samples(&mut self, t: usize) {
        let (lo, hi) = self.ranges[t];
        let width = (hi - lo + 1) as usize;
        let mut out = vec![f64::INFINITY; (2 * t + 1) * width * PI_GRID_POINTS];
        let mut acc = vec![0.0; PI_GRID_POINTS];
        for j in -(t as i32)..=t as i32 {
            let jk = (j + t as i32) as usize;
            let (x0, dx) = (self.pi_lo[t][jk], self.pi_step[t][jk]);
            for n in lo..=hi {
                let base = (jk * width + (n - lo) as usize) * PI_GRID_POINTS;
                let row = &mut out[base..base + PI_GRID_POINTS];
                for a in crate::mdp::action_space() {
                    let Some((n1, moves)) = self.moves(t, j, n, a) else {
                        continue;
                    };
                    let (mut es, mut es2) = (0.0, 0.0);
                    for m in &moves {
                        es += m.p * m.s;
                        es2 += m.p * m.s * m.s;
                    }
                    for (k, v) in acc.iter_mut().enumerate() {
                        *v = 2.0 * (x0 + k as f64 * dx) * es + es2;
                    }
                    for m in &moves {
                        self.accumulate_next(t + 1, m.j1, n1, m.p, x0 + m.s, dx, &mut acc);
                    }
                    for (r, v) in row.iter_mut().zip(&acc) {
                        *r = r.min(*v);
                    }
                }
            }
        }
        self.samples[t] = out;
    }

    /// `acc[k] += p·h(t, j, n, x0 + k·dx)` for every grid point.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_next(&self, t: usize, j: i32, n: i64, p: f64, x0: f64, dx: f64, acc: &mut [f64]) {
        if t + 1 == self.n_steps() {
            let lines = self.lines.get(t, j, n).expect("successor inside layer");
            for (k, v) in acc.iter_mut().enumerate() {
                let x = x0 + k as f64 * dx;
                let h = lines.iter().fold(f64::INFINITY, |m, &(a, b)| m.min(a * x + b));
                *v += p * h;
            }
            return;
        }
        let (row, lo, step) = self.sample_row(t, j, n);
        let last = (PI_GRID_POINTS - 2) as f64;
        for (k, v) in acc.iter_mut().enumerate() {
            let u = (x0 + k as f64 * dx - lo) / step;
            let i = u.floor().clamp(0.0, last);
            let f = u - i;
            let i = i as usize;
            *v += p * (row[i] + f * (row[i + 1] - row[i]));
        }
    }

    fn sample_row(&self, t: usize, j: i32, n: i64) -> (&[f64], f64, f64) {
        let (lo, hi) = self.ranges[t];
        let width = (hi - lo + 1) as usize;
        let jk = (j + t as i32) as usize;
        let base = (jk * width + (n - lo) as usize) * PI_GRID_POINTS;
        (
            &self.samples[t][base..base + PI_GRID_POINTS],
            self.pi_lo[t][jk],
            self.pi_step[t][jk],
        )
    }

    /// `h(t, j, n, Π)` for `1 ≤ t ≤ T`.
    fn h(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<f64> {
        let (lo, hi) = self.ranges[t];
        if n < lo || n > hi || j.unsigned_abs() as usize > t {
            return Err(HedgeError::UnreachableState { t, j, n });
        }
        if t == self.n_steps() {
            let x = self.liability(j, n);
            return Ok(-2.0 * pi * x + x * x);
        }
        if t + 1 == self.n_steps() {
            let lines = self.lines.get(t, j, n).expect("checked above");
            return Ok(lines.iter().fold(f64::INFINITY, |m, &(a, b)| m.min(a * pi + b)));
        }
        let (row, x0, dx) = self.sample_row(t, j, n);
        let u = ((pi - x0) / dx).clamp(f64::MIN, f64::MAX);
        let i = u.floor().clamp(0.0, (PI_GRID_POINTS - 2) as f64);
        let f = u - i;
        let i = i as usize;
        Ok(row[i] + f * (row[i + 1] - row[i]))
    }

    /// Best trade and its expected loss-to-go, one exact stage ahead of the
    /// stored surface.
    pub(crate) fn lookahead(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<(HedgeAction, f64)> {
        let (lo, hi) = self.ranges[t];
        if n < lo || n > hi || j.unsigned_abs() as usize > t {
            return Err(HedgeError::UnreachableState { t, j, n });
        }
        let mut candidates = Vec::with_capacity(N_ACTIONS);
        for a in preference_order() {
            let Some((n1, moves)) = self.moves(t, j, n, a) else {
                continue;
            };
            let mut v = 0.0;
            for m in moves {
                let next = pi + m.s;
                v += m.p * (next * next + self.h(t + 1, m.j1, n1, next)?);
            }
            candidates.push((a, v));
        }
        select_min(candidates).ok_or(HedgeError::UnreachableState { t, j, n })
    }

    pub(crate) fn value(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<f64> {
        if t >= self.n_steps() {
            return Ok(pi * pi + self.h(t, j, n, pi)?);
        }
        Ok(self.lookahead(t, j, n, pi)?.1)
    }

    /// Option value table the grids were centred on.
    #[allow(dead_code)]
    pub(crate) fn option(&self) -> &ValueTable {
        &self.option
    }
}
