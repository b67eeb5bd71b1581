use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::variance::GriddedSurface;
use super::{HoldingsGrid, ValueTable};
use crate::error::{HedgeError, Result};
use crate::market::{MarketPath, TrinomialLattice};
use crate::mdp::{HedgeAction, HedgeState, HedgingAgent, HedgingProblem, Trajectory, MAX_TRADE};
use crate::stats::fmt_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    /// Terminal variance without frictions, exact quadratic value function.
    QuadraticVariance,
    /// Terminal variance with costs, value function gridded in `Π`.
    GridVariance,
    /// Exponential utility, wealth-independent factor `G`.
    Cara,
}

/// Per-time-step storage over lattice nodes and a holdings range.
#[derive(Debug, Clone)]
pub(crate) struct Layers<T> {
    ranges: Vec<(i64, i64)>,
    data: Vec<Vec<T>>,
}

impl<T: Copy> Layers<T> {
    pub(crate) fn new(ranges: Vec<(i64, i64)>, fill: T) -> Self {
        let data = ranges
            .iter()
            .enumerate()
            .map(|(t, &(lo, hi))| vec![fill; (2 * t + 1) * (hi - lo + 1).max(0) as usize])
            .collect();
        Self { ranges, data }
    }

    pub(crate) fn range(&self, t: usize) -> (i64, i64) {
        self.ranges[t]
    }

    pub(crate) fn index(&self, t: usize, j: i32, n: i64) -> Option<usize> {
        let (lo, hi) = *self.ranges.get(t)?;
        if n < lo || n > hi || j.unsigned_abs() as usize > t {
            return None;
        }
        Some((j + t as i32) as usize * (hi - lo + 1) as usize + (n - lo) as usize)
    }

    pub(crate) fn get(&self, t: usize, j: i32, n: i64) -> Option<T> {
        self.index(t, j, n).map(|i| self.data[t][i])
    }

    pub(crate) fn set(&mut self, t: usize, j: i32, n: i64, v: T) {
        let i = self.index(t, j, n).expect("index inside layer");
        self.data[t][i] = v;
    }
}

#[derive(Debug, Clone)]
pub(crate) enum ValueSurface {
    /// `V = (Π − θ·C(t, j))² + R(t, j, n)`.
    Quadratic {
        option: ValueTable,
        residual: Layers<f64>,
        actions: Layers<i8>,
    },
    /// `V = exp(−λΠ + log G(t, j, n))`.
    Exponential {
        lambda: f64,
        log_g: Layers<f64>,
        actions: Layers<i8>,
    },
    Gridded(Box<GriddedSurface>),
}

/// Optimal hedging policy with its value surface.
#[derive(Debug, Clone)]
pub struct HedgePolicyTable {
    pub(crate) kind: SolverKind,
    pub(crate) lattice: TrinomialLattice,
    /// Number of calls sold; negative for a long option position.
    pub(crate) position: f64,
    pub(crate) grid: HoldingsGrid,
    pub(crate) root_holdings: i64,
    pub(crate) surface: ValueSurface,
}

impl HedgePolicyTable {
    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn grid(&self) -> HoldingsGrid {
        self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.lattice.n_steps()
    }

    /// Optimal trade when it does not depend on the portfolio value.
    pub fn wealth_independent_action(&self, t: usize, j: i32, n: i64) -> Option<HedgeAction> {
        match &self.surface {
            ValueSurface::Quadratic { actions, .. } | ValueSurface::Exponential { actions, .. } => {
                actions.get(t, j, n).map(|a| HedgeAction::new(a as i32).expect("stored trades are valid"))
            }
            ValueSurface::Gridded(_) => None,
        }
    }

    pub fn action(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<HedgeAction> {
        if t >= self.n_steps() {
            return Err(HedgeError::OutOfHorizon {
                t,
                n_steps: self.n_steps(),
            });
        }
        match &self.surface {
            ValueSurface::Gridded(g) => g.lookahead(t, j, n, pi).map(|(a, _)| a),
            _ => self
                .wealth_independent_action(t, j, n)
                .ok_or(HedgeError::UnreachableState { t, j, n }),
        }
    }

    /// Expected raw loss-to-go from `(t, j, n)` with portfolio value `pi`
    /// under the optimal policy.
    pub fn value(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<f64> {
        match &self.surface {
            ValueSurface::Quadratic { option, residual, .. } => {
                let r = residual.get(t, j, n).ok_or(HedgeError::UnreachableState { t, j, n })?;
                Ok((pi - self.position * option.value(t, j)).powi(2) + r)
            }
            ValueSurface::Exponential { .. } => Ok(self.log_value(t, j, n, pi)?.exp()),
            ValueSurface::Gridded(g) => g.value(t, j, n, pi),
        }
    }

    /// Natural logarithm of [`Self::value`]; finite for CARA even when the
    /// value itself overflows.
    pub fn log_value(&self, t: usize, j: i32, n: i64, pi: f64) -> Result<f64> {
        match &self.surface {
            ValueSurface::Exponential { lambda, log_g, .. } => {
                let g = log_g.get(t, j, n).ok_or(HedgeError::UnreachableState { t, j, n })?;
                Ok(-lambda * pi + g)
            }
            _ => Ok(self.value(t, j, n, pi)?.ln()),
        }
    }

    pub fn root_value(&self, capital: f64) -> Result<f64> {
        self.value(0, 0, self.root_holdings, capital)
    }

    pub fn root_log_value(&self, capital: f64) -> Result<f64> {
        self.log_value(0, 0, self.root_holdings, capital)
    }

    pub fn root_action(&self, capital: f64) -> Result<HedgeAction> {
        self.action(0, 0, self.root_holdings, capital)
    }

    /// `log G(t, j, n)` of the CARA solver.
    pub fn log_factor(&self, t: usize, j: i32, n: i64) -> Option<f64> {
        match &self.surface {
            ValueSurface::Exponential { log_g, .. } => log_g.get(t, j, n),
            _ => None,
        }
    }

    /// Residual risk `R(t, j, n)` of the quadratic solver.
    pub fn residual(&self, t: usize, j: i32, n: i64) -> Option<f64> {
        match &self.surface {
            ValueSurface::Quadratic { residual, .. } => residual.get(t, j, n),
            _ => None,
        }
    }

    /// Root hedge ratio of the frictionless variance solver, relaxed to a
    /// continuous share count: the vertex of the parabola through the root
    /// objective at the optimal trade and its two neighbours, divided by the
    /// number of options.
    pub fn relaxed_root_hedge(&self) -> Result<f64> {
        let ValueSurface::Quadratic { option, residual, .. } = &self.surface else {
            return Err(HedgeError::InvalidParameter(
                "relaxed hedge needs the frictionless variance solver".into(),
            ));
        };
        let n0 = self.root_holdings;
        let objective = |n1: i64| -> Option<f64> {
            let mut acc = 0.0;
            for (dj, p) in [-1, 0, 1].into_iter().zip(self.lattice.move_probabilities()) {
                let ds = self.lattice.price(1, dj) - self.lattice.price(0, 0);
                let dc = self.position * (option.value(1, dj) - option.value(0, 0));
                acc += p * ((n1 as f64 * ds - dc).powi(2) + residual.get(1, dj, n1)?);
            }
            Some(acc)
        };
        let best = n0
            + self
                .wealth_independent_action(0, 0, n0)
                .ok_or(HedgeError::UnreachableState { t: 0, j: 0, n: n0 })?
                .delta_n() as i64;
        let (Some(fm), Some(f0), Some(fp)) = (objective(best - 1), objective(best), objective(best + 1))
        else {
            return Err(HedgeError::GridExhausted {
                min: self.grid.min,
                max: self.grid.max,
            });
        };
        let curvature = fm - 2.0 * f0 + fp;
        let vertex = if curvature > 0.0 {
            best as f64 + 0.5 * (fm - fp) / curvature
        } else {
            best as f64
        };
        Ok(vertex / self.position)
    }

    /// Walks every state reachable from the root under the optimal policy and
    /// fails if any of them had trades cut off by the holdings grid.
    pub(crate) fn check_grid(&self) -> Result<()> {
        let mut frontier: HashSet<(i32, i64)> = HashSet::from([(0, self.root_holdings)]);
        let probs = self.lattice.move_probabilities();
        for t in 0..self.n_steps() {
            let mut next = HashSet::new();
            for &(j, n) in &frontier {
                if !self.grid.all_trades_feasible(n) {
                    return Err(HedgeError::GridExhausted {
                        min: self.grid.min,
                        max: self.grid.max,
                    });
                }
                let a = self
                    .wealth_independent_action(t, j, n)
                    .ok_or(HedgeError::UnreachableState { t, j, n })?;
                for (dj, p) in [-1, 0, 1].into_iter().zip(probs) {
                    if p > 0.0 {
                        next.insert((j + dj, n + a.delta_n() as i64));
                    }
                }
            }
            frontier = next;
        }
        Ok(())
    }

    /// Dumps the wealth-independent policy: one row per `(t, j, n)` with the
    /// optimal trade and the holdings-dependent part of the value
    /// (`R` for variance, `log G` for CARA).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let (actions, part): (&Layers<i8>, &Layers<f64>) = match &self.surface {
            ValueSurface::Quadratic {
                actions, residual, ..
            } => (actions, residual),
            ValueSurface::Exponential { actions, log_g, .. } => (actions, log_g),
            ValueSurface::Gridded(_) => {
                return Err(HedgeError::InvalidParameter(
                    "the gridded solver's policy depends on wealth and has no flat table".into(),
                ))
            }
        };
        writeln!(out, "t,j,n,delta_n,value")?;
        for t in 0..self.n_steps() {
            let (lo, hi) = actions.range(t);
            for j in -(t as i32)..=t as i32 {
                for n in lo..=hi {
                    let a = actions.get(t, j, n).expect("inside range");
                    let v = part.get(t, j, n).expect("inside range");
                    writeln!(out, "{t},{j},{n},{a},{}", fmt_sig(v))?;
                }
            }
        }
        Ok(())
    }
}

impl HedgingAgent for HedgePolicyTable {
    fn run_episode(&self, problem: &HedgingProblem, path: &MarketPath, _seed: u64) -> Result<Trajectory> {
        problem.replay(path, |s: &HedgeState| {
            self.action(s.t, s.j, s.n, s.portfolio_value(&problem.lattice))
        })
    }
}

/// Terminal P&L of the optimal policy on each path, with costs switched off.
pub fn optimal_baseline_pnl(
    policy: &HedgePolicyTable,
    paths: &[MarketPath],
    problem: &HedgingProblem,
) -> Result<Vec<f64>> {
    let frictionless = problem.frictionless();
    paths
        .iter()
        .map(|path| {
            let traj = policy.run_episode(&frictionless, path, 0)?;
            frictionless.terminal_wealth(traj.terminal())
        })
        .collect()
}

/// Holdings reachable from `n0` after `t` trades, clipped to the grid.
pub(crate) fn reachable_range(grid: &HoldingsGrid, n0: i64, t: usize) -> (i64, i64) {
    let h = MAX_TRADE as i64 * t as i64;
    ((n0 - h).max(grid.min), (n0 + h).min(grid.max))
}
