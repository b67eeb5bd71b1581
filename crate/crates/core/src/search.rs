//! UCT over alternating decision and chance nodes.
//!
//! Decision nodes hold one edge per trade. Chance nodes sit on edges and
//! sample the market move from the lattice. Each simulation adds at most one
//! decision node, evaluates it and backs the gauged reward up the path.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apprentice::{Apprentice, Prediction};
use crate::error::{HedgeError, Result};
use crate::market::{MarketPath, Node};
use crate::mdp::{tie_rank, HedgeAction, HedgeState, HedgingAgent, HedgingProblem, Trajectory, N_ACTIONS};
use crate::stats::{fmt_sig, seeded_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Uniform random trades to maturity.
    Random,
    /// Trades with the apprentice's most likely action to maturity.
    ApprenticeGreedy,
    /// The apprentice value head, no rollout.
    ValueBootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub sims_per_move: usize,
    pub w_ucb: f64,
    pub prior_weight_scale: f64,
    pub rollout_mode: RolloutMode,
    /// Exponent applied to visit counts when sampling the played action;
    /// zero plays the most visited action.
    pub temperature: f64,
    /// Keep the subtree under the realised outcome between moves.
    pub reuse_subtree: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            sims_per_move: 25,
            w_ucb: 1.0,
            prior_weight_scale: 1.0,
            rollout_mode: RolloutMode::Random,
            temperature: 1.0,
            reuse_subtree: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sims_per_move == 0 {
            return Err(HedgeError::InvalidParameter("sims_per_move must be at least 1".into()));
        }
        if !(self.w_ucb.is_finite() && self.w_ucb > 0.0) {
            return Err(HedgeError::InvalidParameter("w_ucb must be positive".into()));
        }
        if !(self.prior_weight_scale.is_finite() && self.prior_weight_scale >= 0.0) {
            return Err(HedgeError::InvalidParameter("prior_weight_scale must be non-negative".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(HedgeError::InvalidParameter("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// `mean + w·sqrt(2·ln(n)/n_i)`.
pub fn ucb1(mean: f64, w: f64, n: f64, n_i: f64) -> f64 {
    mean + w * (2.0 * n.ln() / n_i).sqrt()
}

/// UCB1 plus the prior bonus `scale·sqrt(n)·prior/(n_a + 1)`.
pub fn nucb1(ucb1_score: f64, prior: f64, n_a: f64, n: f64, scale: f64) -> f64 {
    ucb1_score + scale * n.sqrt() * prior / (n_a + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStats {
    pub visits: u32,
    pub value_sum: f64,
    pub prior: f64,
}

impl EdgeStats {
    pub fn mean(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.value_sum / self.visits as f64)
    }
}

#[derive(Debug, Clone)]
struct Edge {
    stats: EdgeStats,
    chance: Option<usize>,
}

#[derive(Debug, Clone)]
struct DecisionNode {
    state: HedgeState,
    visits: u32,
    terminal: bool,
    /// Value head output at creation (or exact reward when terminal).
    value: f64,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone)]
struct ChanceNode {
    /// Successors by move index: down, middle, up.
    children: [Option<usize>; 3],
    counts: [u32; 3],
}

/// Search tree rooted at the current decision.
#[derive(Debug, Clone)]
pub struct SearchTree {
    decisions: Vec<DecisionNode>,
    chances: Vec<ChanceNode>,
    root: usize,
    /// Apprentice evaluations made while building this tree.
    evaluations: usize,
}

/// Snapshot of one edge for inspection and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootEdge {
    pub action: HedgeAction,
    pub stats: EdgeStats,
}

impl SearchTree {
    pub fn new<A: Apprentice + ?Sized>(
        state: HedgeState,
        problem: &HedgingProblem,
        apprentice: &A,
    ) -> Result<Self> {
        let mut tree = Self {
            decisions: Vec::new(),
            chances: Vec::new(),
            root: 0,
            evaluations: 0,
        };
        tree.root = tree.add_decision(state, problem, apprentice)?;
        Ok(tree)
    }

    fn add_decision<A: Apprentice + ?Sized>(
        &mut self,
        state: HedgeState,
        problem: &HedgingProblem,
        apprentice: &A,
    ) -> Result<usize> {
        let terminal = state.is_terminal(&problem.lattice);
        let (edges, value) = if terminal {
            (Vec::new(), problem.reward(&state)?)
        } else {
            let Prediction { policy, value } = apprentice.predict(&state, problem)?;
            self.evaluations += 1;
            let edges = policy
                .iter()
                .map(|&prior| Edge {
                    stats: EdgeStats {
                        visits: 0,
                        value_sum: 0.0,
                        prior,
                    },
                    chance: None,
                })
                .collect();
            (edges, value)
        };
        self.decisions.push(DecisionNode {
            state,
            visits: 1,
            terminal,
            value,
            edges,
        });
        Ok(self.decisions.len() - 1)
    }

    pub fn root_state(&self) -> &HedgeState {
        &self.decisions[self.root].state
    }

    pub fn root_visits(&self) -> u32 {
        self.decisions[self.root].visits
    }

    pub fn root_edges(&self) -> Vec<RootEdge> {
        self.decisions[self.root]
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| RootEdge {
                action: HedgeAction::from_index(i),
                stats: e.stats,
            })
            .collect()
    }

    /// Visit-weighted mean value over the root edges.
    pub fn root_value(&self) -> f64 {
        let root = &self.decisions[self.root];
        let (n, w) = root
            .edges
            .iter()
            .fold((0u32, 0.0), |(n, w), e| (n + e.stats.visits, w + e.stats.value_sum));
        if n == 0 {
            root.value
        } else {
            w / n as f64
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn node_count(&self) -> usize {
        self.decisions.len()
    }

    /// Outcome counts of the chance node under a root action.
    pub fn chance_counts(&self, action: HedgeAction) -> Option<[u32; 3]> {
        let c = self.decisions[self.root].edges.get(action.index())?.chance?;
        Some(self.chances[c].counts)
    }

    /// Checks visit conservation and value bounds on every decision node.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, d) in self.decisions.iter().enumerate() {
            if d.terminal {
                continue;
            }
            let total: u32 = d.edges.iter().map(|e| e.stats.visits).sum();
            if total + 1 != d.visits {
                return Err(HedgeError::Numeric(format!(
                    "node {i}: edge visits {total} vs node visits {}",
                    d.visits
                )));
            }
            for e in &d.edges {
                if let Some(m) = e.stats.mean() {
                    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&m) {
                        return Err(HedgeError::Numeric(format!("node {i}: edge mean {m} outside [-1, 1]")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Edge picked by the tree policy: unvisited edges first, then NUCB1;
    /// ties go to the larger prior, then the lower action index.
    fn select_edge(&self, node: usize, cfg: &SearchConfig) -> usize {
        let d = &self.decisions[node];
        let n = d.visits as f64;
        let score = |e: &Edge| -> (bool, f64) {
            match e.stats.mean() {
                None => (true, 0.0),
                Some(mean) => {
                    let u = ucb1(mean, cfg.w_ucb, n, e.stats.visits as f64);
                    (
                        false,
                        nucb1(u, e.stats.prior, e.stats.visits as f64, n, cfg.prior_weight_scale),
                    )
                }
            }
        };
        let mut best = 0;
        let mut best_key = (score(&d.edges[0]), d.edges[0].stats.prior);
        for (i, e) in d.edges.iter().enumerate().skip(1) {
            let key = (score(e), e.stats.prior);
            let better = match (key.0 .0, best_key.0 .0) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => key.1 > best_key.1,
                (false, false) => key.0 .1 > best_key.0 .1 || (key.0 .1 == best_key.0 .1 && key.1 > best_key.1),
            };
            if better {
                best = i;
                best_key = key;
            }
        }
        best
    }

    /// One selection, expansion, evaluation and backup.
    pub fn simulate<A: Apprentice + ?Sized>(
        &mut self,
        cfg: &SearchConfig,
        problem: &HedgingProblem,
        apprentice: &A,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let mut path: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut node = self.root;
        let (leaf, z, created) = loop {
            if self.decisions[node].terminal {
                break (node, self.decisions[node].value, false);
            }
            let e = self.select_edge(node, cfg);
            let action = HedgeAction::from_index(e);
            let state = self.decisions[node].state;
            let chance = match self.decisions[node].edges[e].chance {
                Some(c) => c,
                None => {
                    self.chances.push(ChanceNode {
                        children: [None; 3],
                        counts: [0; 3],
                    });
                    let c = self.chances.len() - 1;
                    self.decisions[node].edges[e].chance = Some(c);
                    c
                }
            };
            let next = problem.lattice.sample_transition(state.node(), rng)?;
            let k = (next.j - state.j + 1) as usize;
            path.push((node, e, chance, k));
            match self.chances[chance].children[k] {
                Some(child) => node = child,
                None => {
                    let child_state = problem.step(&state, action, next)?;
                    let child = self.add_decision(child_state, problem, apprentice)?;
                    self.chances[chance].children[k] = Some(child);
                    let z = self.evaluate_new(child, cfg, problem, apprentice, rng)?;
                    break (child, z, true);
                }
            }
        };
        if !(-1.0..=1.0).contains(&z) {
            return Err(HedgeError::Numeric(format!("leaf value {z} outside [-1, 1]")));
        }
        self.backpropagate(&path, z);
        // a new node already counts its first visit
        if !created && leaf != self.root {
            self.decisions[leaf].visits += 1;
        }
        Ok(z)
    }

    fn evaluate_new<A: Apprentice + ?Sized>(
        &self,
        node: usize,
        cfg: &SearchConfig,
        problem: &HedgingProblem,
        apprentice: &A,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let d = &self.decisions[node];
        if d.terminal || cfg.rollout_mode == RolloutMode::ValueBootstrap {
            return Ok(d.value);
        }
        evaluate_leaf(&d.state, cfg.rollout_mode, problem, apprentice, rng)
    }

    fn backpropagate(&mut self, path: &[(usize, usize, usize, usize)], z: f64) {
        for &(node, e, chance, k) in path {
            let d = &mut self.decisions[node];
            d.visits += 1;
            d.edges[e].stats.visits += 1;
            d.edges[e].stats.value_sum += z;
            self.chances[chance].counts[k] += 1;
        }
    }

    /// Keeps the subtree below `action` and the realised move; starts afresh
    /// when that branch was never explored.
    pub fn advance<A: Apprentice + ?Sized>(
        self,
        action: HedgeAction,
        next: Node,
        problem: &HedgingProblem,
        apprentice: &A,
        reuse: bool,
    ) -> Result<Self> {
        let root = &self.decisions[self.root];
        let k = (next.j - root.state.j + 1) as usize;
        let child = root.edges[action.index()]
            .chance
            .and_then(|c| self.chances[c].children[k]);
        match child {
            Some(c) if reuse => Ok(self.extract(c)),
            _ => {
                let state = problem.step(&root.state, action, next)?;
                Self::new(state, problem, apprentice)
            }
        }
    }

    fn extract(&self, new_root: usize) -> Self {
        let mut out = Self {
            decisions: Vec::new(),
            chances: Vec::new(),
            root: 0,
            evaluations: 0,
        };
        out.copy_decision(self, new_root);
        out
    }

    fn copy_decision(&mut self, src: &SearchTree, idx: usize) -> usize {
        let d = &src.decisions[idx];
        self.decisions.push(DecisionNode {
            edges: Vec::new(),
            ..d.clone()
        });
        let me = self.decisions.len() - 1;
        let mut edges = d.edges.clone();
        for edge in edges.iter_mut() {
            if let Some(c) = edge.chance {
                let node = &src.chances[c];
                let mut children = [None; 3];
                for (k, child) in node.children.iter().enumerate() {
                    children[k] = child.map(|ch| self.copy_decision(src, ch));
                }
                self.chances.push(ChanceNode {
                    children,
                    counts: node.counts,
                });
                edge.chance = Some(self.chances.len() - 1);
            }
        }
        self.decisions[me].edges = edges;
        me
    }

    /// `n_a / Σ n` over the root edges.
    pub fn policy_target(&self) -> [f64; N_ACTIONS] {
        let edges = &self.decisions[self.root].edges;
        let total: u32 = edges.iter().map(|e| e.stats.visits).sum();
        let mut target = [0.0; N_ACTIONS];
        if total == 0 {
            return target;
        }
        for (t, e) in target.iter_mut().zip(edges) {
            *t = e.stats.visits as f64 / total as f64;
        }
        target
    }

    /// Most visited root action; ties go to the higher mean value, then to
    /// fewer shares traded, selling before buying.
    pub fn best_action(&self) -> HedgeAction {
        let edges = &self.decisions[self.root].edges;
        let key = |i: usize| {
            let s = edges[i].stats;
            (s.visits, s.mean().unwrap_or(f64::NEG_INFINITY))
        };
        let mut best = HedgeAction::HOLD.index();
        for i in 0..N_ACTIONS {
            let (n, m) = key(i);
            let (bn, bm) = key(best);
            let a = HedgeAction::from_index(i).delta_n();
            let b = HedgeAction::from_index(best).delta_n();
            if n > bn || (n == bn && (m > bm || (m == bm && tie_rank(a) < tie_rank(b)))) {
                best = i;
            }
        }
        HedgeAction::from_index(best)
    }

    /// Samples a root action with probability proportional to
    /// `n_a^(1/temperature)`.
    pub fn sample_action(&self, temperature: f64, rng: &mut SimRng) -> HedgeAction {
        if temperature == 0.0 {
            return self.best_action();
        }
        let edges = &self.decisions[self.root].edges;
        let max = edges.iter().map(|e| e.stats.visits).max().unwrap_or(0);
        if max == 0 {
            return self.best_action();
        }
        let weights: Vec<f64> = edges
            .iter()
            .map(|e| (e.stats.visits as f64 / max as f64).powf(1.0 / temperature))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 && x < *w {
                return HedgeAction::from_index(i);
            }
            x -= w;
        }
        self.best_action()
    }
}

/// Value estimate of a non-terminal state by rollout or value head.
pub fn evaluate_leaf<A: Apprentice + ?Sized>(
    state: &HedgeState,
    mode: RolloutMode,
    problem: &HedgingProblem,
    apprentice: &A,
    rng: &mut SimRng,
) -> Result<f64> {
    if state.is_terminal(&problem.lattice) {
        return problem.reward(state);
    }
    match mode {
        RolloutMode::ValueBootstrap => Ok(apprentice.predict(state, problem)?.value),
        RolloutMode::Random | RolloutMode::ApprenticeGreedy => {
            let mut s = *state;
            while !s.is_terminal(&problem.lattice) {
                let a = if mode == RolloutMode::Random {
                    HedgeAction::from_index(rng.gen_range(0..N_ACTIONS))
                } else {
                    greedy(&apprentice.predict(&s, problem)?.policy)
                };
                let next = problem.lattice.sample_transition(s.node(), rng)?;
                s = problem.step(&s, a, next)?;
            }
            problem.reward(&s)
        }
    }
}

/// Most likely action; ties go to fewer shares traded.
pub fn greedy(policy: &[f64; N_ACTIONS]) -> HedgeAction {
    let mut best = HedgeAction::HOLD;
    for a in crate::oracle::preference_order() {
        if policy[a.index()] > policy[best.index()] {
            best = a;
        }
    }
    best
}

/// Outcome of one search at the current decision.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveResult {
    pub action: HedgeAction,
    pub target: [f64; N_ACTIONS],
    pub root_value: f64,
}

/// Runs `cfg.sims_per_move` simulations from the tree root and picks the
/// move to play at `temperature`.
pub fn search_move<A: Apprentice + ?Sized>(
    tree: &mut SearchTree,
    cfg: &SearchConfig,
    temperature: f64,
    problem: &HedgingProblem,
    apprentice: &A,
    rng: &mut SimRng,
) -> Result<MoveResult> {
    if tree.root_state().is_terminal(&problem.lattice) {
        return Err(HedgeError::OutOfHorizon {
            t: tree.root_state().t,
            n_steps: problem.n_steps(),
        });
    }
    for _ in 0..cfg.sims_per_move {
        tree.simulate(cfg, problem, apprentice, rng)?;
    }
    Ok(MoveResult {
        action: tree.sample_action(temperature, rng),
        target: tree.policy_target(),
        root_value: tree.root_value(),
    })
}

/// Per-move search statistics, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub t: usize,
    pub j: i32,
    pub n: i64,
    pub action: i32,
    pub root_value: f64,
    pub visits: Vec<u32>,
}

impl MoveStats {
    pub fn write_json_line<W: Write>(&self, mut out: W) -> Result<()> {
        let line = serde_json::to_string(self).map_err(|e| HedgeError::Numeric(e.to_string()))?;
        writeln!(out, "{line}")?;
        Ok(())
    }
}

/// One searched episode: the trajectory plus the root visit distribution
/// at each decision.
#[derive(Debug, Clone)]
pub struct SearchedEpisode {
    pub trajectory: Trajectory,
    pub targets: Vec<[f64; N_ACTIONS]>,
    pub stats: Vec<MoveStats>,
}

/// Plays a full episode along `path`, searching before every decision.
pub fn play_episode<A: Apprentice + ?Sized>(
    problem: &HedgingProblem,
    path: &MarketPath,
    cfg: &SearchConfig,
    temperature: f64,
    apprentice: &A,
    seed: u64,
) -> Result<SearchedEpisode> {
    let mut rng = seeded_rng(seed);
    let mut tree = SearchTree::new(problem.initial_state(), problem, apprentice)?;
    let mut states = vec![problem.initial_state()];
    let mut actions = Vec::with_capacity(problem.n_steps());
    let mut targets = Vec::with_capacity(problem.n_steps());
    let mut stats = Vec::with_capacity(problem.n_steps());
    for &next in &path.nodes()[1..] {
        let mv = search_move(&mut tree, cfg, temperature, problem, apprentice, &mut rng)?;
        let state = *tree.root_state();
        stats.push(MoveStats {
            t: state.t,
            j: state.j,
            n: state.n,
            action: mv.action.delta_n(),
            root_value: mv.root_value,
            visits: tree.root_edges().iter().map(|e| e.stats.visits).collect(),
        });
        let after = problem.step(&state, mv.action, next)?;
        tree = tree.advance(mv.action, next, problem, apprentice, cfg.reuse_subtree)?;
        debug_assert_eq!(*tree.root_state(), after);
        actions.push(mv.action);
        targets.push(mv.target);
        states.push(after);
    }
    Ok(SearchedEpisode {
        trajectory: Trajectory { states, actions },
        targets,
        stats,
    })
}

/// Greedy search agent used for evaluation and assessment.
pub struct SearchAgent<'a, A: Apprentice + ?Sized> {
    pub config: SearchConfig,
    pub apprentice: &'a A,
}

impl<A: Apprentice + ?Sized> HedgingAgent for SearchAgent<'_, A> {
    fn run_episode(&self, problem: &HedgingProblem, path: &MarketPath, seed: u64) -> Result<Trajectory> {
        Ok(play_episode(problem, path, &self.config, 0.0, self.apprentice, seed)?.trajectory)
    }
}

/// Formats a visit vector for log lines.
pub fn format_visits(visits: &[u32]) -> String {
    visits.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Short human-readable root summary.
pub fn describe_root(tree: &SearchTree) -> String {
    format!(
        "visits={} value={} best={}",
        tree.root_visits(),
        fmt_sig(tree.root_value()),
        tree.best_action().delta_n()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apprentice::TabularApprentice;
    use crate::instruments::{CallContract, CostModel};
    use crate::market::{MarketParams, TrinomialLattice};
    use crate::mdp::{GaugeParams, RewardModel};

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb1(0.5, 1.0, 1.0, 1.0), 0.5);
        let e2 = std::f64::consts::E.powi(2);
        assert!((ucb1(0.0, 1.0, e2, 1.0) - 2.0).abs() < 1e-12);
        assert!(ucb1(0.6, 1.0, 20.0, 10.0) > ucb1(0.5, 1.0, 20.0, 10.0));
        assert_eq!(nucb1(0.3, 0.0, 4.0, 9.0, 1.0), 0.3);
        assert!((nucb1(0.0, 1.0 / 21.0, 0.0, 1.0, 1.0) - 1.0 / 21.0).abs() < 1e-15);
        let b1 = nucb1(0.0, 0.2, 3.0, 50.0, 1.0);
        let b2 = nucb1(0.0, 0.2, 3.0, 100.0, 1.0);
        assert!((b2 / b1 - 2f64.sqrt()).abs() < 1e-12);
    }

    /// One-step deterministic market where each trade has a known reward.
    fn toy() -> HedgingProblem {
        let p = MarketParams::new(90.0, 0.3, 60.0, 1);
        let lat = TrinomialLattice::from_parts(p, 1.05, 0.0, 1.0, 0.0).unwrap();
        // K = 80 is in the money: w = Π − 10, best with Π = 10 whatever the trade
        // costs make every trade strictly worse than holding
        HedgingProblem::with_gauge(
            lat,
            CallContract::single(80.0),
            CostModel::proportional(0.001).unwrap(),
            RewardModel::TerminalVariance,
            10.0,
            GaugeParams::new(4.0, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_toy_finds_the_best_action() {
        let pr = toy();
        let app = TabularApprentice::default();
        let cfg = SearchConfig::default();
        let mut tree = SearchTree::new(pr.initial_state(), &pr, &app).unwrap();
        let mut rng = seeded_rng(1);
        let mv = search_move(&mut tree, &SearchConfig { sims_per_move: 200, ..cfg }, 0.0, &pr, &app, &mut rng)
            .unwrap();
        assert_eq!(mv.action, HedgeAction::HOLD);
        assert!(mv.target[HedgeAction::HOLD.index()] > 1.0 / 21.0);
        tree.check_invariants().unwrap();
        // every simulation went through the middle branch
        assert_eq!(tree.chance_counts(HedgeAction::HOLD).unwrap()[0], 0);
        assert_eq!(tree.chance_counts(HedgeAction::HOLD).unwrap()[2], 0);
    }

    #[test]
    fn first_simulations_visit_unvisited_edges() {
        let pr = toy();
        let app = TabularApprentice::default();
        let cfg = SearchConfig::default();
        let mut tree = SearchTree::new(pr.initial_state(), &pr, &app).unwrap();
        let mut rng = seeded_rng(2);
        tree.simulate(&cfg, &pr, &app, &mut rng).unwrap();
        assert_eq!(tree.root_edges().iter().filter(|e| e.stats.visits > 0).count(), 1);
        for _ in 0..20 {
            tree.simulate(&cfg, &pr, &app, &mut rng).unwrap();
        }
        assert!(tree.root_edges().iter().all(|e| e.stats.visits == 1));
        assert_eq!(tree.root_visits(), 22);
    }

    #[test]
    fn targets_are_visit_fractions() {
        let lat = TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, 4)).unwrap();
        let pr = HedgingProblem::new(
            lat,
            CallContract::new(90.0, 5.0).unwrap(),
            CostModel::FRICTIONLESS,
            RewardModel::TerminalVariance,
            0.0,
        )
        .unwrap();
        let app = TabularApprentice::default();
        let mut tree = SearchTree::new(pr.initial_state(), &pr, &app).unwrap();
        let mut rng = seeded_rng(3);
        let mv = search_move(&mut tree, &SearchConfig::default(), 1.0, &pr, &app, &mut rng).unwrap();
        let sum: f64 = mv.target.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for x in mv.target {
            assert!((x * 25.0 - (x * 25.0).round()).abs() < 1e-9);
        }
        tree.check_invariants().unwrap();
        assert!(tree.root_edges().iter().all(|e| e.stats.mean().map_or(true, |m| m.abs() <= 1.0)));
    }
}
