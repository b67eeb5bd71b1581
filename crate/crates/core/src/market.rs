//! Recombining trinomial lattice and market path sampling.
//!
//! Nodes are addressed by `(t, j)` where `j` is the net number of up-moves
//! after `t` steps, so `j ∈ [-t, t]` and the node price is `s0 · u^j`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::stats::fmt_sig;

/// Calendar days per year used to turn maturities into year fractions.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub s0: f64,
    /// Annualised volatility.
    pub sigma: f64,
    pub maturity_days: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub dividend: f64,
}

impl MarketParams {
    pub fn new(s0: f64, sigma: f64, maturity_days: f64, n_steps: usize) -> Self {
        Self {
            s0,
            sigma,
            maturity_days,
            n_steps,
            rate: 0.0,
            dividend: 0.0,
        }
    }

    /// Length of one trading step in years.
    pub fn dt(&self) -> f64 {
        self.maturity_days / DAYS_PER_YEAR / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(HedgeError::InvalidParameter(msg.to_string()));
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return bad("s0 must be positive");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if !(self.maturity_days.is_finite() && self.maturity_days > 0.0) {
            return bad("maturity_days must be positive");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if !(self.rate.is_finite() && self.dividend.is_finite()) {
            return bad("rate and dividend must be finite");
        }
        Ok(())
    }
}

/// Lattice coordinate: time step and net up-move count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub t: usize,
    pub j: i32,
}

impl Node {
    pub const ROOT: Node = Node { t: 0, j: 0 };

    pub fn new(t: usize, j: i32) -> Self {
        Self { t, j }
    }

    /// Successor after a move of `dj ∈ {-1, 0, 1}`.
    pub fn child(self, dj: i32) -> Node {
        Node {
            t: self.t + 1,
            j: self.j + dj,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrinomialLattice {
    params: MarketParams,
    u: f64,
    p_u: f64,
    p_m: f64,
    p_d: f64,
}

impl TrinomialLattice {
    /// Boyle-style lattice with stretch √2: `u = exp(σ√(2Δt))`, `m = 1`,
    /// `d = 1/u`, and probabilities matched over two half steps.
    pub fn new(params: MarketParams) -> Result<Self> {
        params.validate()?;
        let dt = params.dt();
        let half = params.sigma * (dt / 2.0).sqrt();
        let drift = ((params.rate - params.dividend) * dt / 2.0).exp();
        let (up, down) = (half.exp(), (-half).exp());
        let p_u = ((drift - down) / (up - down)).powi(2);
        let p_d = ((up - drift) / (up - down)).powi(2);
        let u = (params.sigma * (2.0 * dt).sqrt()).exp();
        Self::from_parts(params, u, p_u, 1.0 - p_u - p_d, p_d)
    }

    /// Hand-built lattice, mainly for degenerate test instances such as
    /// `p_m = 1`.
    pub fn from_parts(params: MarketParams, u: f64, p_u: f64, p_m: f64, p_d: f64) -> Result<Self> {
        params.validate()?;
        if !(u.is_finite() && u > 1.0) {
            return Err(HedgeError::InvalidParameter(format!(
                "up factor must exceed 1, got {u}"
            )));
        }
        for p in [p_u, p_m, p_d] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HedgeError::InvalidParameter(format!(
                    "transition probability {p} outside [0, 1]"
                )));
            }
        }
        if (p_u + p_m + p_d - 1.0).abs() > 1e-12 {
            return Err(HedgeError::InvalidParameter(
                "transition probabilities must sum to 1".into(),
            ));
        }
        Ok(Self {
            params,
            u,
            p_u,
            p_m,
            p_d,
        })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps
    }

    pub fn up(&self) -> f64 {
        self.u
    }

    pub fn down(&self) -> f64 {
        1.0 / self.u
    }

    /// `(p_u, p_m, p_d)`.
    pub fn transition_probabilities(&self) -> (f64, f64, f64) {
        (self.p_u, self.p_m, self.p_d)
    }

    /// Probabilities indexed by move `dj + 1`, i.e. `[p_d, p_m, p_u]`.
    pub fn move_probabilities(&self) -> [f64; 3] {
        [self.p_d, self.p_m, self.p_u]
    }

    pub fn price(&self, t: usize, j: i32) -> f64 {
        debug_assert!(j.unsigned_abs() as usize <= t);
        self.params.s0 * self.u.powi(j)
    }

    pub fn node_price(&self, node: Node) -> f64 {
        self.price(node.t, node.j)
    }

    /// Total number of nodes, `(n_steps + 1)^2`.
    pub fn node_count(&self) -> usize {
        (self.params.n_steps + 1).pow(2)
    }

    /// Draws the next node. Uses exactly one uniform draw.
    pub fn sample_transition<R: Rng + ?Sized>(&self, node: Node, rng: &mut R) -> Result<Node> {
        if node.t >= self.params.n_steps {
            return Err(HedgeError::OutOfHorizon {
                t: node.t,
                n_steps: self.params.n_steps,
            });
        }
        let x: f64 = rng.gen();
        let dj = if x < self.p_d {
            -1
        } else if x < self.p_d + self.p_m {
            0
        } else {
            1
        };
        Ok(node.child(dj))
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> MarketPath {
        let mut nodes = Vec::with_capacity(self.params.n_steps + 1);
        let mut node = Node::ROOT;
        nodes.push(node);
        while node.t < self.params.n_steps {
            node = self
                .sample_transition(node, rng)
                .expect("node is inside the horizon");
            nodes.push(node);
        }
        MarketPath { nodes }
    }

    /// Writes `t,j,price,p_u,p_m,p_d` for every node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,j,price,p_u,p_m,p_d")?;
        for t in 0..=self.params.n_steps {
            for j in -(t as i32)..=(t as i32) {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    t,
                    j,
                    fmt_sig(self.price(t, j)),
                    fmt_sig(self.p_u),
                    fmt_sig(self.p_m),
                    fmt_sig(self.p_d)
                )?;
            }
        }
        Ok(())
    }
}

/// One realised market trajectory from `(0, 0)` to maturity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketPath {
    nodes: Vec<Node>,
}

impl MarketPath {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.first() != Some(&Node::ROOT) {
            return Err(HedgeError::InvalidParameter("path must start at (0, 0)".into()));
        }
        for w in nodes.windows(2) {
            if w[1].t != w[0].t + 1 || (w[1].j - w[0].j).abs() > 1 {
                return Err(HedgeError::IllegalTransition {
                    t: w[0].t,
                    from: w[0].j,
                    t_next: w[1].t,
                    to: w[1].j,
                });
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn terminal(&self) -> Node {
        *self.nodes.last().expect("paths are never empty")
    }

    pub fn prices(&self, lattice: &TrinomialLattice) -> Vec<f64> {
        self.nodes.iter().map(|&n| lattice.node_price(n)).collect()
    }
}

/// Samples `count` paths from a dedicated seeded stream.
pub fn sample_paths(lattice: &TrinomialLattice, count: usize, seed: u64) -> Vec<MarketPath> {
    let mut rng = crate::stats::seeded_rng(seed);
    (0..count).map(|_| lattice.sample_path(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::seeded_rng;

    fn paper_params() -> MarketParams {
        MarketParams::new(90.0, 0.30, 60.0, 20)
    }

    #[test]
    fn up_factor_matches_closed_form() {
        let lat = TrinomialLattice::new(paper_params()).unwrap();
        let dt: f64 = 60.0 / 365.0 / 20.0;
        let expected = (0.30 * (2.0 * dt).sqrt()).exp();
        assert_eq!(lat.up(), expected);
        assert!((lat.up() - 1.03924).abs() < 5e-5);
        assert!((lat.price(1, 1) / 90.0 - lat.up()).abs() < 1e-15);
        let one = TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, 1)).unwrap();
        assert_eq!(one.price(0, 0), 90.0);
    }

    #[test]
    fn probabilities_are_normalised_and_martingale() {
        for sigma in [0.05, 0.1, 0.3, 0.8] {
            for n in [1, 3, 20, 100] {
                let lat = TrinomialLattice::new(MarketParams::new(90.0, sigma, 60.0, n)).unwrap();
                let (pu, pm, pd) = lat.transition_probabilities();
                assert!((pu + pm + pd - 1.0).abs() < 1e-12);
                for p in [pu, pm, pd] {
                    assert!((0.0..=1.0).contains(&p));
                }
                assert!((pu * lat.up() + pm + pd / lat.up() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn small_volatility_limit_is_quarter_half_quarter() {
        let lat = TrinomialLattice::new(MarketParams::new(90.0, 1e-6, 60.0, 20)).unwrap();
        let (pu, pm, pd) = lat.transition_probabilities();
        assert!((pu - 0.25).abs() < 1e-6);
        assert!((pm - 0.5).abs() < 1e-6);
        assert!((pd - 0.25).abs() < 1e-6);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(TrinomialLattice::new(MarketParams::new(0.0, 0.3, 60.0, 20)).is_err());
        assert!(TrinomialLattice::new(MarketParams::new(90.0, 0.0, 60.0, 20)).is_err());
        assert!(TrinomialLattice::new(MarketParams::new(90.0, 0.3, 0.0, 20)).is_err());
        assert!(TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, 0)).is_err());
        let p = MarketParams::new(90.0, 0.3, 60.0, 2);
        assert!(TrinomialLattice::from_parts(p, 1.1, 0.5, 0.6, 0.0).is_err());
        assert!(TrinomialLattice::from_parts(p, 0.9, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_lattice_always_stays_in_the_middle() {
        let p = MarketParams::new(90.0, 0.3, 60.0, 1);
        let lat = TrinomialLattice::from_parts(p, 1.1, 0.0, 1.0, 0.0).unwrap();
        let mut rng = seeded_rng(7);
        for _ in 0..100 {
            assert_eq!(lat.sample_transition(Node::ROOT, &mut rng).unwrap(), Node::new(1, 0));
        }
        let path = lat.sample_path(&mut rng);
        assert_eq!(path.nodes(), &[Node::new(0, 0), Node::new(1, 0)]);
    }

    #[test]
    fn transition_past_maturity_is_an_error() {
        let lat = TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, 2)).unwrap();
        let mut rng = seeded_rng(1);
        assert!(matches!(
            lat.sample_transition(Node::new(2, 0), &mut rng),
            Err(HedgeError::OutOfHorizon { .. })
        ));
    }

    #[test]
    fn up_fraction_matches_probability() {
        let lat = TrinomialLattice::new(paper_params()).unwrap();
        let (pu, _, _) = lat.transition_probabilities();
        let mut rng = seeded_rng(2024);
        let n = 1_000_000;
        let ups = (0..n)
            .filter(|_| lat.sample_transition(Node::ROOT, &mut rng).unwrap().j == 1)
            .count();
        let freq = ups as f64 / n as f64;
        let se = (pu * (1.0 - pu) / n as f64).sqrt();
        assert!((freq - pu).abs() < 3.0 * se, "freq {freq} vs {pu}");
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let lat = TrinomialLattice::new(paper_params()).unwrap();
        let a = sample_paths(&lat, 50, 99);
        let b = sample_paths(&lat, 50, 99);
        assert_eq!(a, b);
        assert_ne!(a, sample_paths(&lat, 50, 100));
    }

    #[test]
    fn paths_are_structurally_valid() {
        let lat = TrinomialLattice::new(paper_params()).unwrap();
        for path in sample_paths(&lat, 200, 5) {
            assert_eq!(path.nodes().len(), 21);
            assert_eq!(path.nodes()[0], Node::ROOT);
            for w in path.nodes().windows(2) {
                assert_eq!(w[1].t, w[0].t + 1);
                assert!((w[1].j - w[0].j).abs() <= 1);
            }
            // any path with net j up-moves lands on price(t, j)
            let net: i32 = path.nodes().windows(2).map(|w| w[1].j - w[0].j).sum();
            assert_eq!(lat.price(20, net), lat.node_price(path.terminal()));
        }
    }

    #[test]
    fn terminal_price_is_a_martingale() {
        let lat = TrinomialLattice::new(paper_params()).unwrap();
        let n = 100_000;
        let finals: Vec<f64> = sample_paths(&lat, n, 11)
            .iter()
            .map(|p| lat.node_price(p.terminal()))
            .collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 90.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn node_count_is_square() {
        let lat = TrinomialLattice::new(MarketParams::new(90.0, 0.3, 60.0, 7)).unwrap();
        assert_eq!(lat.node_count(), 64);
        let mut buf = Vec::new();
        lat.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 65);
    }

    #[test]
    fn path_validation() {
        assert!(MarketPath::from_nodes(vec![Node::ROOT, Node::new(1, 1), Node::new(2, 0)]).is_ok());
        assert!(MarketPath::from_nodes(vec![Node::ROOT, Node::new(1, 1), Node::new(2, -1)]).is_err());
        assert!(MarketPath::from_nodes(vec![Node::new(1, 0)]).is_err());
    }
}
