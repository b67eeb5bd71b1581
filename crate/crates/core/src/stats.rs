//! Small numeric helpers shared across modules: seeding, summary statistics
//! and the fixed CSV number format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with stream indices (splitmix64 finaliser), so that
/// per-episode streams do not depend on scheduling order.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Formats with at most 9 significant digits, shortest round-trip form.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("valid float literal");
    format!("{rounded}")
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation percentile of a sample, `q ∈ [0, 1]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Mean and interquartile markers of a reward sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
}

impl RewardSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        Self {
            mean: mean(&v),
            p25: percentile_sorted(&v, 0.25),
            p75: percentile_sorted(&v, 0.75),
        }
    }
}

/// Counts per uniform bin over `[lo, hi]`; the last bin is closed.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        let k = if width > 0.0 {
            (((x - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_format() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(10.0), "10");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(-123456.789123), "-123456.789");
        assert_eq!(fmt_sig(2.5e-7), "0.00000025");
    }

    #[test]
    fn percentiles_bracket_the_middle_mean() {
        let xs: Vec<f64> = (0..101).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let s = RewardSummary::from_samples(&xs);
        let mut v = xs.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let middle = mean(&v[25..=75]);
        assert!(s.p25 <= middle && middle <= s.p75);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_eq!(derive_seed(5, 2, 3), derive_seed(5, 2, 3));
    }

    #[test]
    fn histogram_counts_everything() {
        let xs = [0.0, 0.5, 1.0, 1.0, 0.25];
        let h = histogram(&xs, 0.0, 1.0, 4);
        assert_eq!(h.iter().sum::<usize>(), 5);
        assert_eq!(h, vec![1, 1, 1, 2]);
    }
}
