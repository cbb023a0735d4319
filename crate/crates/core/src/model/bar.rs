//! Piecewise-uniform predictive distribution over fixed buckets.

use super::input::TargetScale;
use crate::error::{Error, Result};

/// Fraction of the standardized target range added on each side.
pub const EDGE_MARGIN: f64 = 0.1;

/// `n_buckets + 1` equal-width edges over the standardized training range
/// widened by 10% per side, expressed in original target units.
pub fn bar_edges(y_train: &[f64], n_buckets: usize) -> Vec<f64> {
    let scale = TargetScale::fit(y_train);
    let z: Vec<f64> = y_train.iter().map(|&y| scale.forward(y)).collect();
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        let range = hi - lo;
        (lo - EDGE_MARGIN * range, hi + EDGE_MARGIN * range)
    } else {
        let mid = if lo.is_finite() { lo } else { 0.0 };
        (mid - 1.0, mid + 1.0)
    };
    let n = n_buckets.max(1);
    (0..=n)
        .map(|i| scale.inverse(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarDistribution {
    edges: Vec<f64>,
    probs: Vec<f64>,
}

impl BarDistribution {
    pub fn from_logits(edges: Vec<f64>, logits: &[f64]) -> Result<BarDistribution> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let s: f64 = e.iter().sum();
        BarDistribution::from_probs(edges, e.into_iter().map(|v| v / s).collect())
    }

    pub fn from_probs(edges: Vec<f64>, probs: Vec<f64>) -> Result<BarDistribution> {
        if edges.len() != probs.len() + 1 || probs.is_empty() {
            return Err(Error::Dimension(format!("{} edges for {} buckets", edges.len(), probs.len())));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("bar edges must be strictly increasing".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Argument("bucket probabilities must be non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Argument(format!("bucket probabilities sum to {s}")));
        }
        Ok(BarDistribution { edges, probs })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_buckets(&self) -> usize {
        self.probs.len()
    }

    /// Log bucket probabilities (a valid logit vector).
    pub fn logits(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.edges[self.edges.len() - 1] {
            return 1.0;
        }
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            let (lo, hi) = (self.edges[i], self.edges[i + 1]);
            if x >= hi {
                acc += p;
            } else {
                if x > lo {
                    acc += p * (x - lo) / (hi - lo);
                }
                break;
            }
        }
        acc.min(1.0)
    }

    /// Inverse of the piecewise-linear CDF; `q` must lie in `(0, 1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level {q} outside (0, 1)")));
        }
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_nonzero = i;
            if acc + p >= q {
                let (lo, hi) = (self.edges[i], self.edges[i + 1]);
                return Ok(lo + (hi - lo) * ((q - acc) / p).clamp(0.0, 1.0));
            }
            acc += p;
        }
        // rounding left the total just under q
        Ok(self.edges[last_nonzero + 1])
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * 0.5 * (self.edges[i] + self.edges[i + 1]))
            .sum()
    }

    /// Equal-weight mixture of distributions sharing the same edges.
    pub fn mixture(parts: &[BarDistribution]) -> Result<BarDistribution> {
        let first = parts.first().ok_or_else(|| Error::EmptyInput("mixture of zero bars".into()))?;
        if parts.iter().any(|p| p.edges != first.edges) {
            return Err(Error::Argument("mixture components must share edges".into()));
        }
        let k = parts.len() as f64;
        let probs = (0..first.n_buckets())
            .map(|i| parts.iter().map(|p| p.probs[i]).sum::<f64>() / k)
            .collect();
        Ok(BarDistribution { edges: first.edges.clone(), probs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn uniform(lo: f64, hi: f64, n: usize) -> BarDistribution {
        let edges = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        BarDistribution::from_logits(edges, &vec![0.0; n]).unwrap()
    }

    #[test]
    fn uniform_bar_is_linear() {
        let b = uniform(0.0, 1.0, 10);
        assert!((b.quantile(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((b.cdf(0.37) - 0.37).abs() < 1e-12);
        assert_eq!(b.cdf(-1.0), 0.0);
        assert_eq!(b.cdf(2.0), 1.0);
    }

    #[test]
    fn spike_bucket_holds_quantiles() {
        let edges: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let mut logits = vec![0.0; 5];
        logits[2] = 30.0;
        let b = BarDistribution::from_logits(edges, &logits).unwrap();
        for q in [0.1, 0.5, 0.9] {
            let x = b.quantile(q).unwrap();
            assert!((2.0..=3.0).contains(&x), "{x}");
        }
        let one = BarDistribution::from_probs(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((one.quantile(0.25).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn quantile_round_trips_through_cdf() {
        let mut r = rng::stream(5, 0);
        let edges: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5 - 3.0).collect();
        let logits: Vec<f64> = (0..20).map(|_| r.random_range(-3.0..3.0)).collect();
        let b = BarDistribution::from_logits(edges, &logits).unwrap();
        for i in 1..10 {
            let q = i as f64 / 10.0;
            assert!((b.cdf(b.quantile(q).unwrap()) - q).abs() < 1e-9);
        }
        assert!(matches!(b.quantile(1.0), Err(Error::Domain(_))));
        assert!(b.quantile(0.0).is_err());
    }

    #[test]
    fn edges_cover_targets_with_margin() {
        let y = [1.0, 3.0, 2.0, 5.0];
        let e = bar_edges(&y, 8);
        assert_eq!(e.len(), 9);
        assert!((e[0] - 0.6).abs() < 1e-9 && (e[8] - 5.4).abs() < 1e-9);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        let flat = bar_edges(&[2.0, 2.0], 4);
        assert!(flat.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn mixture_averages_probs() {
        let a = BarDistribution::from_probs(vec![0.0, 1.0, 2.0], vec![1.0, 0.0]).unwrap();
        let b = BarDistribution::from_probs(vec![0.0, 1.0, 2.0], vec![0.0, 1.0]).unwrap();
        let m = BarDistribution::mixture(&[a, b]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);
        assert!((m.quantile(0.5).unwrap() - 1.0).abs() < 1e-12);
    }
}
