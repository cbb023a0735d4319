//! Column transforms. Each is fitted on training values and then applied to
//! any row; missing cells stay missing.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Soft-clip bound: `x -> 4 tanh(x / 4)`.
pub const SOFT_CLIP: f64 = 4.0;

fn finite_sorted(col: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = col.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median/IQR scaling followed by a tanh soft clip.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSoftClip {
    pub median: f64,
    pub scale: f64,
}

impl RobustSoftClip {
    /// Divisor is the IQR, falling back to the standard deviation and then 1.
    pub fn fit(col: &[f64]) -> Result<RobustSoftClip> {
        let v = finite_sorted(col);
        if v.is_empty() {
            return Err(Error::Column("column has no observed values".into()));
        }
        let median = quantile_sorted(&v, 0.5);
        let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
        let scale = if iqr > 1e-12 {
            iqr
        } else {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 { sd } else { 1.0 }
        };
        Ok(RobustSoftClip { median, scale })
    }

    pub fn apply_scalar(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        let v = SOFT_CLIP * ((x - self.median) / self.scale / SOFT_CLIP).tanh();
        // tanh saturates to exactly 1 in f64; keep the bound open
        if v >= SOFT_CLIP {
            SOFT_CLIP.next_down()
        } else if v <= -SOFT_CLIP {
            (-SOFT_CLIP).next_up()
        } else {
            v
        }
    }

    pub fn apply(&self, col: &[f64]) -> Vec<f64> {
        col.iter().map(|&x| self.apply_scalar(x)).collect()
    }
}

pub fn robust_scale_softclip(col: &[f64]) -> Result<Vec<f64>> {
    Ok(RobustSoftClip::fit(col)?.apply(col))
}

/// Midrank -> standard normal quantile -> z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileStandard {
    sorted: Vec<f64>,
    mean: f64,
    std: f64,
    constant: bool,
}

impl QuantileStandard {
    pub fn fit(col: &[f64]) -> Result<QuantileStandard> {
        let sorted = finite_sorted(col);
        if sorted.is_empty() {
            return Err(Error::Column("column has no observed values".into()));
        }
        let constant = sorted.first() == sorted.last();
        let mut q = QuantileStandard { sorted, mean: 0.0, std: 1.0, constant };
        if !constant {
            let gauss: Vec<f64> = q.sorted.iter().map(|&x| q.gaussianize(x)).collect();
            let n = gauss.len() as f64;
            let mean = gauss.iter().sum::<f64>() / n;
            let var = gauss.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
            q.mean = mean;
            q.std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Ok(q)
    }

    /// 1-based midrank of `x` among the fitted values; values not seen at fit
    /// time get `count_below + 0.5`.
    fn midrank(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        let not_above = self.sorted.partition_point(|&v| v <= x);
        let equal = not_above - below;
        if equal == 0 {
            below as f64 + 0.5
        } else {
            below as f64 + (equal as f64 + 1.0) / 2.0
        }
    }

    fn gaussianize(&self, x: f64) -> f64 {
        let n = self.sorted.len() as f64;
        let u = ((self.midrank(x) - 0.5) / n).clamp(0.5 / n, 1.0 - 0.5 / n);
        Normal::standard().inverse_cdf(u)
    }

    pub fn apply_scalar(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        if self.constant {
            return 0.0;
        }
        (self.gaussianize(x) - self.mean) / self.std
    }

    pub fn apply(&self, col: &[f64]) -> Vec<f64> {
        col.iter().map(|&x| self.apply_scalar(x)).collect()
    }
}

pub fn quantile_standard_transform(col: &[f64]) -> Result<Vec<f64>> {
    Ok(QuantileStandard::fit(col)?.apply(col))
}
