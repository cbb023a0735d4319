//! Quantile decoding and the pinball loss.

use crate::error::Result;
use crate::model::BarDistribution;

/// Inverts the piecewise-linear CDF of `bar` at `q ∈ (0, 1)`.
pub fn decode_quantile(bar: &BarDistribution, q: f64) -> Result<f64> {
    bar.quantile(q)
}

pub fn pinball_loss(y_true: f64, y_pred: f64, q: f64) -> f64 {
    if y_true >= y_pred {
        q * (y_true - y_pred)
    } else {
        (1.0 - q) * (y_pred - y_true)
    }
}

/// Pinball loss averaged over rows and quantile levels.
pub fn mean_pinball_loss(bars: &[BarDistribution], y_true: &[f64], levels: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (bar, &y) in bars.iter().zip(y_true) {
        for &q in levels {
            total += pinball_loss(y, decode_quantile(bar, q)?, q);
        }
    }
    Ok(total / (bars.len() * levels.len()).max(1) as f64)
}

/// The ten levels 0.05, 0.15, ..., 0.95.
pub fn default_quantile_levels() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.1 * i as f64).collect()
}
