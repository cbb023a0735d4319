//! Post-hoc calibration: temperature scaling and binary threshold tuning.

use serde::{Deserialize, Serialize};

/// Search interval for `ln T`.
const LN_T_RANGE: (f64, f64) = (-4.0, 4.0);
const GOLDEN_TOL: f64 = 1e-7;

fn log_softmax_row(row: &[f64], inv_t: f64) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z * inv_t));
    let lse = row.iter().map(|&z| (z * inv_t - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|&z| z * inv_t - lse).collect()
}

/// Mean negative log-likelihood of `y` under `softmax(logits / t)`.
pub fn temperature_nll(logits: &[Vec<f64>], y: &[usize], t: f64) -> f64 {
    let inv_t = 1.0 / t;
    let total: f64 = logits
        .iter()
        .zip(y)
        .map(|(row, &label)| -log_softmax_row(row, inv_t)[label])
        .sum();
    total / y.len().max(1) as f64
}

/// Temperature minimizing validation NLL, found by golden-section search on
/// `ln T`. NLL is convex in `1/T`, so it is unimodal in `ln T`.
pub fn fit_temperature(logits: &[Vec<f64>], y: &[usize]) -> f64 {
    let first = match y.first() {
        Some(&f) => f,
        None => return 1.0,
    };
    if y.iter().all(|&c| c == first) {
        return 1.0;
    }
    let f = |ln_t: f64| temperature_nll(logits, y, ln_t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LN_T_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    ((a + b) / 2.0).exp()
}

/// Row-wise `softmax(logits / t)`.
pub fn temperature_scale(logits: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| log_softmax_row(row, 1.0 / t).into_iter().map(f64::exp).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMetric {
    F1,
    Accuracy,
}

/// Metric of predicting positive when `p > threshold`.
pub fn threshold_metric(probs: &[f64], y: &[bool], threshold: f64, metric: ThresholdMetric) -> f64 {
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &label) in probs.iter().zip(y) {
        match (p > threshold, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    score(tp, fp, fneg, tn, metric)
}

fn score(tp: usize, fp: usize, fneg: usize, tn: usize, metric: ThresholdMetric) -> f64 {
    match metric {
        ThresholdMetric::Accuracy => (tp + tn) as f64 / (tp + fp + fneg + tn).max(1) as f64,
        ThresholdMetric::F1 => {
            let denom = 2 * tp + fp + fneg;
            if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 }
        }
    }
}

/// Best threshold among midpoints of consecutive distinct probabilities;
/// the lowest one wins ties. Single-class labels or a single distinct
/// probability give 0.5.
pub fn tune_threshold(probs: &[f64], y: &[bool], metric: ThresholdMetric) -> f64 {
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == y.len() {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // sweep upward: everything at or below the candidate is predicted negative
    let (mut tp, mut fp) = (n_pos, y.len() - n_pos);
    let (mut fneg, mut tn) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let p = probs[order[i]];
        while i < order.len() && probs[order[i]] == p {
            if y[order[i]] {
                tp -= 1;
                fneg += 1;
            } else {
                fp -= 1;
                tn += 1;
            }
            i += 1;
        }
        if i == order.len() {
            break;
        }
        let t = (p + probs[order[i]]) / 2.0;
        let s = score(tp, fp, fneg, tn, metric);
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((t, s));
        }
    }
    best.map_or(0.5, |(t, _)| t.clamp(0.0, 1.0))
}
