//! Feature importance from a forest of random decision stumps.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng;

/// Row count above which feature subsets are chosen by importance.
pub const IMPORTANCE_ROW_THRESHOLD: usize = 100_000;
/// Candidate thresholds tried per stump; the best one is kept.
const CANDIDATES_PER_STUMP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImportanceTarget<'a> {
    /// Class labels; impurity is Gini.
    Classes(&'a [usize]),
    /// Real targets; impurity is variance.
    Values(&'a [f64]),
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Summed impurity decrease of accepted stump splits, per feature.
///
/// `columns` is column-major; missing cells go to the left branch. Each stump
/// draws a feature and keeps the best of a few thresholds sampled from that
/// feature's observed values on a fixed row subsample.
pub fn gini_importance(
    columns: &[Vec<f64>],
    target: ImportanceTarget<'_>,
    n_stumps: usize,
    subsample: usize,
    seed: u64,
) -> Vec<f64> {
    let f = columns.len();
    let mut scores = vec![0.0; f];
    let n = match target {
        ImportanceTarget::Classes(y) => y.len(),
        ImportanceTarget::Values(y) => y.len(),
    };
    if f == 0 || n < 2 {
        return scores;
    }
    let mut rng = rng::stream(seed, rng::tag("gini"));
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    rows.truncate(subsample.clamp(2, n));
    rows.sort_unstable();

    let impurity = |idx: &[usize]| -> f64 {
        match target {
            ImportanceTarget::Classes(y) => {
                let k = idx.iter().map(|&i| y[i]).max().map_or(0, |m| m + 1);
                let mut counts = vec![0.0; k];
                for &i in idx {
                    counts[y[i]] += 1.0;
                }
                gini(&counts, idx.len() as f64)
            }
            ImportanceTarget::Values(y) => {
                if idx.is_empty() {
                    return 0.0;
                }
                let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                idx.iter().map(|&i| (y[i] - m) * (y[i] - m)).sum::<f64>() / idx.len() as f64
            }
        }
    };
    let parent = impurity(&rows);
    if parent <= 0.0 {
        return scores;
    }
    let total = rows.len() as f64;
    for _ in 0..n_stumps {
        let feat = rng.random_range(0..f);
        let col = &columns[feat];
        let observed: Vec<f64> = rows.iter().map(|&r| col[r]).filter(|v| v.is_finite()).collect();
        if observed.is_empty() {
            continue;
        }
        let mut best = 0.0f64;
        for _ in 0..CANDIDATES_PER_STUMP {
            let t = observed[rng.random_range(0..observed.len())];
            let (left, right): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| !col[r].is_finite() || col[r] <= t);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let child = (left.len() as f64 * impurity(&left) + right.len() as f64 * impurity(&right)) / total;
            best = best.max(parent - child);
        }
        if best > 0.0 {
            scores[feat] += best;
        }
    }
    scores
}
