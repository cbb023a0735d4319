//! Score normalization and improvability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

/// Min-max normalization of one (dataset, fold) group of model scores. The
/// best model gets 1 and the worst 0; when all scores tie every model gets
/// 0.5.
pub fn normalize_scores(scores: &[f64], direction: Direction) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::Argument("normalization needs at least two models".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("scores must be finite".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; scores.len()]);
    }
    Ok(scores
        .iter()
        .map(|&s| {
            let t = (s - lo) / (hi - lo);
            match direction {
                Direction::HigherIsBetter => t,
                Direction::LowerIsBetter => 1.0 - t,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub dataset: String,
    pub fold: usize,
    pub model: String,
    pub score: f64,
}

/// Normalizes each (dataset, fold) group independently; the output is aligned
/// with `entries`.
pub fn normalize_table(entries: &[ScoreEntry], direction: Direction) -> Result<Vec<f64>> {
    let mut groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry((e.dataset.as_str(), e.fold)).or_default().push(i);
    }
    let mut out = vec![0.0; entries.len()];
    for idx in groups.values() {
        let scores: Vec<f64> = idx.iter().map(|&i| entries[i].score).collect();
        for (&i, v) in idx.iter().zip(normalize_scores(&scores, direction)?) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Percentage by which `best_err` undercuts `err`: `(err - best) / err * 100`.
pub fn improvability(err: f64, best_err: f64) -> Result<f64> {
    if !(best_err > 0.0) || !err.is_finite() {
        return Err(Error::Argument(format!("best error must be positive, got {best_err}")));
    }
    if err < best_err {
        return Err(Error::Argument(format!("error {err} is below the best error {best_err}")));
    }
    Ok((err - best_err) / err * 100.0)
}
