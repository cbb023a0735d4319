//! Per-estimator configurations and round-robin feature assignment.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Default ensemble size.
pub const DEFAULT_ESTIMATORS: usize = 8;
/// Default cap on input features per estimator.
pub const DEFAULT_MAX_FEATURES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    RobustSoftclip,
    QuantileStandard,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::RobustSoftclip => "robust_softclip",
            Transform::QuantileStandard => "quantile_standard",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust_softclip" => Ok(Transform::RobustSoftclip),
            "quantile_standard" => Ok(Transform::QuantileStandard),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimator_index: usize,
    /// Sorted, non-empty, at most `max_feats` entries.
    pub feature_subset: Vec<usize>,
    pub transform: Transform,
    pub use_svd: bool,
    pub row_permutation_seed: u64,
    pub class_label_permutation_seed: u64,
}

impl EstimatorConfig {
    /// Deterministic single-line text form.
    pub fn to_line(&self) -> String {
        let feats: Vec<String> = self.feature_subset.iter().map(|f| f.to_string()).collect();
        format!(
            "estimator={} transform={} svd={} row_seed={} class_seed={} features={}",
            self.estimator_index,
            self.transform,
            u8::from(self.use_svd),
            self.row_permutation_seed,
            self.class_label_permutation_seed,
            feats.join(",")
        )
    }

    pub fn from_line(line: &str) -> Result<EstimatorConfig> {
        let mut fields = std::collections::HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad token `{tok}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad number for `{k}`")))
        };
        let feature_subset = get("features")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad feature `{s}`"))))
            .collect::<Result<Vec<usize>>>()?;
        Ok(EstimatorConfig {
            estimator_index: num("estimator")? as usize,
            feature_subset,
            transform: get("transform")?.parse()?,
            use_svd: num("svd")? != 0,
            row_permutation_seed: num("row_seed")?,
            class_label_permutation_seed: num("class_seed")?,
        })
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_line().as_bytes()))
    }
}

/// Order in which features enter the round-robin stream.
#[derive(Debug, Clone, Copy)]
pub enum FeatureOrder<'a> {
    /// Seeded random permutation.
    Random,
    /// Descending importance, ties by index.
    ByImportance(&'a [f64]),
}

/// Round-robin configs with a seeded random feature stream.
pub fn build_estimator_configs(
    n_estimators: usize,
    n_features: usize,
    max_feats: usize,
    seed: u64,
) -> Vec<EstimatorConfig> {
    build_estimator_configs_ordered(n_estimators, n_features, max_feats, seed, FeatureOrder::Random)
}

/// Each estimator takes the next `min(n_features, max_feats)` features from a
/// cyclic stream over all features, so every feature is used whenever
/// `n_estimators * max_feats >= n_features`. Transforms alternate between
/// the two families and every second estimator adds SVD components.
pub fn build_estimator_configs_ordered(
    n_estimators: usize,
    n_features: usize,
    max_feats: usize,
    seed: u64,
    order: FeatureOrder<'_>,
) -> Vec<EstimatorConfig> {
    let n_estimators = n_estimators.max(1);
    let per = n_features.min(max_feats.max(1));
    let mut stream: Vec<usize> = (0..n_features).collect();
    match order {
        FeatureOrder::Random => stream.shuffle(&mut rng::stream(seed, rng::tag("features"))),
        FeatureOrder::ByImportance(scores) => stream.sort_by(|&a, &b| {
            let sa = scores.get(a).copied().unwrap_or(0.0);
            let sb = scores.get(b).copied().unwrap_or(0.0);
            sb.total_cmp(&sa).then(a.cmp(&b))
        }),
    }
    (0..n_estimators)
        .map(|i| {
            let mut subset: Vec<usize> = if n_features == 0 {
                Vec::new()
            } else {
                (0..per).map(|j| stream[(i * per + j) % n_features]).collect()
            };
            subset.sort_unstable();
            EstimatorConfig {
                estimator_index: i,
                feature_subset: subset,
                transform: if i % 2 == 0 { Transform::RobustSoftclip } else { Transform::QuantileStandard },
                use_svd: i % 2 == 1,
                row_permutation_seed: rng::derive_seed(seed, 2 * i as u64 + 1),
                class_label_permutation_seed: rng::derive_seed(seed, 2 * i as u64 + 2),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn single_estimator_takes_everything() {
        let c = build_estimator_configs(1, 5, 200, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].feature_subset, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_estimators_cover_300_features() {
        let c = build_estimator_configs(2, 300, 200, 9);
        let union: BTreeSet<usize> = c.iter().flat_map(|e| e.feature_subset.iter().copied()).collect();
        assert_eq!(union, (0..300).collect());
        assert!(c.iter().all(|e| e.feature_subset.len() == 200));
    }

    #[test]
    fn alternation_rules() {
        let c = build_estimator_configs(8, 20, 200, 1);
        assert_eq!(c.iter().filter(|e| e.use_svd).count(), 4);
        for w in c.windows(2) {
            assert_ne!(w[0].transform, w[1].transform);
        }
    }

    #[test]
    fn subsets_sorted_unique_and_capped() {
        for c in build_estimator_configs(5, 57, 13, 4) {
            assert_eq!(c.feature_subset.len(), 13);
            assert!(c.feature_subset.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn importance_order_puts_best_first() {
        let scores = [0.1, 5.0, 0.0, 2.0];
        let c = build_estimator_configs_ordered(1, 4, 2, 0, FeatureOrder::ByImportance(&scores));
        assert_eq!(c[0].feature_subset, vec![1, 3]);
    }

    #[test]
    fn text_form_round_trips() {
        for c in build_estimator_configs(3, 10, 4, 77) {
            let line = c.to_line();
            assert_eq!(EstimatorConfig::from_line(&line).unwrap(), c);
            assert_eq!(c.hash().len(), 64);
        }
        assert!(EstimatorConfig::from_line("estimator=1").is_err());
    }
}
