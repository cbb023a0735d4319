//! Per-estimator dataset views: feature subset, fitted column transforms,
//! optional SVD columns, training-row order and class relabeling.

use rand::seq::SliceRandom;

use super::config::{
    build_estimator_configs, build_estimator_configs_ordered, EstimatorConfig, FeatureOrder, Transform,
};
use super::gini::{gini_importance, ImportanceTarget, IMPORTANCE_ROW_THRESHOLD};
use super::svd::{SvdProjection, DEFAULT_SVD_COMPONENTS};
use super::transforms::{QuantileStandard, RobustSoftClip};
use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::model::{ModelInput, Targets};
use crate::rng;
use crate::tensor::Scalar;

/// Stumps and row subsample for importance-ordered feature subsets.
const IMPORTANCE_STUMPS: usize = 400;
const IMPORTANCE_SUBSAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
enum ColumnFit {
    Robust(RobustSoftClip),
    Quantile(QuantileStandard),
    /// Column with no observed training values.
    Passthrough,
}

impl ColumnFit {
    fn apply(&self, x: f64) -> f64 {
        match self {
            ColumnFit::Robust(t) => t.apply_scalar(x),
            ColumnFit::Quantile(t) => t.apply_scalar(x),
            ColumnFit::Passthrough => x,
        }
    }
}

/// A view fitted on the training rows of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedView {
    pub config: EstimatorConfig,
    fits: Vec<ColumnFit>,
    svd: Option<SvdProjection>,
    /// `class_perm[original] = permuted` for classification.
    pub class_perm: Option<Vec<usize>>,
    /// Dataset row indices of the training rows, in view order.
    pub train_order: Vec<usize>,
    task: TaskKind,
}

pub fn class_permutation(n_classes: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n_classes).collect();
    p.shuffle(&mut rng::stream(seed, rng::tag("classes")));
    p
}

impl FittedView {
    pub fn fit(dataset: &Dataset, config: &EstimatorConfig) -> Result<FittedView> {
        if config.feature_subset.is_empty() {
            return Err(Error::EmptyInput("estimator has no features".into()));
        }
        if let Some(&bad) = config.feature_subset.iter().find(|&&c| c >= dataset.n_features()) {
            return Err(Error::Dimension(format!("feature {bad} out of range")));
        }
        let mut train_order = dataset.train_indices();
        if train_order.is_empty() {
            return Err(Error::EmptyContext);
        }
        train_order.shuffle(&mut rng::stream(config.row_permutation_seed, rng::tag("rows")));
        let fits = config
            .feature_subset
            .iter()
            .map(|&c| {
                let col: Vec<f64> = train_order.iter().map(|&r| dataset.columns[c][r]).collect();
                let fit = match config.transform {
                    Transform::RobustSoftclip => RobustSoftClip::fit(&col).map(ColumnFit::Robust),
                    Transform::QuantileStandard => QuantileStandard::fit(&col).map(ColumnFit::Quantile),
                };
                fit.unwrap_or(ColumnFit::Passthrough)
            })
            .collect();
        let class_perm = dataset
            .task
            .n_classes()
            .map(|c| class_permutation(c, config.class_label_permutation_seed));
        let mut view = FittedView { config: config.clone(), fits, svd: None, class_perm, train_order, task: dataset.task };
        if config.use_svd {
            let train_cols = view.base_columns(dataset, &view.train_order);
            let k = DEFAULT_SVD_COMPONENTS.min(view.train_order.len()).min(train_cols.len());
            view.svd = Some(SvdProjection::fit(&train_cols, k));
        }
        Ok(view)
    }

    /// Transformed subset columns (column-major) for `rows`.
    fn base_columns(&self, dataset: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
        self.config
            .feature_subset
            .iter()
            .zip(&self.fits)
            .map(|(&c, fit)| rows.iter().map(|&r| fit.apply(dataset.columns[c][r])).collect())
            .collect()
    }

    pub fn n_view_features(&self) -> usize {
        self.fits.len() + self.svd.as_ref().map_or(0, SvdProjection::k)
    }

    /// Row-major view cells for dataset rows `rows`; missing cells are NaN.
    pub fn transform_rows(&self, dataset: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
        let mut cols = self.base_columns(dataset, rows);
        if let Some(svd) = &self.svd {
            let extra = svd.project(&cols);
            cols.extend(extra);
        }
        (0..rows.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }

    fn train_targets(&self, dataset: &Dataset) -> Targets {
        match (self.task, &self.class_perm) {
            (TaskKind::Classification { n_classes }, Some(perm)) => Targets::Classes {
                labels: self.train_order.iter().map(|&r| perm[dataset.y[r] as usize]).collect(),
                n_classes,
            },
            _ => Targets::Values(self.train_order.iter().map(|&r| dataset.y[r]).collect()),
        }
    }

    /// Training rows (in view order) followed by the dataset's test rows.
    pub fn model_input<T: Scalar>(&self, dataset: &Dataset) -> Result<ModelInput<T>> {
        let mut rows = self.train_order.clone();
        rows.extend(dataset.test_indices());
        ModelInput::from_rows(&self.transform_rows(dataset, &rows), self.train_order.len(), self.train_targets(dataset))
    }

    /// Training rows only.
    pub fn train_input<T: Scalar>(&self, dataset: &Dataset) -> Result<ModelInput<T>> {
        ModelInput::from_rows(
            &self.transform_rows(dataset, &self.train_order),
            self.train_order.len(),
            self.train_targets(dataset),
        )
    }

    /// Arbitrary rows of `table` (same columns as the fitting dataset) as an
    /// input with no training rows.
    pub fn rows_input<T: Scalar>(&self, table: &Dataset, rows: &[usize]) -> Result<ModelInput<T>> {
        let empty = match self.task {
            TaskKind::Classification { n_classes } => Targets::Classes { labels: Vec::new(), n_classes },
            TaskKind::Regression => Targets::Values(Vec::new()),
        };
        ModelInput::from_rows(&self.transform_rows(table, rows), 0, empty)
    }

    /// Maps probabilities over permuted classes back to original class order:
    /// `out[c] = p[class_perm[c]]`.
    pub fn unpermute(&self, probs: &[f64]) -> Vec<f64> {
        match &self.class_perm {
            Some(perm) => perm.iter().map(|&pc| probs[pc]).collect(),
            None => probs.to_vec(),
        }
    }
}

/// Estimator configs for `dataset`; above 100,000 rows features enter the
/// round-robin in order of stump-forest importance.
pub fn configs_for_dataset(
    dataset: &Dataset,
    n_estimators: usize,
    max_feats: usize,
    seed: u64,
) -> Vec<EstimatorConfig> {
    let f = dataset.n_features();
    if dataset.n_rows() <= IMPORTANCE_ROW_THRESHOLD || f <= max_feats {
        return build_estimator_configs(n_estimators, f, max_feats, seed);
    }
    let train = dataset.train_indices();
    let cols: Vec<Vec<f64>> = dataset.columns.iter().map(|c| train.iter().map(|&r| c[r]).collect()).collect();
    let scores = match dataset.task {
        TaskKind::Classification { .. } => {
            let y: Vec<usize> = train.iter().map(|&r| dataset.y[r] as usize).collect();
            gini_importance(&cols, ImportanceTarget::Classes(&y), IMPORTANCE_STUMPS, IMPORTANCE_SUBSAMPLE, seed)
        }
        TaskKind::Regression => {
            let y: Vec<f64> = train.iter().map(|&r| dataset.y[r]).collect();
            gini_importance(&cols, ImportanceTarget::Values(&y), IMPORTANCE_STUMPS, IMPORTANCE_SUBSAMPLE, seed)
        }
    };
    build_estimator_configs_ordered(n_estimators, f, max_feats, seed, FeatureOrder::ByImportance(&scores))
}
