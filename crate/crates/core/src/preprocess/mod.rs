//! Per-estimator preprocessing: feature subsets, column transforms, SVD
//! augmentation, importance-ordered feature selection and calibration.

pub mod calibration;
pub mod config;
pub mod gini;
pub mod svd;
pub mod transforms;
pub mod view;

pub use calibration::{fit_temperature, temperature_scale, tune_threshold, ThresholdMetric};
pub use config::{
    build_estimator_configs, EstimatorConfig, Transform, DEFAULT_ESTIMATORS, DEFAULT_MAX_FEATURES,
};
pub use gini::{gini_importance, ImportanceTarget};
pub use svd::{svd_augment, SvdProjection};
pub use transforms::{quantile_standard_transform, robust_scale_softclip};
pub use view::{configs_for_dataset, FittedView};
