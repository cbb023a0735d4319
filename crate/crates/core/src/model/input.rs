//! Model-ready view of a table: rows ordered train-first.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Targets of a subset of training rows, in the given order.
    pub fn gather(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => Targets::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Train-set target standardization used by the regression target embedding
/// and the bar-distribution edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn fit(y: &[f64]) -> TargetScale {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        TargetScale { mean, std }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Cells are row-major `[R, F]` with missing entries stored as 0 and flagged
/// in `missing`. The first `n_train` rows are the training rows; `targets`
/// holds one entry per training row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T: Scalar = f32> {
    pub x: Tensor<T>,
    pub missing: Vec<bool>,
    pub n_train: usize,
    pub targets: Targets,
}

impl<T: Scalar> ModelInput<T> {
    /// Builds an input from row-major cells; non-finite cells become missing.
    pub fn from_rows(rows: &[Vec<f64>], n_train: usize, targets: Targets) -> Result<ModelInput<T>> {
        let f = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * f);
        let mut missing = Vec::with_capacity(rows.len() * f);
        for v in rows.iter().flatten() {
            missing.push(!v.is_finite());
            data.push(if v.is_finite() { T::lit(*v) } else { T::zero() });
        }
        let input = ModelInput { x: Tensor::new(&[rows.len(), f], data)?, missing, n_train, targets };
        input.validate()?;
        Ok(input)
    }

    pub fn n_rows(&self) -> usize {
        self.x.dim(0)
    }

    pub fn n_features(&self) -> usize {
        self.x.dim(1)
    }

    pub fn n_test(&self) -> usize {
        self.n_rows() - self.n_train
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rank() != 2 {
            return Err(Error::Dimension("cells must be [rows, features]".into()));
        }
        if self.n_features() == 0 {
            return Err(Error::EmptyInput("no feature columns".into()));
        }
        if self.missing.len() != self.x.len() {
            return Err(Error::Dimension("missing mask does not match cells".into()));
        }
        if self.n_train > self.n_rows() || self.targets.len() != self.n_train {
            return Err(Error::Dimension(format!(
                "{} train rows, {} targets, {} rows",
                self.n_train,
                self.targets.len(),
                self.n_rows()
            )));
        }
        if let Targets::Classes { labels, n_classes } = &self.targets {
            if labels.iter().any(|&l| l >= *n_classes) {
                return Err(Error::Argument("class label out of range".into()));
            }
        }
        Ok(())
    }

    /// Rows `[start, end)` as an input with no training rows, for the
    /// inference paths that only need cells.
    pub fn cells_only(&self, start: usize, end: usize) -> ModelInput<T> {
        let f = self.n_features();
        ModelInput {
            x: self.x.slice_rows(start, end),
            missing: self.missing[start * f..end * f].to_vec(),
            n_train: 0,
            targets: match &self.targets {
                Targets::Classes { n_classes, .. } => Targets::Classes { labels: Vec::new(), n_classes: *n_classes },
                Targets::Values(_) => Targets::Values(Vec::new()),
            },
        }
    }

    /// Training rows only.
    pub fn train_part(&self) -> ModelInput<T> {
        let f = self.n_features();
        ModelInput {
            x: self.x.slice_rows(0, self.n_train),
            missing: self.missing[..self.n_train * f].to_vec(),
            n_train: self.n_train,
            targets: self.targets.clone(),
        }
    }
}
