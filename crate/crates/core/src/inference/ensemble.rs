//! Aggregation of per-estimator predictions.

use rayon::prelude::*;

use super::chunk::{forward_chunked_with, plan_chunks, ChunkExec, ChunkOverride};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{bar_edges, BarDistribution, Predictions, Weights};
use crate::preprocess::{EstimatorConfig, FittedView};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleOptions {
    pub chunk_size: usize,
    pub chunking: ChunkOverride,
    /// Run estimators on the rayon pool.
    pub parallel: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { chunk_size: super::chunk::DEFAULT_CHUNK_SIZE, chunking: ChunkOverride::Auto, parallel: false }
    }
}

/// Shared bar edges for regression ensembles, from the dataset's training
/// targets in dataset order; `None` for classification.
pub fn canonical_edges(dataset: &Dataset, n_buckets: usize) -> Option<Vec<f64>> {
    dataset.task.n_classes().is_none().then(|| {
        let y: Vec<f64> = dataset.train_indices().iter().map(|&r| dataset.y[r]).collect();
        bar_edges(&y, n_buckets)
    })
}

/// Maps one estimator's raw predictions back to the original class order,
/// or onto `canonical_edges` for regression bars.
pub fn align_predictions(view: &FittedView, predictions: Predictions, canonical_edges: Option<&[f64]>) -> Result<Predictions> {
    Ok(match predictions {
        Predictions::Probs(p) => Predictions::Probs(p.iter().map(|row| view.unpermute(row)).collect()),
        Predictions::Bars(bars) => match canonical_edges {
            // every estimator sees the same training targets, so edges agree up to summation order
            Some(edges) => Predictions::Bars(
                bars.iter()
                    .map(|b| BarDistribution::from_probs(edges.to_vec(), b.probs().to_vec()))
                    .collect::<Result<_>>()?,
            ),
            None => Predictions::Bars(bars),
        },
    })
}

/// One estimator: fit its view, run the model and align the output.
pub fn estimator_predict<T: Scalar>(
    config: &EstimatorConfig,
    w: &Weights<T>,
    dataset: &Dataset,
    opts: &EnsembleOptions,
    canonical_edges: Option<&[f64]>,
) -> Result<Predictions> {
    let view = FittedView::fit(dataset, config)?;
    let input = view.model_input::<T>(dataset)?;
    let plan = plan_chunks(input.n_train, input.n_test(), opts.chunk_size, opts.chunking);
    let out = forward_chunked_with(w, &input, &plan, ChunkExec::Sequential)?;
    align_predictions(&view, out.predictions, canonical_edges)
}

/// Mean of per-estimator predictions for the dataset's test rows: probability
/// vectors for classification, bar densities on shared edges for regression.
pub fn ensemble_predict<T: Scalar>(
    configs: &[EstimatorConfig],
    w: &Weights<T>,
    dataset: &Dataset,
    opts: &EnsembleOptions,
) -> Result<Predictions> {
    if configs.is_empty() {
        return Err(Error::Argument("ensemble needs at least one estimator".into()));
    }
    let edges = canonical_edges(dataset, w.config.n_buckets);
    let run = |c: &EstimatorConfig| estimator_predict(c, w, dataset, opts, edges.as_deref());
    let parts: Vec<Predictions> = if opts.parallel {
        configs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        configs.iter().map(run).collect::<Result<_>>()?
    };
    average(&parts)
}

/// Arithmetic mean of predictions that share row count and (for bars) edges.
pub fn average(parts: &[Predictions]) -> Result<Predictions> {
    let first = parts.first().ok_or_else(|| Error::Argument("nothing to average".into()))?;
    let n = parts.len() as f64;
    match first {
        Predictions::Probs(p0) => {
            let mut acc: Vec<Vec<f64>> = p0.iter().map(|r| vec![0.0; r.len()]).collect();
            for part in parts {
                let Predictions::Probs(p) = part else {
                    return Err(Error::Argument("mixed prediction kinds".into()));
                };
                if p.len() != acc.len() {
                    return Err(Error::Dimension("estimators disagree on test row count".into()));
                }
                for (a, row) in acc.iter_mut().zip(p) {
                    a.iter_mut().zip(row).for_each(|(x, v)| *x += v);
                }
            }
            acc.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x /= n));
            Ok(Predictions::Probs(acc))
        }
        Predictions::Bars(b0) => {
            let mut out = Vec::with_capacity(b0.len());
            for i in 0..b0.len() {
                let row: Vec<BarDistribution> = parts
                    .iter()
                    .map(|p| match p {
                        Predictions::Bars(b) if b.len() == b0.len() => Ok(b[i].clone()),
                        _ => Err(Error::Dimension("estimators disagree on test rows".into())),
                    })
                    .collect::<Result<_>>()?;
                out.push(BarDistribution::mixture(&row)?);
            }
            Ok(Predictions::Bars(out))
        }
    }
}
