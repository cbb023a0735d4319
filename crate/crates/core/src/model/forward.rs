//! End-to-end forward pass.

use super::bar::{bar_edges, BarDistribution};
use super::decoder::{decode_labels, DecoderShape, DecoderSoftmax};
use super::embed::{embed_cells, target_scale};
use super::input::{ModelInput, Targets};
use super::stage1::stage1_distribution_embed;
use super::stage2::stage2_aggregate;
use super::stage3::{stage3_icl, Stage3Output};
use super::weights::Weights;
use crate::error::{Error, Result};
use crate::tensor::{gelu, linear, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    /// One probability vector per test row.
    Probs(Vec<Vec<f64>>),
    Bars(Vec<BarDistribution>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Probs(p) => p.len(),
            Predictions::Bars(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest absolute difference in probabilities or bar log-probabilities.
    pub fn max_abs_diff(&self, other: &Predictions) -> f64 {
        match (self, other) {
            (Predictions::Probs(a), Predictions::Probs(b)) if a.len() == b.len() => a
                .iter()
                .zip(b)
                .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max),
            (Predictions::Bars(a), Predictions::Bars(b)) if a.len() == b.len() => a
                .iter()
                .zip(b)
                .flat_map(|(x, y)| x.probs().iter().zip(y.probs()).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Scalar> {
    pub predictions: Predictions,
    /// Output of the ICL stage for every row, train rows first.
    pub final_embeds: Tensor<T>,
    /// Per Stage-1 block `[G, K, D]`.
    pub inducing: Vec<Tensor<T>>,
    /// Per ICL layer train keys/values of the test path.
    pub test_kv: Vec<Tensor<T>>,
}

/// Fails early when the class count exceeds the model's ceiling.
pub fn check_input<T: Scalar>(w: &Weights<T>, input: &ModelInput<T>) -> Result<()> {
    input.validate()?;
    match (&input.targets, w.config.task) {
        (Targets::Classes { n_classes, .. }, super::config::Task::Classification) => {
            if *n_classes > w.config.c_max {
                return Err(Error::UnsupportedClassCount { got: *n_classes, max: w.config.c_max });
            }
        }
        (Targets::Values(_), super::config::Task::Regression) => {}
        _ => return Err(Error::Config("input targets do not match the model task".into())),
    }
    if input.n_train == 0 {
        return Err(Error::EmptyContext);
    }
    Ok(())
}

/// Rows through Stages 1 and 2 without chunking: `[R, E]` row embeddings and
/// the stacked inducing states.
pub fn encode_rows<T: Scalar>(w: &Weights<T>, input: &ModelInput<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let cells = embed_cells(w, input)?;
    let s1 = stage1_distribution_embed(w, cells, input.n_train)?;
    let rows = stage2_aggregate(w, &s1.cells)?;
    Ok((rows, s1.inducing))
}

/// Decodes test rows given final train and test embeddings.
pub fn decode<T: Scalar>(
    w: &Weights<T>,
    train_final: &Tensor<T>,
    test_final: &Tensor<T>,
    targets: &Targets,
) -> Result<Predictions> {
    let c = &w.config;
    match targets {
        Targets::Classes { labels, n_classes } => {
            let dec = w.decoder.as_ref().ok_or_else(|| Error::Config("model has no class decoder".into()))?;
            let shape = DecoderShape { heads: c.decoder_heads, head_dim: c.decoder_head_dim, c_max: c.c_max };
            let p = decode_labels(dec, shape, DecoderSoftmax::QassMax, train_final, labels, *n_classes, test_final)?;
            Ok(Predictions::Probs((0..p.dim(0)).map(|i| p.row(i).iter().map(|v| v.as_f64()).collect()).collect()))
        }
        Targets::Values(y) => {
            let edges = bar_edges(y, c.n_buckets);
            let logits = regression_logits(w, test_final)?;
            let bars = (0..logits.dim(0))
                .map(|i| {
                    let l: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
                    BarDistribution::from_logits(edges.clone(), &l)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Predictions::Bars(bars))
        }
    }
}

/// Bucket logits `[M, n_buckets]` of the regression head.
pub fn regression_logits<T: Scalar>(w: &Weights<T>, test_final: &Tensor<T>) -> Result<Tensor<T>> {
    let head = w.head.as_ref().ok_or_else(|| Error::Config("model has no regression head".into()))?;
    let mut h = linear(test_final, &head.w1, Some(&head.b1))?;
    h.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    linear(&h, &head.w2, Some(&head.b2))
}

/// Stage 3 plus decoding, given `[R, E]` row embeddings.
pub fn finish<T: Scalar>(
    w: &Weights<T>,
    row_embeds: Tensor<T>,
    targets: &Targets,
    inducing: Vec<Tensor<T>>,
) -> Result<ForwardOutput<T>> {
    let n_train = targets.len();
    let r = row_embeds.dim(0);
    let Stage3Output { final_embeds, test_kv } = stage3_icl(w, row_embeds, targets, target_scale(targets))?;
    let train_final = final_embeds.slice_rows(0, n_train);
    let test_final = final_embeds.slice_rows(n_train, r);
    let predictions = decode(w, &train_final, &test_final, targets)?;
    Ok(ForwardOutput { predictions, final_embeds, inducing, test_kv })
}

/// Full pipeline for one view: embed, distribution embedding, aggregation,
/// in-context learning, decoding.
pub fn forward<T: Scalar>(w: &Weights<T>, input: &ModelInput<T>) -> Result<ForwardOutput<T>> {
    check_input(w, input)?;
    let (rows, inducing) = encode_rows(w, input)?;
    finish(w, rows, &input.targets, inducing)
}
