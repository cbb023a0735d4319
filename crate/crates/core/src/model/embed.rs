//! Cell embedding over circular feature groups.

use std::ops::Range;

use super::input::{ModelInput, TargetScale, Targets};
use super::weights::Weights;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Feature indices of group `g`: `g * size + j (mod n_features)` for
/// `j in 0..size`.
pub fn group_members(g: usize, n_features: usize, size: usize) -> Vec<usize> {
    (0..size).map(|j| (g * size + j) % n_features).collect()
}

/// Standardization of the training targets, for regression inputs.
pub fn target_scale(targets: &Targets) -> Option<TargetScale> {
    match targets {
        Targets::Values(v) => Some(TargetScale::fit(v)),
        Targets::Classes { .. } => None,
    }
}

/// Target-aware term added to the embedding of training row `r`, given the
/// label table (`[c_max, D]`) or the regression projection.
pub fn target_term<T: Scalar>(
    targets: &Targets,
    r: usize,
    scale: Option<TargetScale>,
    labels: Option<&Tensor<T>>,
    proj: (Option<&Tensor<T>>, Option<&Tensor<T>>),
) -> Result<Vec<T>> {
    match targets {
        Targets::Classes { labels: y, .. } => {
            let table = labels.ok_or_else(|| Error::Config("classification needs label embeddings".into()))?;
            Ok(table.row(y[r]).to_vec())
        }
        Targets::Values(y) => {
            let (w, b) = match proj {
                (Some(w), Some(b)) => (w, b),
                _ => return Err(Error::Config("regression needs a target projection".into())),
            };
            let z = T::lit(scale.unwrap_or(TargetScale { mean: 0.0, std: 1.0 }).forward(y[r]));
            Ok(w.data().iter().zip(b.data()).map(|(&wi, &bi)| wi * z + bi).collect())
        }
    }
}

/// Embeddings of group `g` for rows in `rows` (global row indices into
/// `input`): `[len, D]`.
pub fn embed_group<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    g: usize,
    rows: Range<usize>,
    scale: Option<TargetScale>,
) -> Result<Tensor<T>> {
    let f = input.n_features();
    if f == 0 {
        return Err(Error::EmptyInput("no feature columns to embed".into()));
    }
    let gs = w.config.feature_group_size;
    let d = w.config.embed_dim;
    let members = group_members(g, f, gs);
    let cw = w.embed.cell_w.data();
    let mut out = Tensor::zeros(&[rows.len(), d]);
    let mut pair = vec![T::zero(); 2 * gs];
    for (i, r) in rows.enumerate() {
        for (j, &c) in members.iter().enumerate() {
            let miss = input.missing[r * f + c];
            pair[2 * j] = if miss { T::zero() } else { input.x.data()[r * f + c] };
            pair[2 * j + 1] = if miss { T::one() } else { T::zero() };
        }
        let o = out.row_mut(i);
        o.copy_from_slice(w.embed.cell_b.data());
        for (k, &p) in pair.iter().enumerate() {
            if p != T::zero() {
                for (ov, &wv) in o.iter_mut().zip(&cw[k * d..(k + 1) * d]) {
                    *ov = *ov + p * wv;
                }
            }
        }
        if r < input.n_train {
            let t = target_term(
                &input.targets,
                r,
                scale,
                w.embed.label_col.as_ref(),
                (w.embed.target_w.as_ref(), w.embed.target_b.as_ref()),
            )?;
            for (ov, tv) in o.iter_mut().zip(t) {
                *ov = *ov + tv;
            }
        }
    }
    Ok(out)
}

/// `[len, G, D]` embeddings of all groups for rows in `rows`.
pub fn embed_rows<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    rows: Range<usize>,
    scale: Option<TargetScale>,
) -> Result<Tensor<T>> {
    let f = input.n_features();
    if f == 0 {
        return Err(Error::EmptyInput("no feature columns to embed".into()));
    }
    let g_count = w.config.n_groups(f);
    let d = w.config.embed_dim;
    let n = rows.len();
    let mut out = Tensor::zeros(&[n, g_count, d]);
    for g in 0..g_count {
        let e = embed_group(w, input, g, rows.clone(), scale)?;
        for i in 0..n {
            out.data_mut()[(i * g_count + g) * d..(i * g_count + g + 1) * d].copy_from_slice(e.row(i));
        }
    }
    Ok(out)
}

/// Grouped cell embeddings `[R, G, D]` for every row of `input`.
pub fn embed_cells<T: Scalar>(w: &Weights<T>, input: &ModelInput<T>) -> Result<Tensor<T>> {
    input.validate()?;
    embed_rows(w, input, 0..input.n_rows(), target_scale(&input.targets))
}
