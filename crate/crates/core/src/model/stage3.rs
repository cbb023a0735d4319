//! In-context learning transformer over row embeddings. Training rows attend
//! to training rows; test rows attend to training rows only, through a single
//! shared key/value head.

use super::embed::target_term;
use super::input::{TargetScale, Targets};
use super::layers::{feed_forward, mha};
use super::weights::{IclLayer, Weights};
use crate::error::{Error, Result};
use crate::tensor::{add_assign, attention, linear, rmsnorm_rows, Scalar, SoftmaxMode, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage3Output<T: Scalar> {
    /// Post-final-norm embeddings, `[R, E]`.
    pub final_embeds: Tensor<T>,
    /// Per layer, the training rows' keys and values as seen by test rows:
    /// `[N_train, 2, kv_width]`.
    pub test_kv: Vec<Tensor<T>>,
}

fn test_projections<T: Scalar>(layer: &IclLayer<T>) -> (&Tensor<T>, &Tensor<T>) {
    match (&layer.wk_test, &layer.wv_test) {
        (Some(k), Some(v)) => (k, v),
        _ => (&layer.wk, &layer.wv),
    }
}

/// Keys and values of normalized training rows for the test path.
fn train_kv_for_test<T: Scalar>(layer: &IclLayer<T>, normed_train: &Tensor<T>) -> Result<Tensor<T>> {
    let (wk, wv) = test_projections(layer);
    let k = linear(normed_train, wk, None)?;
    let v = linear(normed_train, wv, None)?;
    let (n, width) = (k.dim(0), k.dim(1));
    let mut kv = Tensor::zeros(&[n, 2, width]);
    for i in 0..n {
        kv.data_mut()[2 * i * width..(2 * i + 1) * width].copy_from_slice(k.row(i));
        kv.data_mut()[(2 * i + 1) * width..(2 * i + 2) * width].copy_from_slice(v.row(i));
    }
    Ok(kv)
}

/// One layer for test rows `h: [M, E]` against cached train keys/values.
pub fn test_layer_step<T: Scalar>(
    w: &Weights<T>,
    layer: &IclLayer<T>,
    h: &mut Tensor<T>,
    kv: &Tensor<T>,
) -> Result<()> {
    let c = &w.config;
    let eps = T::lit(c.norm_eps);
    let (m, heads, hd) = (h.dim(0), c.icl_heads, c.icl_head_dim());
    if m == 0 {
        return Ok(());
    }
    let (n, width) = (kv.dim(0), kv.dim(2));
    let kv_heads = width / hd;
    let mut k = Tensor::zeros(&[n, kv_heads, hd]);
    let mut v = Tensor::zeros(&[n, kv_heads, hd]);
    for i in 0..n {
        k.data_mut()[i * width..(i + 1) * width].copy_from_slice(&kv.data()[2 * i * width..(2 * i + 1) * width]);
        v.data_mut()[i * width..(i + 1) * width].copy_from_slice(&kv.data()[(2 * i + 1) * width..(2 * i + 2) * width]);
    }
    let normed = rmsnorm_rows(h, &layer.norm, eps)?;
    let q = linear(&normed, &layer.wq, None)?.reshape(&[m, heads, hd])?;
    let o = attention(&q, &k, &v, SoftmaxMode::QassMax(&layer.scale))?.reshape(&[m, heads * hd])?;
    let out = linear(&o, &layer.wo, None)?;
    add_assign(h, &out)?;
    feed_forward(&layer.ff, h, eps)
}

/// Adds the label (or regression target) embedding to training rows.
pub fn add_icl_targets<T: Scalar>(
    w: &Weights<T>,
    h: &mut Tensor<T>,
    targets: &Targets,
    scale: Option<TargetScale>,
) -> Result<()> {
    for r in 0..targets.len() {
        let t = target_term(
            targets,
            r,
            scale,
            w.stage3.label_icl.as_ref(),
            (w.stage3.target_w.as_ref(), w.stage3.target_b.as_ref()),
        )?;
        for (hv, tv) in h.row_mut(r).iter_mut().zip(t) {
            *hv = *hv + tv;
        }
    }
    Ok(())
}

/// `row_embeds: [R, E]` with the first `targets.len()` rows being training
/// rows.
pub fn stage3_icl<T: Scalar>(
    w: &Weights<T>,
    row_embeds: Tensor<T>,
    targets: &Targets,
    scale: Option<TargetScale>,
) -> Result<Stage3Output<T>> {
    let c = &w.config;
    let n_train = targets.len();
    if n_train == 0 {
        return Err(Error::EmptyContext);
    }
    let r = row_embeds.dim(0);
    let eps = T::lit(c.norm_eps);
    let mut train = row_embeds.slice_rows(0, n_train);
    let mut test = row_embeds.slice_rows(n_train, r);
    drop(row_embeds);
    add_icl_targets(w, &mut train, targets, scale)?;

    let mut test_kv = Vec::with_capacity(w.stage3.layers.len());
    for layer in &w.stage3.layers {
        let normed = rmsnorm_rows(&train, &layer.norm, eps)?;
        let kv = train_kv_for_test(layer, &normed)?;
        let out = mha(
            &normed,
            &normed,
            &layer.wq,
            &layer.wk,
            &layer.wv,
            &layer.wo,
            c.icl_heads,
            c.icl_kv_heads_train,
            SoftmaxMode::QassMax(&layer.scale),
        )?;
        drop(normed);
        test_layer_step(w, layer, &mut test, &kv)?;
        add_assign(&mut train, &out)?;
        feed_forward(&layer.ff, &mut train, eps)?;
        test_kv.push(kv);
    }
    let all = Tensor::concat_rows(&[train, test])?;
    let final_embeds = rmsnorm_rows(&all, &w.stage3.final_norm, eps)?;
    Ok(Stage3Output { final_embeds, test_kv })
}

/// Test rows only, against cached per-layer train keys/values.
pub fn stage3_test<T: Scalar>(w: &Weights<T>, mut h: Tensor<T>, test_kv: &[Tensor<T>]) -> Result<Tensor<T>> {
    if test_kv.len() != w.stage3.layers.len() {
        return Err(Error::Dimension(format!(
            "{} cached layers for {} ICL layers",
            test_kv.len(),
            w.stage3.layers.len()
        )));
    }
    for (layer, kv) in w.stage3.layers.iter().zip(test_kv) {
        test_layer_step(w, layer, &mut h, kv)?;
    }
    rmsnorm_rows(&h, &w.stage3.final_norm, T::lit(w.config.norm_eps))
}
