//! Retrieval decoder: class probabilities are head-averaged attention-weighted
//! averages of the training rows' one-hot labels.

use super::weights::Decoder;
use crate::error::{Error, Result};
use crate::tensor::{linear, softmax_in_place, Scalar, Tensor};

/// Lower clip bound before taking logs of decoder probabilities.
pub const PROB_CLIP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderSoftmax {
    Plain,
    /// QASSMax with the decoder's scale MLP; `n_context` is the number of
    /// training rows.
    QassMax,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderShape {
    pub heads: usize,
    pub head_dim: usize,
    pub c_max: usize,
}

/// Calls `emit(m, n, weight)` for every attention weight already divided by
/// the head count.
fn for_each_weight<T: Scalar>(
    dec: &Decoder<T>,
    shape: DecoderShape,
    mode: DecoderSoftmax,
    train_final: &Tensor<T>,
    test_final: &Tensor<T>,
    mut emit: impl FnMut(usize, usize, T),
) -> Result<()> {
    let (h, dh) = (shape.heads, shape.head_dim);
    let n = train_final.dim(0);
    if n == 0 {
        return Err(Error::EmptyContext);
    }
    let q = linear(test_final, &dec.wq, None)?;
    let k = linear(train_final, &dec.wk, None)?;
    let inv_sqrt = T::lit(1.0 / (dh as f64).sqrt());
    let log_n = T::lit((n as f64).ln());
    let inv_h = T::lit(1.0 / h as f64);
    let mut scores = Tensor::<T>::zeros(&[n]);
    for m in 0..q.dim(0) {
        for hi in 0..h {
            let qv = &q.row(m)[hi * dh..(hi + 1) * dh];
            let factor = match mode {
                DecoderSoftmax::Plain => inv_sqrt,
                DecoderSoftmax::QassMax => inv_sqrt * dec.scale.scale(qv) * log_n,
            };
            let s = scores.data_mut();
            for (ni, sv) in s.iter_mut().enumerate() {
                let kv = &k.row(ni)[hi * dh..(hi + 1) * dh];
                *sv = qv.iter().zip(kv).fold(T::zero(), |a, (&x, &y)| a + x * y) * factor;
            }
            softmax_in_place(s);
            for (ni, &a) in s.iter().enumerate() {
                emit(m, ni, a * inv_h);
            }
        }
    }
    Ok(())
}

fn check_classes(c: usize, c_max: usize) -> Result<()> {
    if c > c_max {
        return Err(Error::UnsupportedClassCount { got: c, max: c_max });
    }
    Ok(())
}

/// `p [M, C]` from soft or one-hot labels `y_onehot: [N, C]`.
pub fn many_class_decode<T: Scalar>(
    dec: &Decoder<T>,
    shape: DecoderShape,
    mode: DecoderSoftmax,
    train_final: &Tensor<T>,
    y_onehot: &Tensor<T>,
    test_final: &Tensor<T>,
) -> Result<Tensor<T>> {
    let c = y_onehot.dim(1);
    check_classes(c, shape.c_max)?;
    if y_onehot.dim(0) != train_final.dim(0) {
        return Err(Error::Dimension("one label row per training row".into()));
    }
    let mut p = Tensor::zeros(&[test_final.dim(0), c]);
    let y = y_onehot.data();
    for_each_weight(dec, shape, mode, train_final, test_final, |m, n, a| {
        for (pv, &yv) in p.row_mut(m).iter_mut().zip(&y[n * c..(n + 1) * c]) {
            *pv = *pv + a * yv;
        }
    })?;
    Ok(p)
}

/// Same as [`many_class_decode`] for hard labels, without materializing the
/// one-hot matrix.
pub fn decode_labels<T: Scalar>(
    dec: &Decoder<T>,
    shape: DecoderShape,
    mode: DecoderSoftmax,
    train_final: &Tensor<T>,
    labels: &[usize],
    n_classes: usize,
    test_final: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_classes(n_classes, shape.c_max)?;
    if labels.len() != train_final.dim(0) {
        return Err(Error::Dimension("one label per training row".into()));
    }
    let mut p = Tensor::zeros(&[test_final.dim(0), n_classes]);
    for_each_weight(dec, shape, mode, train_final, test_final, |m, n, a| {
        let v = &mut p.row_mut(m)[labels[n]];
        *v = *v + a;
    })?;
    Ok(p)
}

/// `ln(max(p, 1e-10))`.
pub fn log_clip(p: f64) -> f64 {
    p.max(PROB_CLIP).ln()
}

pub fn one_hot<T: Scalar>(labels: &[usize], n_classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = T::one();
    }
    t
}
