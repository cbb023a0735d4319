use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// `[m, k] x [k, n] -> [m, n]`. Each output row depends only on the matching
/// input row, with a fixed summation order, so results are identical no matter
/// how rows are batched.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0) {
        return Err(Error::Dimension(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
    let mut out = Tensor::zeros(&[m, n]);
    let bd = b.data();
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(out)
}

/// `x [r, in] @ w [in, out] + bias`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let mut out = matmul(x, w)?;
    if let Some(b) = bias {
        if b.len() != w.dim(1) {
            return Err(Error::Dimension(format!(
                "bias {:?} for weight {:?}",
                b.shape(),
                w.shape()
            )));
        }
        for i in 0..out.dim(0) {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(b.data()) {
                *o = *o + bv;
            }
        }
    }
    Ok(out)
}

/// `gamma * x / sqrt(mean(x^2) + eps)`; no mean-centering.
pub fn rmsnorm<T: Scalar>(x: &[T], gamma: &[T], eps: T) -> Result<Vec<T>> {
    let mut out = x.to_vec();
    rmsnorm_into(&mut out, gamma, eps)?;
    Ok(out)
}

fn rmsnorm_into<T: Scalar>(x: &mut [T], gamma: &[T], eps: T) -> Result<()> {
    if x.len() != gamma.len() {
        return Err(Error::Dimension(format!(
            "rmsnorm: x has {} entries, gamma {}",
            x.len(),
            gamma.len()
        )));
    }
    if x.is_empty() {
        return Ok(());
    }
    let ms = x.iter().map(|&v| v * v).sum::<T>() / T::lit(x.len() as f64);
    let inv = (ms + eps).sqrt().recip();
    for (v, &g) in x.iter_mut().zip(gamma) {
        *v = g * *v * inv;
    }
    Ok(())
}

/// RMSNorm over the last axis of every row of `x`.
pub fn rmsnorm_rows<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let d = *x.shape().last().unwrap_or(&0);
    if d != gamma.len() {
        return Err(Error::Dimension(format!(
            "rmsnorm: last axis {} vs gamma {}",
            d,
            gamma.len()
        )));
    }
    let mut out = x.clone();
    if d > 0 {
        for chunk in out.data_mut().chunks_mut(d) {
            rmsnorm_into(chunk, gamma.data(), eps)?;
        }
    }
    Ok(out)
}

pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in x.iter_mut() {
        *v = *v / sum;
    }
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// GELU, tanh approximation.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + T::lit(0.044715) * x * x * x)).tanh())
}

pub fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    if x > T::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn add_assign<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) -> Result<()> {
    if dst.shape() != src.shape() {
        return Err(Error::Dimension(format!(
            "add {:?} += {:?}",
            dst.shape(),
            src.shape()
        )));
    }
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d = *d + s;
    }
    Ok(())
}
