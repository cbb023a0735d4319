use super::ops::{gelu, softmax_in_place, softplus};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Small MLP producing the per-query softmax scale of QASSMax:
/// `s(q) = 1 + softplus(w2 . gelu(q W1 + b1) + b2)`, which is always > 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMlp<T: Scalar> {
    /// `[query_dim, hidden]`
    pub w1: Tensor<T>,
    /// `[hidden]`
    pub b1: Tensor<T>,
    /// `[hidden]`
    pub w2: Tensor<T>,
    /// `[1]`
    pub b2: Tensor<T>,
}

impl<T: Scalar> ScaleMlp<T> {
    pub fn zeros(query_dim: usize, hidden: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[query_dim, hidden]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden]),
            b2: Tensor::zeros(&[1]),
        }
    }

    pub fn query_dim(&self) -> usize {
        self.w1.dim(0)
    }

    pub fn scale(&self, query: &[T]) -> T {
        let hidden = self.w1.dim(1);
        let w1 = self.w1.data();
        let mut acc = self.b2.data()[0];
        for j in 0..hidden {
            let mut h = self.b1.data()[j];
            for (i, &q) in query.iter().enumerate() {
                h = h + q * w1[i * hidden + j];
            }
            acc = acc + self.w2.data()[j] * gelu(h);
        }
        T::one() + softplus(acc)
    }
}

/// How attention logits are turned into weights.
#[derive(Debug, Clone, Copy)]
pub enum SoftmaxMode<'a, T: Scalar> {
    Plain,
    /// Query-aware scalable softmax: logits are multiplied by
    /// `s(q) * ln(n_context)` before the softmax, with `n_context` the number
    /// of keys.
    QassMax(&'a ScaleMlp<T>),
}

/// `softmax(s(query) * ln(n_context) * logits)`.
pub fn qassmax<T: Scalar>(
    logits: &[T],
    query: &[T],
    mlp: &ScaleMlp<T>,
    n_context: usize,
) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("qassmax over zero logits".into()));
    }
    if n_context == 0 {
        return Err(Error::EmptyContext);
    }
    let factor = mlp.scale(query) * T::lit((n_context as f64).ln());
    let mut out: Vec<T> = logits.iter().map(|&l| l * factor).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Scaled dot-product attention.
///
/// `q: [M, H, Dh]`, `k, v: [N, Hkv, Dh]` with `Hkv` either `H` or 1. With a
/// single KV head every query head reads the same keys and values.
pub fn attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mode: SoftmaxMode<'_, T>,
) -> Result<Tensor<T>> {
    if q.rank() != 3 || k.rank() != 3 || v.rank() != 3 {
        return Err(Error::Dimension("attention expects rank-3 q, k, v".into()));
    }
    let (m, h, dh) = (q.dim(0), q.dim(1), q.dim(2));
    let (n, hkv) = (k.dim(0), k.dim(1));
    if n == 0 {
        return Err(Error::EmptyContext);
    }
    if dh == 0 {
        return Err(Error::Config("attention head dim is zero".into()));
    }
    if hkv != 1 && hkv != h {
        return Err(Error::Config(format!(
            "{hkv} kv heads cannot serve {h} query heads"
        )));
    }
    if k.dim(2) != dh || v.shape() != k.shape() {
        return Err(Error::Dimension(format!(
            "q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if let SoftmaxMode::QassMax(mlp) = mode {
        if mlp.query_dim() != dh {
            return Err(Error::Dimension(format!(
                "scale mlp expects {} inputs, head dim is {dh}",
                mlp.query_dim()
            )));
        }
    }

    let inv_sqrt = T::lit(1.0 / (dh as f64).sqrt());
    let log_n = T::lit((n as f64).ln());
    let mut out = Tensor::zeros(&[m, h, dh]);
    let mut scores = Tensor::<T>::zeros(&[n]);
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    for mi in 0..m {
        for hi in 0..h {
            let kh = if hkv == 1 { 0 } else { hi };
            let qv = &qd[(mi * h + hi) * dh..(mi * h + hi + 1) * dh];
            let factor = match mode {
                SoftmaxMode::Plain => inv_sqrt,
                SoftmaxMode::QassMax(mlp) => inv_sqrt * mlp.scale(qv) * log_n,
            };
            let s = scores.data_mut();
            for (ni, sv) in s.iter_mut().enumerate() {
                let kv = &kd[(ni * hkv + kh) * dh..(ni * hkv + kh + 1) * dh];
                let dot = qv.iter().zip(kv).fold(T::zero(), |a, (&x, &y)| a + x * y);
                *sv = dot * factor;
            }
            softmax_in_place(s);
            let o = &mut out.data_mut()[(mi * h + hi) * dh..(mi * h + hi + 1) * dh];
            for (ni, &w) in s.iter().enumerate() {
                let vv = &vd[(ni * hkv + kh) * dh..(ni * hkv + kh + 1) * dh];
                for (ov, &x) in o.iter_mut().zip(vv) {
                    *ov = *ov + w * x;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = rng::stream(seed, 0);
        Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
    }

    fn random_mlp(dim: usize, hidden: usize, seed: u64) -> ScaleMlp<f64> {
        ScaleMlp {
            w1: random(&[dim, hidden], seed),
            b1: random(&[hidden], seed + 1),
            w2: random(&[hidden], seed + 2),
            b2: random(&[1], seed + 3),
        }
    }

    #[test]
    fn qassmax_uniform_and_single() {
        let mlp = random_mlp(4, 3, 5);
        let q = [0.3, -0.2, 0.9, 0.1];
        let p = qassmax(&[2.0; 10], &q, &mlp, 10).unwrap();
        for v in p {
            assert!((v - 0.1).abs() < 1e-15);
        }
        assert_eq!(qassmax(&[7.0], &q, &mlp, 1).unwrap(), vec![1.0]);
        assert!(matches!(
            qassmax(&[], &q, &mlp, 3),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn qassmax_scale_is_above_one() {
        let mlp = ScaleMlp::<f64>::zeros(4, 3);
        // softplus(0) = ln 2
        assert!((mlp.scale(&[0.0; 4]) - (1.0 + 2f64.ln())).abs() < 1e-15);
        let m = random_mlp(4, 8, 9);
        assert!(m.scale(&[5.0, -5.0, 1.0, 0.0]) > 1.0);
    }

    #[test]
    fn needle_weight_sharper_than_plain_softmax() {
        let mlp = ScaleMlp::<f64>::zeros(4, 3);
        let q = [0.0; 4];
        for &n in &[128usize, 4096] {
            let mut logits = vec![0.0; n];
            logits[n / 2] = 1.0;
            let plain = crate::tensor::softmax(&logits);
            let scaled = qassmax(&logits, &q, &mlp, n).unwrap();
            assert!(scaled[n / 2] > plain[n / 2]);
        }
        // direct evaluation at N = 4096
        let n = 4096f64;
        let plain_needle = 1f64.exp() / (1f64.exp() + n - 1.0);
        let a = (1.0 + 2f64.ln()) * n.ln();
        let scaled_needle = a.exp() / (a.exp() + n - 1.0);
        assert!(scaled_needle > plain_needle);
    }

    #[test]
    fn single_key_returns_value() {
        let q = random(&[3, 2, 4], 1);
        let k = random(&[1, 2, 4], 2);
        let v = random(&[1, 2, 4], 3);
        let out = attention(&q, &k, &v, SoftmaxMode::Plain).unwrap();
        for m in 0..3 {
            assert_eq!(out.row(m), v.row(0));
        }
    }

    #[test]
    fn identical_keys_give_mean_value() {
        let q = random(&[2, 1, 3], 1);
        let k = Tensor::<f64>::from_fn(&[4, 1, 3], |i| [0.2, -0.4, 0.7][i % 3]);
        let v = random(&[4, 1, 3], 3);
        let out = attention(&q, &k, &v, SoftmaxMode::Plain).unwrap();
        for d in 0..3 {
            let mean: f64 = (0..4).map(|n| v.data()[n * 3 + d]).sum::<f64>() / 4.0;
            for m in 0..2 {
                assert!((out.data()[m * 3 + d] - mean).abs() < 1e-14);
            }
        }
    }

    fn loop_oracle(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Vec<f64> {
        let (m, h, dh) = (q.dim(0), q.dim(1), q.dim(2));
        let n = k.dim(0);
        let hkv = k.dim(1);
        let mut out = vec![0.0; m * h * dh];
        for mi in 0..m {
            for hi in 0..h {
                let kh = if hkv == 1 { 0 } else { hi };
                let mut logits = vec![0.0; n];
                for ni in 0..n {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += q.data()[(mi * h + hi) * dh + d] * k.data()[(ni * hkv + kh) * dh + d];
                    }
                    logits[ni] = dot / (dh as f64).sqrt();
                }
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                for ni in 0..n {
                    let w = (logits[ni] - mx).exp() / z;
                    for d in 0..dh {
                        out[(mi * h + hi) * dh + d] += w * v.data()[(ni * hkv + kh) * dh + d];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_loop_oracle() {
        let q = random(&[2, 2, 2], 21);
        let k = random(&[3, 2, 2], 22);
        let v = random(&[3, 2, 2], 23);
        let out = attention(&q, &k, &v, SoftmaxMode::Plain).unwrap();
        let want = loop_oracle(&q, &k, &v);
        for (a, b) in out.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn errors() {
        let q = random(&[2, 4, 2], 1);
        let k = random(&[0, 1, 2], 2);
        assert!(matches!(
            attention(&q, &k, &k, SoftmaxMode::Plain),
            Err(Error::EmptyContext)
        ));
        let k = random(&[3, 2, 2], 2);
        assert!(matches!(
            attention(&q, &k, &k, SoftmaxMode::Plain),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn multi_query_equals_copied_heads(seed in 0u64..1000, m in 1usize..4, n in 1usize..6) {
            let h = 3;
            let dh = 4;
            let q = random(&[m, h, dh], seed);
            let k1 = random(&[n, 1, dh], seed + 1);
            let v1 = random(&[n, 1, dh], seed + 2);
            let copy = |t: &Tensor<f64>| Tensor::from_fn(&[n, h, dh], |i| {
                let (ni, d) = (i / (h * dh), i % dh);
                t.data()[ni * dh + d]
            });
            let mlp = random_mlp(dh, 5, seed + 3);
            for mode in [SoftmaxMode::Plain, SoftmaxMode::QassMax(&mlp)] {
                let a = attention(&q, &k1, &v1, mode).unwrap();
                let b = attention(&q, &copy(&k1), &copy(&v1), mode).unwrap();
                prop_assert!(a.max_abs_diff(&b) < 1e-6);
            }
        }
    }
}
