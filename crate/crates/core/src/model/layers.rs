//! Building blocks shared by the three stages.

use super::weights::{CrossAttention, FeedForward};
use crate::error::Result;
use crate::tensor::{add_assign, attention, gelu, linear, rmsnorm_rows, Scalar, SoftmaxMode, Tensor};

/// Multi-head attention over already-normalized inputs, including the output
/// projection. `q_in: [M, Din]`, `kv_in: [N, Din]`.
#[allow(clippy::too_many_arguments)]
pub fn mha<T: Scalar>(
    q_in: &Tensor<T>,
    kv_in: &Tensor<T>,
    wq: &Tensor<T>,
    wk: &Tensor<T>,
    wv: &Tensor<T>,
    wo: &Tensor<T>,
    heads: usize,
    kv_heads: usize,
    mode: SoftmaxMode<'_, T>,
) -> Result<Tensor<T>> {
    let (m, n) = (q_in.dim(0), kv_in.dim(0));
    let head_dim = wq.dim(1) / heads;
    let q = linear(q_in, wq, None)?.reshape(&[m, heads, head_dim])?;
    let k = linear(kv_in, wk, None)?.reshape(&[n, kv_heads, head_dim])?;
    let v = linear(kv_in, wv, None)?.reshape(&[n, kv_heads, head_dim])?;
    let o = attention(&q, &k, &v, mode)?.reshape(&[m, heads * head_dim])?;
    linear(&o, wo, None)
}

/// `x += W2 gelu(W1 rms(x) + b1) + b2`.
pub fn feed_forward<T: Scalar>(ff: &FeedForward<T>, x: &mut Tensor<T>, eps: T) -> Result<()> {
    let h = rmsnorm_rows(x, &ff.norm, eps)?;
    let mut h = linear(&h, &ff.w1, Some(&ff.b1))?;
    h.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    let out = linear(&h, &ff.w2, Some(&ff.b2))?;
    add_assign(x, &out)
}

/// `x += CrossAttn(rms_q(x), rms_kv(context))` with QASSMax.
pub fn cross_attend<T: Scalar>(
    attn: &CrossAttention<T>,
    x: &mut Tensor<T>,
    context: &Tensor<T>,
    heads: usize,
    eps: T,
) -> Result<()> {
    let q = rmsnorm_rows(x, &attn.norm_q, eps)?;
    let kv = rmsnorm_rows(context, &attn.norm_kv, eps)?;
    let out = mha(&q, &kv, &attn.wq, &attn.wk, &attn.wv, &attn.wo, heads, heads, SoftmaxMode::QassMax(&attn.scale))?;
    add_assign(x, &out)
}
