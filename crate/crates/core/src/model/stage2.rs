//! Feature aggregation: per row, CLS tokens and the row's group embeddings
//! attend to each other; the CLS outputs are concatenated.

use super::layers::feed_forward;
use super::weights::Weights;
use crate::error::Result;
use crate::tensor::{add_assign, attention, linear, rmsnorm_rows, rope_rotate, Scalar, SoftmaxMode, Tensor};

/// `cells: [R, G, D]` -> `[R, n_cls * D]`.
pub fn stage2_aggregate<T: Scalar>(w: &Weights<T>, cells: &Tensor<T>) -> Result<Tensor<T>> {
    let c = &w.config;
    let (r, g, d) = (cells.dim(0), cells.dim(1), cells.dim(2));
    let n_cls = c.n_cls_tokens;
    let len = n_cls + g;
    let heads = c.agg_heads;
    let hd = c.agg_head_dim();
    let eps = T::lit(c.norm_eps);

    let mut seq = Tensor::zeros(&[r * len, d]);
    for i in 0..r {
        let dst = &mut seq.data_mut()[i * len * d..(i + 1) * len * d];
        dst[..n_cls * d].copy_from_slice(w.stage2.cls.data());
        dst[n_cls * d..].copy_from_slice(&cells.data()[i * g * d..(i + 1) * g * d]);
    }

    for block in &w.stage2.blocks {
        let a = &block.attn;
        let n = rmsnorm_rows(&seq, &a.norm, eps)?;
        let mut q = linear(&n, &a.wq, None)?;
        let mut k = linear(&n, &a.wk, None)?;
        let v = linear(&n, &a.wv, None)?;
        drop(n);
        for t in 0..r * len {
            let pos = (t % len) as f64;
            for h in 0..heads {
                rope_rotate(&mut q.row_mut(t)[h * hd..(h + 1) * hd], pos, c.rope_base);
                rope_rotate(&mut k.row_mut(t)[h * hd..(h + 1) * hd], pos, c.rope_base);
            }
        }
        let mut o = Tensor::zeros(&[r * len, d]);
        for i in 0..r {
            let span = |t: &Tensor<T>| t.slice_rows(i * len, (i + 1) * len).reshape(&[len, heads, hd]);
            let oi = attention(&span(&q)?, &span(&k)?, &span(&v)?, SoftmaxMode::Plain)?;
            o.data_mut()[i * len * d..(i + 1) * len * d].copy_from_slice(oi.data());
        }
        drop((q, k, v));
        let out = linear(&o, &a.wo, None)?;
        add_assign(&mut seq, &out)?;
        drop((o, out));
        feed_forward(&block.ff, &mut seq, eps)?;
    }

    let mut cls_rows = Tensor::zeros(&[r * n_cls, d]);
    for i in 0..r {
        cls_rows.data_mut()[i * n_cls * d..(i + 1) * n_cls * d]
            .copy_from_slice(&seq.data()[i * len * d..(i * len + n_cls) * d]);
    }
    drop(seq);
    rmsnorm_rows(&cls_rows, &w.stage2.final_norm, eps)?.reshape(&[r, n_cls * d])
}
