//! Distribution embedding: per column group, inducing points summarize the
//! training rows and every row reads that summary back. Nothing attends row
//! to row.

use super::layers::{cross_attend, feed_forward};
use super::weights::{InducingBlock, Weights};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Inducing states of one block for one group: `[K, D]`.
fn gather<T: Scalar>(
    block: &InducingBlock<T>,
    train_rows: &Tensor<T>,
    heads: usize,
    eps: T,
) -> Result<Tensor<T>> {
    let mut ind = block.inducing.clone();
    cross_attend(&block.gather, &mut ind, train_rows, heads, eps)?;
    feed_forward(&block.gather_ff, &mut ind, eps)?;
    Ok(ind)
}

fn broadcast<T: Scalar>(
    block: &InducingBlock<T>,
    x: &mut Tensor<T>,
    states: &Tensor<T>,
    heads: usize,
    eps: T,
) -> Result<()> {
    cross_attend(&block.broadcast, x, states, heads, eps)?;
    feed_forward(&block.broadcast_ff, x, eps)
}

/// Runs every block on one group. `x: [R, D]` with the first `n_train` rows
/// being training rows. Returns the updated rows and the per-block inducing
/// states.
pub fn stage1_group<T: Scalar>(
    w: &Weights<T>,
    mut x: Tensor<T>,
    n_train: usize,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let heads = w.config.dist_heads;
    let eps = T::lit(w.config.norm_eps);
    let mut states = Vec::with_capacity(w.stage1.len());
    for block in &w.stage1 {
        let ind = if n_train == x.dim(0) {
            gather(block, &x, heads, eps)?
        } else {
            gather(block, &x.slice_rows(0, n_train), heads, eps)?
        };
        broadcast(block, &mut x, &ind, heads, eps)?;
        states.push(ind);
    }
    Ok((x, states))
}

/// Applies only the read-back half of every block against precomputed
/// inducing states (`states[b]` is `[K, D]`). Row-independent.
pub fn stage1_broadcast<T: Scalar>(w: &Weights<T>, mut x: Tensor<T>, states: &[Tensor<T>]) -> Result<Tensor<T>> {
    let heads = w.config.dist_heads;
    let eps = T::lit(w.config.norm_eps);
    for (block, ind) in w.stage1.iter().zip(states) {
        broadcast(block, &mut x, ind, heads, eps)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output<T: Scalar> {
    /// `[R, G, D]`
    pub cells: Tensor<T>,
    /// Per block `[G, K, D]`.
    pub inducing: Vec<Tensor<T>>,
}

/// Extracts group `g` from `[R, G, D]` as `[R, D]`.
pub fn take_group<T: Scalar>(cells: &Tensor<T>, g: usize) -> Tensor<T> {
    let (r, gc, d) = (cells.dim(0), cells.dim(1), cells.dim(2));
    Tensor::from_fn(&[r, d], |i| cells.data()[((i / d) * gc + g) * d + i % d])
}

/// Writes `[R, D]` back into group `g` of `[R, G, D]`.
pub fn put_group<T: Scalar>(cells: &mut Tensor<T>, g: usize, x: &Tensor<T>) {
    let (r, gc, d) = (cells.dim(0), cells.dim(1), cells.dim(2));
    for i in 0..r {
        cells.data_mut()[(i * gc + g) * d..(i * gc + g + 1) * d].copy_from_slice(x.row(i));
    }
}

/// Stacks per-group states (`per_group[g][b]` is `[K, D]`) into per-block
/// `[G, K, D]` tensors.
pub fn stack_inducing<T: Scalar>(per_group: &[Vec<Tensor<T>>]) -> Result<Vec<Tensor<T>>> {
    let n_blocks = per_group.first().map_or(0, Vec::len);
    (0..n_blocks)
        .map(|b| {
            let parts: Vec<Tensor<T>> = per_group.iter().map(|gs| gs[b].clone()).collect();
            let (k, d) = (parts[0].dim(0), parts[0].dim(1));
            let flat = Tensor::concat_rows(&parts)?;
            flat.reshape(&[per_group.len(), k, d])
        })
        .collect()
}

/// Slice of a stacked `[G, K, D]` tensor for group `g`.
pub fn group_states<T: Scalar>(stacked: &[Tensor<T>], g: usize) -> Vec<Tensor<T>> {
    stacked
        .iter()
        .map(|t| {
            let (k, d) = (t.dim(1), t.dim(2));
            Tensor::new(&[k, d], t.data()[g * k * d..(g + 1) * k * d].to_vec()).expect("slice shape")
        })
        .collect()
}

/// Stage 1 over all groups of `[R, G, D]` embeddings.
pub fn stage1_distribution_embed<T: Scalar>(
    w: &Weights<T>,
    group_embeds: Tensor<T>,
    n_train: usize,
) -> Result<Stage1Output<T>> {
    let mut cells = group_embeds;
    let g_count = cells.dim(1);
    let mut per_group = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let x = take_group(&cells, g);
        let (x, states) = stage1_group(w, x, n_train)?;
        put_group(&mut cells, g, &x);
        per_group.push(states);
    }
    Ok(Stage1Output { cells, inducing: stack_inducing(&per_group)? })
}
