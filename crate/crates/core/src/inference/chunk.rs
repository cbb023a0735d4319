//! Two-phase row chunking for the pre-ICL stages.
//!
//! Phase (i) computes every Stage-1 inducing state over the training rows,
//! one column group at a time. Phase (ii) streams fixed-size row slices
//! through cell embedding, the read-back half of Stage 1 and Stage 2. Every
//! per-row operation is row-independent, so the assembled row embeddings
//! equal the unchunked ones exactly.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::Result;
use crate::model::embed::{embed_group, embed_rows, target_scale};
use crate::model::forward::{check_input, encode_rows, finish, ForwardOutput};
use crate::model::input::{ModelInput, TargetScale};
use crate::model::stage1::{put_group, stack_inducing, stage1_broadcast, stage1_group, take_group};
use crate::model::stage2::stage2_aggregate;
use crate::model::Weights;
use crate::tensor::{Scalar, Tensor};

/// Chunking turns on above this many rows (train + test).
pub const CHUNK_THRESHOLD: usize = 2048;
pub const DEFAULT_CHUNK_SIZE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChunkOverride {
    /// Enabled iff `n_train + n_test > 2048`.
    #[default]
    Auto,
    Force,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk_size: usize,
    /// Half-open row ranges partitioning `[0, R)` in order.
    pub chunk_ranges: Vec<Range<usize>>,
    pub enabled: bool,
}

pub fn plan_chunks(n_train: usize, n_test: usize, chunk_size: usize, mode: ChunkOverride) -> ChunkPlan {
    let chunk_size = chunk_size.max(1);
    let r = n_train + n_test;
    let enabled = match mode {
        ChunkOverride::Auto => r > CHUNK_THRESHOLD,
        ChunkOverride::Force => true,
        ChunkOverride::Off => false,
    };
    let chunk_ranges = if enabled {
        (0..r.div_ceil(chunk_size)).map(|i| i * chunk_size..((i + 1) * chunk_size).min(r)).collect()
    } else {
        vec![0..r]
    };
    ChunkPlan { chunk_size, chunk_ranges, enabled }
}

/// How phase-(ii) chunks are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChunkExec {
    #[default]
    Sequential,
    Reversed,
    Parallel,
}

/// Phase (i): per-group inducing states over the training rows,
/// `per_group[g][b]` of shape `[K, D]`.
pub fn inducing_states<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    scale: Option<TargetScale>,
) -> Result<Vec<Vec<Tensor<T>>>> {
    let g_count = w.config.n_groups(input.n_features());
    (0..g_count)
        .map(|g| {
            let x = embed_group(w, input, g, 0..input.n_train, scale)?;
            stage1_group(w, x, input.n_train).map(|(_, states)| states)
        })
        .collect()
}

/// Phase (ii) for one row range: `[len, E]` row embeddings.
pub fn encode_chunk<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    rows: Range<usize>,
    per_group: &[Vec<Tensor<T>>],
    scale: Option<TargetScale>,
) -> Result<Tensor<T>> {
    let mut cells = embed_rows(w, input, rows, scale)?;
    for (g, states) in per_group.iter().enumerate() {
        let x = stage1_broadcast(w, take_group(&cells, g), states)?;
        put_group(&mut cells, g, &x);
    }
    stage2_aggregate(w, &cells)
}

/// Row embeddings `[R, E]` and stacked inducing states, following `plan`.
pub fn encode_rows_chunked<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    plan: &ChunkPlan,
    exec: ChunkExec,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    if !plan.enabled {
        return encode_rows(w, input);
    }
    let scale = target_scale(&input.targets);
    let per_group = inducing_states(w, input, scale)?;
    let e = w.config.icl_emsize();
    let mut out = Tensor::zeros(&[input.n_rows(), e]);
    let mut write = |range: &Range<usize>, part: &Tensor<T>| {
        out.data_mut()[range.start * e..range.end * e].copy_from_slice(part.data());
    };
    match exec {
        ChunkExec::Sequential | ChunkExec::Reversed => {
            let mut ranges = plan.chunk_ranges.clone();
            if exec == ChunkExec::Reversed {
                ranges.reverse();
            }
            for range in ranges {
                let part = encode_chunk(w, input, range.clone(), &per_group, scale)?;
                write(&range, &part);
            }
        }
        ChunkExec::Parallel => {
            let parts: Vec<Result<Tensor<T>>> = plan
                .chunk_ranges
                .par_iter()
                .map(|range| encode_chunk(w, input, range.clone(), &per_group, scale))
                .collect();
            for (range, part) in plan.chunk_ranges.iter().zip(parts) {
                write(range, &part?);
            }
        }
    }
    Ok((out, stack_inducing(&per_group)?))
}

/// Forward pass with the pre-ICL stages run according to `plan`.
pub fn forward_chunked<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    plan: &ChunkPlan,
) -> Result<ForwardOutput<T>> {
    forward_chunked_with(w, input, plan, ChunkExec::Sequential)
}

pub fn forward_chunked_with<T: Scalar>(
    w: &Weights<T>,
    input: &ModelInput<T>,
    plan: &ChunkPlan,
    exec: ChunkExec,
) -> Result<ForwardOutput<T>> {
    check_input(w, input)?;
    let (rows, inducing) = encode_rows_chunked(w, input, plan, exec)?;
    finish(w, rows, &input.targets, inducing)
}
