//! Wall-time and peak-memory measurements of forward, cached prediction and
//! cache construction.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{build_kv_cache, forward_chunked, plan_chunks, predict_cached, ChunkOverride};
use crate::model::{ModelInput, Targets, Task, Weights};
use crate::rng;
use crate::tensor::{alloc_scope, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Unchunked,
    Chunked,
    CachedPredict,
    BuildCache,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [BenchMode::Unchunked, BenchMode::Chunked, BenchMode::CachedPredict, BenchMode::BuildCache];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Unchunked => "unchunked",
            BenchMode::Chunked => "chunked",
            BenchMode::CachedPredict => "cached_predict",
            BenchMode::BuildCache => "build_cache",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown bench mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchShape {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub mode: BenchMode,
    /// Median over the timed repetitions.
    pub wall_ms: f64,
    /// Peak tensor payload bytes of one call.
    pub peak_bytes: u64,
    pub seed: u64,
}

fn random_input<T: Scalar>(shape: BenchShape, task: Task, n_classes: usize, seed: u64) -> Result<ModelInput<T>> {
    let mut r = rng::stream(seed, rng::tag("bench"));
    let rows: Vec<Vec<f64>> = (0..shape.n_train + shape.n_test)
        .map(|_| (0..shape.n_features).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let targets = match task {
        Task::Classification => Targets::Classes {
            labels: (0..shape.n_train).map(|_| r.random_range(0..n_classes)).collect(),
            n_classes,
        },
        Task::Regression => Targets::Values((0..shape.n_train).map(|_| r.sample(StandardNormal)).collect()),
    };
    ModelInput::from_rows(&rows, shape.n_train, targets)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Runs one benchmark cell: a warm-up call, then `reps` timed calls. The
/// warm-up call is also the one whose peak bytes are recorded.
pub fn run_bench<T: Scalar>(
    w: &Weights<T>,
    shape: BenchShape,
    mode: BenchMode,
    chunk_size: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchRecord> {
    if shape.n_train == 0 || shape.n_features == 0 {
        return Err(Error::Argument("bench shapes need training rows and features".into()));
    }
    let input = random_input::<T>(shape, w.config.task, 3.min(w.config.c_max), seed)?;
    let train = input.train_part();
    let test = input.cells_only(shape.n_train, shape.n_train + shape.n_test);
    let cache = match mode {
        BenchMode::CachedPredict => Some(build_kv_cache(w, &train, "bench", chunk_size, ChunkOverride::Auto)?),
        _ => None,
    };
    let call = || -> Result<()> {
        match mode {
            BenchMode::Unchunked | BenchMode::Chunked => {
                let m = if mode == BenchMode::Chunked { ChunkOverride::Force } else { ChunkOverride::Off };
                let plan = plan_chunks(shape.n_train, shape.n_test, chunk_size, m);
                forward_chunked(w, &input, &plan).map(drop)
            }
            BenchMode::CachedPredict => {
                predict_cached(cache.as_ref().expect("cache built above"), w, &test, "bench", None).map(drop)
            }
            BenchMode::BuildCache => build_kv_cache(w, &train, "bench", chunk_size, ChunkOverride::Force).map(drop),
        }
    };
    let (res, stats) = alloc_scope(call);
    res?;
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        call()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchRecord {
        n_train: shape.n_train,
        n_test: shape.n_test,
        n_features: shape.n_features,
        mode,
        wall_ms: median(times).max(1e-6),
        peak_bytes: stats.peak_bytes.max(1),
        seed,
    })
}
