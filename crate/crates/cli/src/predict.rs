use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use tfe_core::dataset::{Dataset, TaskKind};
use tfe_core::inference::{
    align_predictions, average, build_kv_cache, canonical_edges, decode_quantile, estimator_predict,
    predict_cached, ChunkOverride, EnsembleOptions, KvCache, DEFAULT_CHUNK_SIZE,
};
use tfe_core::model::{ModelConfig, Predictions, Task, Weights};
use tfe_core::preprocess::{configs_for_dataset, EstimatorConfig, FittedView};
use tfe_core::tensor::Scalar;

#[derive(Clone, Copy, clap::ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(clap::Args)]
pub struct Args {
    /// Dataset file (TFD1).
    #[arg(long)]
    data: PathBuf,
    /// Weights file; its embedded config is used.
    #[arg(long, conflicts_with = "init_seed")]
    weights: Option<PathBuf>,
    /// Use freshly initialized weights with this seed.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Model profile for --init-seed: micro, small or standard.
    #[arg(long, default_value = "micro")]
    config: String,
    #[arg(long, default_value_t = 1)]
    estimators: usize,
    #[arg(long, default_value_t = 500)]
    max_feats: usize,
    /// Seed of the estimator configs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force row chunking with this chunk size; otherwise chunking follows
    /// the row-count threshold.
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Directory holding one train-side cache per estimator; caches are
    /// built on first use and reused afterwards.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// Quantile levels written for regression tasks.
pub const OUTPUT_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub fn run(a: Args) -> Result<()> {
    let data = Dataset::load(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    data.validate()?;
    match a.precision {
        Precision::F32 => run_typed::<f32>(&a, &data),
        Precision::F64 => run_typed::<f64>(&a, &data),
    }
}

fn load_weights<T: Scalar>(a: &Args, data: &Dataset) -> Result<Weights<T>> {
    let task = match data.task {
        TaskKind::Classification { .. } => Task::Classification,
        TaskKind::Regression => Task::Regression,
    };
    let w = match &a.weights {
        Some(p) => Weights::load(p, None).with_context(|| format!("reading {}", p.display()))?,
        None => Weights::init(&ModelConfig::by_name(&a.config, task)?, a.init_seed.unwrap_or(0))?,
    };
    if w.config.task != task {
        return Err(tfe_core::Error::Config("weights task does not match the dataset".into()).into());
    }
    Ok(w)
}

/// Identifies an estimator's training context: its config plus the training
/// rows and targets it saw.
fn estimator_hash(cfg: &EstimatorConfig, data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(cfg.to_line().as_bytes());
    for r in data.train_indices() {
        for col in &data.columns {
            h.update(col[r].to_le_bytes());
        }
        h.update(data.y[r].to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn cached_estimator<T: Scalar>(
    cfg: &EstimatorConfig,
    w: &Weights<T>,
    data: &Dataset,
    dir: &Path,
    opts: &EnsembleOptions,
    edges: Option<&[f64]>,
) -> Result<Predictions> {
    let view = FittedView::fit(data, cfg)?;
    let hash = estimator_hash(cfg, data);
    let path = dir.join(format!("est{}_{}.tpfc", cfg.estimator_index, &hash[..16]));
    let cache = if path.exists() {
        eprintln!("reusing cache {}", path.display());
        KvCache::<T>::load(&path)?
    } else {
        let c = build_kv_cache(w, &view.train_input(data)?, &hash, opts.chunk_size, opts.chunking)?;
        c.save(&path)?;
        eprintln!("wrote cache {}", path.display());
        c
    };
    let test = view.rows_input::<T>(data, &data.test_indices())?;
    let p = predict_cached(&cache, w, &test, &hash, None)?;
    Ok(align_predictions(&view, p, edges)?)
}

fn run_typed<T: Scalar>(a: &Args, data: &Dataset) -> Result<()> {
    let w = load_weights::<T>(a, data)?;
    let opts = EnsembleOptions {
        chunk_size: a.chunk_size.unwrap_or(DEFAULT_CHUNK_SIZE),
        chunking: if a.chunk_size.is_some() { ChunkOverride::Force } else { ChunkOverride::Auto },
        parallel: false,
    };
    let configs = configs_for_dataset(data, a.estimators, a.max_feats, a.seed);
    let edges = canonical_edges(data, w.config.n_buckets);
    if let Some(dir) = &a.cache {
        std::fs::create_dir_all(dir)?;
    }
    let parts = configs
        .iter()
        .map(|cfg| match &a.cache {
            Some(dir) => cached_estimator(cfg, &w, data, dir, &opts, edges.as_deref()),
            None => Ok(estimator_predict(cfg, &w, data, &opts, edges.as_deref())?),
        })
        .collect::<Result<Vec<_>>>()?;
    write_predictions(&a.out, &average(&parts)?, &data.test_indices())
}

fn write_predictions(path: &Path, p: &Predictions, rows: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    match p {
        Predictions::Probs(probs) => {
            let c = probs.first().map_or(0, Vec::len);
            let mut header = vec!["row_id".to_string()];
            header.extend((0..c).map(|k| format!("p{k}")));
            out.write_record(&header)?;
            for (r, row) in rows.iter().zip(probs) {
                let mut rec = vec![r.to_string()];
                rec.extend(row.iter().map(f64::to_string));
                out.write_record(&rec)?;
            }
        }
        Predictions::Bars(bars) => {
            let mut header = vec!["row_id".to_string()];
            header.extend(OUTPUT_LEVELS.iter().map(|q| format!("q{}", (q * 100.0).round() as u32)));
            out.write_record(&header)?;
            for (r, bar) in rows.iter().zip(bars) {
                let mut rec = vec![r.to_string()];
                for &q in &OUTPUT_LEVELS {
                    rec.push(decode_quantile(bar, q)?.to_string());
                }
                out.write_record(&rec)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
