use std::path::PathBuf;

use anyhow::{anyhow, Result};
use tfe_core::bench::{run_bench, BenchMode, BenchShape};
use tfe_core::inference::DEFAULT_CHUNK_SIZE;
use tfe_core::model::{ModelConfig, Task, Weights};

#[derive(clap::Args)]
pub struct Args {
    /// Shape grid, e.g. `rows=512:2048,feats=8:40,test=100`; `rows` counts
    /// training rows. Lists are colon separated.
    #[arg(long)]
    grid: String,
    /// Comma-separated modes: unchunked, chunked, cached_predict, build_cache.
    #[arg(long, default_value = "unchunked,chunked")]
    modes: String,
    #[arg(long, default_value = "micro")]
    config: String,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Timed repetitions after one warm-up call.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn parse_list(v: &str) -> Result<Vec<usize>> {
    v.split(':')
        .map(|x| x.trim().parse::<usize>().map_err(|_| anyhow!("bad grid value `{x}`")))
        .collect()
}

pub fn parse_grid(grid: &str) -> Result<Vec<BenchShape>> {
    let (mut rows, mut feats, mut test) = (None, None, vec![100]);
    for part in grid.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| tfe_core::Error::Config(format!("grid entry `{part}` is not key=values")))?;
        match k.trim() {
            "rows" => rows = Some(parse_list(v)?),
            "feats" => feats = Some(parse_list(v)?),
            "test" => test = parse_list(v)?,
            other => return Err(tfe_core::Error::Config(format!("unknown grid key `{other}`")).into()),
        }
    }
    let (rows, feats) = rows
        .zip(feats)
        .ok_or_else(|| tfe_core::Error::Config("grid needs rows= and feats=".into()))?;
    let mut shapes = Vec::new();
    for &n_train in &rows {
        for &n_features in &feats {
            for &n_test in &test {
                shapes.push(BenchShape { n_train, n_test, n_features });
            }
        }
    }
    Ok(shapes)
}

pub fn run(a: Args) -> Result<()> {
    let shapes = parse_grid(&a.grid)?;
    let modes = a
        .modes
        .split(',')
        .map(|m| m.trim().parse::<BenchMode>())
        .collect::<tfe_core::Result<Vec<_>>>()?;
    let w = Weights::<f32>::init(&ModelConfig::by_name(&a.config, Task::Classification)?, a.seed)?;
    let mut out = csv::Writer::from_path(&a.out)?;
    for shape in shapes {
        for &mode in &modes {
            let rec = run_bench(&w, shape, mode, a.chunk_size, a.reps, a.seed)?;
            eprintln!(
                "{} train / {} test / {} feats  {:<14} {:>10.3} ms {:>12} B",
                rec.n_train, rec.n_test, rec.n_features, rec.mode, rec.wall_ms, rec.peak_bytes
            );
            out.serialize(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}
