use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tfe_core::prior::{generate, PriorHyperparams};

#[derive(clap::Args)]
pub struct Args {
    /// Named hyperparameter preset.
    #[arg(long, conflicts_with = "hp_file")]
    preset: Option<String>,
    /// JSON file with prior hyperparameters.
    #[arg(long)]
    hp_file: Option<PathBuf>,
    /// Seed of the first dataset; dataset `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of datasets.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write a CSV copy of each dataset.
    #[arg(long)]
    csv: bool,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    seed: u64,
    sha256: String,
    n_rows: usize,
    n_features: usize,
    n_classes: Option<usize>,
}

#[derive(Serialize)]
struct Manifest {
    hyperparams: PriorHyperparams,
    datasets: Vec<ManifestEntry>,
}

pub fn run(a: Args) -> Result<()> {
    let (hp, stem) = match (&a.preset, &a.hp_file) {
        (Some(p), None) => (PriorHyperparams::preset(p)?, p.clone()),
        (None, Some(f)) => {
            let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            let hp: PriorHyperparams = serde_json::from_str(&text).map_err(tfe_core::Error::from)?;
            (hp, f.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned()))
        }
        _ => bail!(tfe_core::Error::Config("pass exactly one of --preset or --hp-file".into())),
    };
    let base = PriorHyperparams { seed: a.seed, ..hp.clone() };
    base.validate()?;
    std::fs::create_dir_all(&a.out)?;

    let entries = (0..a.count)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let seed = a.seed + i;
            let task = generate(&PriorHyperparams { seed, ..hp.clone() })?;
            let bytes = task.dataset.to_tfd_bytes();
            let file = format!("{stem}_s{seed}.tfd");
            std::fs::write(a.out.join(&file), &bytes)?;
            if a.csv {
                let f = std::fs::File::create(a.out.join(format!("{stem}_s{seed}.csv")))?;
                task.dataset.write_csv(f)?;
            }
            Ok(ManifestEntry {
                file,
                seed,
                sha256: hex::encode(Sha256::digest(&bytes)),
                n_rows: task.dataset.n_rows(),
                n_features: task.dataset.n_features(),
                n_classes: task.dataset.task.n_classes(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { hyperparams: base, datasets: entries };
    std::fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    for e in &manifest.datasets {
        println!("{}  {}", e.sha256, e.file);
    }
    Ok(())
}
