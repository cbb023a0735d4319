//! Synthetic supervised tasks from sampled structural causal models.
//!
//! Generation runs five steps: hyperparameters, DAG and per-node noise,
//! topological evaluation, feature/target selection, post-processing.
//! Everything is a pure function of the hyperparameters (which carry the
//! seed).

pub mod evaluate;
pub mod finalize;
pub mod graph;
pub mod mechanism;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

pub use evaluate::{evaluate_scm, evaluate_scm_shifted, RootShift};
pub use finalize::{rank_bin, select_and_finalize, Selection};
pub use graph::{dfs_is_acyclic, sample_dag, topological_order, Noise, NodeSpec, ScmGraph};
pub use mechanism::{Activation, ActivationKind, Mechanism, MechanismKind};

/// Largest class count the model supports.
pub const MAX_CLASSES: usize = 160;

pub(crate) const STREAM_GRAPH: u64 = 1 << 32;
pub(crate) const STREAM_SPLIT: u64 = (1 << 32) + 1;
pub(crate) const STREAM_SELECT: u64 = (1 << 32) + 2;
pub(crate) const STREAM_OOD: u64 = (1 << 32) + 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphAlgorithm {
    ScaleFree,
    Layered,
    RandomDag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
    Mixed,
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_ood_shift() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorHyperparams {
    pub n_rows: usize,
    pub n_features: usize,
    pub n_nodes: usize,
    pub graph_algorithm: GraphAlgorithm,
    /// `None` for regression.
    pub n_classes: Option<usize>,
    pub noise_family: NoiseFamily,
    pub ood_mode: bool,
    pub missing_rate: f64,
    pub categorical_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Edge probability for `random_dag`; drawn when absent.
    #[serde(default)]
    pub edge_prob: Option<f64>,
    /// Layer count for `layered`; drawn when absent.
    #[serde(default)]
    pub n_layers: Option<usize>,
    /// Root-noise shift for out-of-distribution test rows, in noise std units.
    #[serde(default = "default_ood_shift")]
    pub ood_shift: f64,
}

impl PriorHyperparams {
    pub const PRESETS: [&'static str; 6] =
        ["micro-cls", "micro-reg", "small-cls", "small-reg", "many-class", "ood-reg"];

    pub fn preset(name: &str) -> Result<PriorHyperparams> {
        let base = PriorHyperparams {
            n_rows: 64,
            n_features: 4,
            n_nodes: 8,
            graph_algorithm: GraphAlgorithm::ScaleFree,
            n_classes: Some(3),
            noise_family: NoiseFamily::Gaussian,
            ood_mode: false,
            missing_rate: 0.0,
            categorical_fraction: 0.0,
            seed: 0,
            train_fraction: 0.7,
            edge_prob: None,
            n_layers: None,
            ood_shift: 3.0,
        };
        Ok(match name {
            "micro-cls" => base,
            "micro-reg" => PriorHyperparams { n_classes: None, ..base },
            "small-cls" => PriorHyperparams {
                n_rows: 256,
                n_features: 10,
                n_nodes: 16,
                graph_algorithm: GraphAlgorithm::Layered,
                n_classes: Some(5),
                noise_family: NoiseFamily::Mixed,
                missing_rate: 0.05,
                categorical_fraction: 0.2,
                ..base
            },
            "small-reg" => PriorHyperparams {
                n_rows: 256,
                n_features: 10,
                n_nodes: 16,
                graph_algorithm: GraphAlgorithm::RandomDag,
                n_classes: None,
                noise_family: NoiseFamily::Uniform,
                missing_rate: 0.05,
                categorical_fraction: 0.2,
                ..base
            },
            "many-class" => PriorHyperparams {
                n_rows: 3000,
                n_features: 12,
                n_nodes: 20,
                graph_algorithm: GraphAlgorithm::RandomDag,
                n_classes: Some(100),
                ..base
            },
            "ood-reg" => PriorHyperparams {
                n_rows: 256,
                n_features: 6,
                n_nodes: 12,
                n_classes: None,
                ood_mode: true,
                ..base
            },
            other => return Err(Error::Config(format!("unknown preset `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::Config("n_nodes must be at least 2".into()));
        }
        if self.n_nodes < self.n_features + 1 {
            return Err(Error::Config(format!(
                "n_nodes ({}) must be at least n_features + 1 ({})",
                self.n_nodes,
                self.n_features + 1
            )));
        }
        if self.n_features == 0 {
            return Err(Error::Config("n_features must be positive".into()));
        }
        if let Some(k) = self.n_classes {
            if !(2..=MAX_CLASSES).contains(&k) {
                return Err(Error::Config(format!(
                    "n_classes must be in 2..={MAX_CLASSES}, got {k}"
                )));
            }
        }
        for (name, v) in [("missing_rate", self.missing_rate), ("categorical_fraction", self.categorical_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if self.n_rows < 2 {
            return Err(Error::Config("n_rows must be at least 2".into()));
        }
        Ok(())
    }
}

/// A generated task with the SCM it came from.
#[derive(Debug, Clone)]
pub struct GeneratedTask {
    pub dataset: Dataset,
    pub graph: ScmGraph,
    pub selection: Selection,
}

/// Random train/test assignment with `round(n * train_fraction)` train rows,
/// clamped so both splits are non-empty.
pub fn sample_split(hp: &PriorHyperparams) -> Vec<Split> {
    let n = hp.n_rows;
    let n_train = ((n as f64 * hp.train_fraction).round() as usize).clamp(1, n - 1);
    let mut split: Vec<Split> = (0..n)
        .map(|i| if i < n_train { Split::Train } else { Split::Test })
        .collect();
    split.shuffle(&mut rng::stream(hp.seed, STREAM_SPLIT));
    split
}

/// Out-of-distribution shift: each root is shifted with probability 1/2
/// (at least one root), by `±ood_shift` noise standard deviations, on test rows.
pub fn sample_root_shift(graph: &ScmGraph, hp: &PriorHyperparams, split: &[Split]) -> RootShift {
    let mut rng = rng::stream(hp.seed, STREAM_OOD);
    let roots = graph.roots();
    let mut offsets = vec![0.0; graph.n_nodes];
    let forced = roots[rng.random_range(0..roots.len())];
    for &r in &roots {
        if r == forced || rng.random_bool(0.5) {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            offsets[r] = sign * hp.ood_shift * graph.nodes[r].noise.std();
        }
    }
    RootShift { rows: split.iter().map(|&s| s == Split::Test).collect(), offsets }
}

/// Run the full generation pipeline.
pub fn generate(hp: &PriorHyperparams) -> Result<GeneratedTask> {
    hp.validate()?;
    let graph = sample_dag(hp)?;
    let split = sample_split(hp);
    let shift = hp.ood_mode.then(|| sample_root_shift(&graph, hp, &split));
    let values = evaluate_scm_shifted(&graph, hp.n_rows, hp.seed, shift.as_ref())?;
    let (dataset, selection) = select_and_finalize(&values, &graph, hp, &split)?;
    Ok(GeneratedTask { dataset, graph, selection })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_generate() {
        for name in PriorHyperparams::PRESETS {
            let hp = PriorHyperparams::preset(name).unwrap();
            hp.validate().unwrap();
            let task = generate(&hp).unwrap();
            assert_eq!(task.dataset.n_rows(), hp.n_rows);
            assert_eq!(task.dataset.n_features(), hp.n_features);
            assert!(!task.selection.feature_nodes.contains(&task.selection.target_node));
        }
        assert!(PriorHyperparams::preset("huge").is_err());
    }

    #[test]
    fn rejects_too_many_classes() {
        let mut hp = PriorHyperparams::preset("micro-cls").unwrap();
        hp.n_classes = Some(200);
        assert!(matches!(hp.validate(), Err(Error::Config(_))));
        hp.n_classes = Some(160);
        hp.validate().unwrap();
        hp.n_nodes = hp.n_features;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut hp = PriorHyperparams::preset("small-cls").unwrap();
        hp.seed = 77;
        let a = generate(&hp).unwrap().dataset.to_tfd_bytes();
        let b = generate(&hp).unwrap().dataset.to_tfd_bytes();
        assert_eq!(a, b);
        hp.seed = 78;
        assert_ne!(a, generate(&hp).unwrap().dataset.to_tfd_bytes());
    }

    #[test]
    fn no_missing_at_zero_rate() {
        let hp = PriorHyperparams::preset("micro-cls").unwrap();
        let ds = generate(&hp).unwrap().dataset;
        assert!(ds.nan_mask().iter().flatten().all(|&m| !m));
    }

    #[test]
    fn missing_rate_roughly_respected() {
        let mut hp = PriorHyperparams::preset("small-reg").unwrap();
        hp.missing_rate = 0.2;
        let ds = generate(&hp).unwrap().dataset;
        let frac = ds.nan_mask().iter().flatten().filter(|&&m| m).count() as f64
            / (ds.n_rows() * ds.n_features()) as f64;
        assert!((frac - 0.2).abs() < 0.05, "{frac}");
    }

    #[test]
    fn hyperparams_json_round_trip() {
        let hp = PriorHyperparams::preset("ood-reg").unwrap();
        let s = serde_json::to_string(&hp).unwrap();
        assert!(s.contains("\"scale_free\""));
        let back: PriorHyperparams = serde_json::from_str(&s).unwrap();
        assert_eq!(hp, back);
    }
}
