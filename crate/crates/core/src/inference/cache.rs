//! Train-side KV cache: per-block inducing states, per-layer keys/values of
//! the test attention path, and the final training embeddings.

use std::io::{Read, Write};
use std::path::Path;

use super::chunk::{encode_chunk, encode_rows_chunked, plan_chunks, ChunkExec, ChunkOverride, ChunkPlan};
use crate::error::{Error, Result};
use crate::model::decoder::one_hot;
use crate::model::forward::{check_input, decode, Predictions};
use crate::model::input::{ModelInput, Targets};
use crate::model::stage1::group_states;
use crate::model::stage3::{stage3_icl, stage3_test};
use crate::model::{embed::target_scale, ModelConfig, Weights};
use crate::records::{read_records, write_records, Record};
use crate::tensor::{Scalar, Tensor};

pub const CACHE_MAGIC: &[u8; 4] = b"TPFC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KvCache<T: Scalar = f32> {
    pub config_hash: String,
    pub estimator_hash: String,
    /// Per Stage-1 block `[G, K, D]`.
    pub inducing_states: Vec<Tensor<T>>,
    /// Per ICL layer `[N_train, 2, head_dim]` (keys then values).
    pub icl_kv: Vec<Tensor<T>>,
    /// `[N_train, E]`, after the final norm.
    pub final_train_embeds: Tensor<T>,
    /// Labels (classification) or raw targets (regression) of the training rows.
    pub train_targets: Targets,
}

/// Builds the cache from a training-only input. `estimator_hash` identifies
/// the preprocessing that produced the input.
pub fn build_kv_cache<T: Scalar>(
    w: &Weights<T>,
    train: &ModelInput<T>,
    estimator_hash: &str,
    chunk_size: usize,
    mode: ChunkOverride,
) -> Result<KvCache<T>> {
    if train.n_test() != 0 {
        return Err(Error::Argument("cache input must contain training rows only".into()));
    }
    check_input(w, train)?;
    let plan = plan_chunks(train.n_train, 0, chunk_size, mode);
    let (rows, inducing) = encode_rows_chunked(w, train, &plan, ChunkExec::Sequential)?;
    let out = stage3_icl(w, rows, &train.targets, target_scale(&train.targets))?;
    Ok(KvCache {
        config_hash: w.config.hash(),
        estimator_hash: estimator_hash.to_string(),
        inducing_states: inducing,
        icl_kv: out.test_kv,
        final_train_embeds: out.final_embeds,
        train_targets: train.targets.clone(),
    })
}

impl<T: Scalar> KvCache<T> {
    pub fn n_train(&self) -> usize {
        self.final_train_embeds.dim(0)
    }

    /// `[N, C]` one-hot labels for classification caches.
    pub fn train_label_onehot(&self) -> Option<Tensor<T>> {
        match &self.train_targets {
            Targets::Classes { labels, n_classes } => Some(one_hot(labels, *n_classes)),
            Targets::Values(_) => None,
        }
    }

    /// Payload bytes of the cached tensors.
    pub fn nbytes(&self) -> usize {
        self.inducing_states.iter().chain(&self.icl_kv).map(Tensor::nbytes).sum::<usize>()
            + self.final_train_embeds.nbytes()
    }

    fn per_group_states(&self) -> Vec<Vec<Tensor<T>>> {
        let g_count = self.inducing_states.first().map_or(0, |t| t.dim(0));
        (0..g_count).map(|g| group_states(&self.inducing_states, g)).collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut recs = vec![
            Record::from_text("config_hash", &self.config_hash),
            Record::from_text("estimator_hash", &self.estimator_hash),
        ];
        for (b, t) in self.inducing_states.iter().enumerate() {
            recs.push(Record::from_tensor(&format!("inducing.{b}"), t));
        }
        for (l, t) in self.icl_kv.iter().enumerate() {
            recs.push(Record::from_tensor(&format!("icl_kv.{l}"), t));
        }
        recs.push(Record::from_tensor("final_train_embeds", &self.final_train_embeds));
        match &self.train_targets {
            Targets::Classes { labels, n_classes } => {
                recs.push(Record::from_text("n_classes", &n_classes.to_string()));
                let l: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
                recs.push(Record::from_tensor("train_labels", &Tensor::<f64>::new(&[l.len()], l)?));
            }
            Targets::Values(v) => {
                recs.push(Record::from_tensor("train_values", &Tensor::<f64>::new(&[v.len()], v.clone())?));
            }
        }
        write_records(w, CACHE_MAGIC, CACHE_VERSION, &recs)
    }

    pub fn read<R: Read>(r: R) -> Result<KvCache<T>> {
        let (version, recs) = read_records(r, CACHE_MAGIC)?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        let find = |name: &str| recs.iter().find(|r| r.name == name);
        let need = |name: &str| find(name).ok_or_else(|| Error::Format(format!("cache has no `{name}` record")));
        let indexed = |prefix: &str| -> Result<Vec<Tensor<T>>> {
            let mut out = Vec::new();
            while let Some(rec) = find(&format!("{prefix}.{}", out.len())) {
                out.push(rec.to_tensor()?);
            }
            Ok(out)
        };
        let train_targets = if let Some(rec) = find("train_labels") {
            let n_classes: usize = need("n_classes")?
                .text()?
                .parse()
                .map_err(|_| Error::Format("bad class count in cache".into()))?;
            let labels = rec.to_tensor::<f64>()?.data().iter().map(|&v| v as usize).collect();
            Targets::Classes { labels, n_classes }
        } else {
            Targets::Values(need("train_values")?.to_tensor::<f64>()?.into_vec())
        };
        Ok(KvCache {
            config_hash: need("config_hash")?.text()?.to_string(),
            estimator_hash: need("estimator_hash")?.text()?.to_string(),
            inducing_states: indexed("inducing")?,
            icl_kv: indexed("icl_kv")?,
            final_train_embeds: need("final_train_embeds")?.to_tensor()?,
            train_targets,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<KvCache<T>> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Predicts test rows (an input without training rows) from a cache. The
/// test view must come from the same model config and estimator config.
pub fn predict_cached<T: Scalar>(
    cache: &KvCache<T>,
    w: &Weights<T>,
    test: &ModelInput<T>,
    estimator_hash: &str,
    plan: Option<&ChunkPlan>,
) -> Result<Predictions> {
    if cache.config_hash != w.config.hash() {
        return Err(Error::CacheMismatch("cache was built for a different model config".into()));
    }
    if cache.estimator_hash != estimator_hash {
        return Err(Error::CacheMismatch("cache was built for a different estimator config".into()));
    }
    if test.n_train != 0 {
        return Err(Error::Argument("cached prediction takes test rows only".into()));
    }
    test.validate()?;
    let m = test.n_rows();
    let default_plan;
    let plan = match plan {
        Some(p) => p,
        None => {
            default_plan = plan_chunks(0, m, m.max(1), ChunkOverride::Force);
            &default_plan
        }
    };
    let per_group = cache.per_group_states();
    if per_group.len() != w.config.n_groups(test.n_features()) {
        return Err(Error::CacheMismatch("test view has a different column count".into()));
    }
    let e = w.config.icl_emsize();
    let mut rows = Tensor::zeros(&[m, e]);
    for range in &plan.chunk_ranges {
        let part = encode_chunk(w, test, range.clone(), &per_group, None)?;
        rows.data_mut()[range.start * e..range.end * e].copy_from_slice(part.data());
    }
    let test_final = stage3_test(w, rows, &cache.icl_kv)?;
    decode(w, &cache.final_train_embeds, &test_final, &cache.train_targets)
}

/// Analytic cache size: `layers * N * 2 * (E / H) * b + N * E * b +
/// blocks * G * K * D * b`, with `G` the column groups of `n_features`.
pub fn estimate_cache_bytes(config: &ModelConfig, n_train: u64, n_features: usize, bytes_per_scalar: u64) -> u64 {
    let head_dim = (config.icl_emsize() / config.icl_heads) as u64;
    let kv = config.icl_layers as u64 * n_train * 2 * head_dim * bytes_per_scalar;
    let fin = n_train * config.icl_emsize() as u64 * bytes_per_scalar;
    let g = config.n_groups(n_features) as u64;
    let ind = config.dist_blocks as u64 * g * config.n_inducing as u64 * config.embed_dim as u64 * bytes_per_scalar;
    kv + fin + ind
}
