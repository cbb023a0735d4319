//! Architecture hyperparameters.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Features per circular-shift group.
    pub feature_group_size: usize,
    pub dist_blocks: usize,
    pub dist_heads: usize,
    /// Inducing points per column group.
    pub n_inducing: usize,
    pub agg_blocks: usize,
    pub agg_heads: usize,
    pub n_cls_tokens: usize,
    pub rope_base: f64,
    pub icl_layers: usize,
    pub icl_heads: usize,
    pub icl_kv_heads_train: usize,
    pub icl_kv_heads_test: usize,
    pub ff_factor: usize,
    pub c_max: usize,
    pub decoder_heads: usize,
    pub decoder_head_dim: usize,
    pub n_buckets: usize,
    /// Hidden width of the per-layer QASSMax scale MLP.
    pub scale_mlp_hidden: usize,
    pub norm_eps: f64,
    pub task: Task,
}

impl ModelConfig {
    /// Full-size architecture.
    pub fn standard(task: Task) -> ModelConfig {
        ModelConfig {
            embed_dim: 128,
            feature_group_size: 3,
            dist_blocks: 3,
            dist_heads: 8,
            n_inducing: 128,
            agg_blocks: 3,
            agg_heads: 8,
            n_cls_tokens: 4,
            rope_base: 100_000.0,
            icl_layers: 24,
            icl_heads: 8,
            icl_kv_heads_train: 8,
            icl_kv_heads_test: 1,
            ff_factor: 2,
            c_max: 160,
            decoder_heads: 6,
            decoder_head_dim: 64,
            n_buckets: 5000,
            scale_mlp_hidden: 64,
            norm_eps: 1e-6,
            task,
        }
    }

    /// Tiny profile used by loop oracles and fast tests.
    pub fn micro(task: Task) -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            dist_blocks: 1,
            dist_heads: 2,
            n_inducing: 4,
            agg_blocks: 1,
            agg_heads: 2,
            n_cls_tokens: 2,
            icl_layers: 2,
            icl_heads: 2,
            icl_kv_heads_train: 2,
            icl_kv_heads_test: 1,
            decoder_heads: 2,
            decoder_head_dim: 4,
            n_buckets: 64,
            scale_mlp_hidden: 4,
            ..ModelConfig::standard(task)
        }
    }

    /// Mid-size profile for the command line and benchmarks on a CPU.
    pub fn small(task: Task) -> ModelConfig {
        ModelConfig {
            embed_dim: 16,
            dist_blocks: 2,
            dist_heads: 4,
            n_inducing: 16,
            agg_blocks: 2,
            agg_heads: 4,
            n_cls_tokens: 4,
            icl_layers: 4,
            icl_heads: 4,
            icl_kv_heads_train: 4,
            icl_kv_heads_test: 1,
            decoder_heads: 4,
            decoder_head_dim: 16,
            n_buckets: 256,
            scale_mlp_hidden: 16,
            ..ModelConfig::standard(task)
        }
    }

    pub fn by_name(name: &str, task: Task) -> Result<ModelConfig> {
        match name {
            "standard" => Ok(ModelConfig::standard(task)),
            "small" => Ok(ModelConfig::small(task)),
            "micro" => Ok(ModelConfig::micro(task)),
            other => Err(Error::Config(format!("unknown model profile `{other}`"))),
        }
    }

    pub fn icl_emsize(&self) -> usize {
        self.embed_dim * self.n_cls_tokens
    }

    pub fn dist_head_dim(&self) -> usize {
        self.embed_dim / self.dist_heads
    }

    pub fn agg_head_dim(&self) -> usize {
        self.embed_dim / self.agg_heads
    }

    pub fn icl_head_dim(&self) -> usize {
        self.icl_emsize() / self.icl_heads
    }

    pub fn n_groups(&self, n_features: usize) -> usize {
        n_features.div_ceil(self.feature_group_size)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("feature_group_size", self.feature_group_size),
            ("dist_heads", self.dist_heads),
            ("n_inducing", self.n_inducing),
            ("agg_heads", self.agg_heads),
            ("n_cls_tokens", self.n_cls_tokens),
            ("icl_heads", self.icl_heads),
            ("ff_factor", self.ff_factor),
            ("decoder_heads", self.decoder_heads),
            ("decoder_head_dim", self.decoder_head_dim),
            ("n_buckets", self.n_buckets),
            ("scale_mlp_hidden", self.scale_mlp_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, heads, dim) in [
            ("dist_heads", self.dist_heads, self.embed_dim),
            ("agg_heads", self.agg_heads, self.embed_dim),
            ("icl_heads", self.icl_heads, self.icl_emsize()),
        ] {
            if dim % heads != 0 {
                return Err(Error::Config(format!("{name}={heads} does not divide width {dim}")));
            }
        }
        if self.agg_head_dim() % 2 != 0 {
            return Err(Error::Config("rotary embedding needs an even aggregation head dim".into()));
        }
        for (name, kv) in [
            ("icl_kv_heads_train", self.icl_kv_heads_train),
            ("icl_kv_heads_test", self.icl_kv_heads_test),
        ] {
            if kv != 1 && kv != self.icl_heads {
                return Err(Error::Config(format!("{name} must be 1 or icl_heads, got {kv}")));
            }
        }
        if self.c_max < 2 {
            return Err(Error::Config("c_max must be at least 2".into()));
        }
        if self.rope_base <= 0.0 || !(self.norm_eps > 0.0) {
            return Err(Error::Config("rope_base and norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
