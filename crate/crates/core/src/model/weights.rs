//! Model parameters, initialization and the weights file.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use super::config::{ModelConfig, Task};
use super::label_embed::init_orthogonal_label_embeddings;
use crate::error::{Error, Result};
use crate::records::{read_records, write_records, Record};
use crate::rng;
use crate::tensor::{Scalar, ScaleMlp, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TPF3";
pub const WEIGHTS_VERSION: u32 = 1;

/// Walks named tensors in a fixed order.
pub trait Params<T: Scalar> {
    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>));
}

fn child(name: &str, field: &str) -> String {
    if name.is_empty() { field.to_string() } else { format!("{name}.{field}") }
}

impl<T: Scalar> Params<T> for Tensor<T> {
    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(name.to_string(), self)
    }
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(name.to_string(), self)
    }
}

impl<T: Scalar, P: Params<T>> Params<T> for Option<P> {
    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        if let Some(p) = self {
            p.visit(name, f)
        }
    }
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        if let Some(p) = self {
            p.visit_mut(name, f)
        }
    }
}

impl<T: Scalar, P: Params<T>> Params<T> for Vec<P> {
    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&child(name, &i.to_string()), f)
        }
    }
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&child(name, &i.to_string()), f)
        }
    }
}

macro_rules! params {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<T: Scalar> Params<T> for $ty<T> {
            fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
                $( self.$field.visit(&child(name, stringify!($field)), f); )*
            }
            fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
                $( self.$field.visit_mut(&child(name, stringify!($field)), f); )*
            }
        }
    };
}

params!(ScaleMlp { w1, b1, w2, b2 });

/// Pre-norm feed-forward branch: `W2 gelu(W1 rms(x) + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<T: Scalar> {
    pub norm: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}
params!(FeedForward { norm, w1, b1, w2, b2 });

impl<T: Scalar> FeedForward<T> {
    fn zeros(d: usize, hidden: usize) -> Self {
        FeedForward {
            norm: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, hidden]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden, d]),
            b2: Tensor::zeros(&[d]),
        }
    }
}

/// Cross-attention with separate norms on the query and key/value sides and a
/// QASSMax scale MLP over one head's query.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention<T: Scalar> {
    pub norm_q: Tensor<T>,
    pub norm_kv: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub scale: ScaleMlp<T>,
}
params!(CrossAttention { norm_q, norm_kv, wq, wk, wv, wo, scale });

impl<T: Scalar> CrossAttention<T> {
    fn zeros(d: usize, head_dim: usize, hidden: usize) -> Self {
        CrossAttention {
            norm_q: Tensor::zeros(&[d]),
            norm_kv: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            wk: Tensor::zeros(&[d, d]),
            wv: Tensor::zeros(&[d, d]),
            wo: Tensor::zeros(&[d, d]),
            scale: ScaleMlp::zeros(head_dim, hidden),
        }
    }
}

/// One induced block: inducing points read the training rows, then every row
/// reads the inducing states.
#[derive(Debug, Clone, PartialEq)]
pub struct InducingBlock<T: Scalar> {
    /// `[K, D]`
    pub inducing: Tensor<T>,
    pub gather: CrossAttention<T>,
    pub gather_ff: FeedForward<T>,
    pub broadcast: CrossAttention<T>,
    pub broadcast_ff: FeedForward<T>,
}
params!(InducingBlock { inducing, gather, gather_ff, broadcast, broadcast_ff });

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention<T: Scalar> {
    pub norm: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
}
params!(SelfAttention { norm, wq, wk, wv, wo });

#[derive(Debug, Clone, PartialEq)]
pub struct AggBlock<T: Scalar> {
    pub attn: SelfAttention<T>,
    pub ff: FeedForward<T>,
}
params!(AggBlock { attn, ff });

/// ICL layer. Train rows use `wk`/`wv` with `icl_kv_heads_train` heads; test
/// rows read keys and values of the train rows through `wk_test`/`wv_test`
/// (one head) when the test path has a single KV head.
#[derive(Debug, Clone, PartialEq)]
pub struct IclLayer<T: Scalar> {
    pub norm: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wk_test: Option<Tensor<T>>,
    pub wv_test: Option<Tensor<T>>,
    pub wo: Tensor<T>,
    pub scale: ScaleMlp<T>,
    pub ff: FeedForward<T>,
}
params!(IclLayer { norm, wq, wk, wv, wk_test, wv_test, wo, scale, ff });

/// Cell embedding and the target-aware term for training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder<T: Scalar> {
    /// `[2 * group_size, D]` over (value, indicator) pairs.
    pub cell_w: Tensor<T>,
    pub cell_b: Tensor<T>,
    /// `[c_max, D]`, classification only.
    pub label_col: Option<Tensor<T>>,
    /// `[1, D]` projection of the standardized target, regression only.
    pub target_w: Option<Tensor<T>>,
    pub target_b: Option<Tensor<T>>,
}
params!(Embedder { cell_w, cell_b, label_col, target_w, target_b });

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator<T: Scalar> {
    /// `[n_cls_tokens, D]`
    pub cls: Tensor<T>,
    pub blocks: Vec<AggBlock<T>>,
    pub final_norm: Tensor<T>,
}
params!(Aggregator { cls, blocks, final_norm });

#[derive(Debug, Clone, PartialEq)]
pub struct Icl<T: Scalar> {
    /// `[c_max, E]`, classification only.
    pub label_icl: Option<Tensor<T>>,
    pub target_w: Option<Tensor<T>>,
    pub target_b: Option<Tensor<T>>,
    pub layers: Vec<IclLayer<T>>,
    pub final_norm: Tensor<T>,
}
params!(Icl { label_icl, target_w, target_b, layers, final_norm });

/// Retrieval decoder projections `[E, heads * head_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T: Scalar> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub scale: ScaleMlp<T>,
}
params!(Decoder { wq, wk, scale });

/// `E -> E * ff_factor -> n_buckets` with GELU.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead<T: Scalar> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}
params!(RegressionHead { w1, b1, w2, b2 });

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T: Scalar = f32> {
    pub config: ModelConfig,
    pub embed: Embedder<T>,
    pub stage1: Vec<InducingBlock<T>>,
    pub stage2: Aggregator<T>,
    pub stage3: Icl<T>,
    pub decoder: Option<Decoder<T>>,
    pub head: Option<RegressionHead<T>>,
}

impl<T: Scalar> Params<T> for Weights<T> {
    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.embed.visit(&child(name, "embed"), f);
        self.stage1.visit(&child(name, "stage1"), f);
        self.stage2.visit(&child(name, "stage2"), f);
        self.stage3.visit(&child(name, "stage3"), f);
        self.decoder.visit(&child(name, "decoder"), f);
        self.head.visit(&child(name, "head"), f);
    }
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.embed.visit_mut(&child(name, "embed"), f);
        self.stage1.visit_mut(&child(name, "stage1"), f);
        self.stage2.visit_mut(&child(name, "stage2"), f);
        self.stage3.visit_mut(&child(name, "stage3"), f);
        self.decoder.visit_mut(&child(name, "decoder"), f);
        self.head.visit_mut(&child(name, "head"), f);
    }
}

impl<T: Scalar> Weights<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Weights<T>> {
        config.validate()?;
        let c = config;
        let d = c.embed_dim;
        let e = c.icl_emsize();
        let cls = c.task == Task::Classification;
        let opt = |on: bool, shape: &[usize]| if on { Some(Tensor::zeros(shape)) } else { None };
        let single_test_head = c.icl_kv_heads_test == 1 && c.icl_heads > 1;
        let icl_kv_width = c.icl_kv_heads_train * c.icl_head_dim();
        Ok(Weights {
            config: c.clone(),
            embed: Embedder {
                cell_w: Tensor::zeros(&[2 * c.feature_group_size, d]),
                cell_b: Tensor::zeros(&[d]),
                label_col: opt(cls, &[c.c_max, d]),
                target_w: opt(!cls, &[1, d]),
                target_b: opt(!cls, &[d]),
            },
            stage1: (0..c.dist_blocks)
                .map(|_| InducingBlock {
                    inducing: Tensor::zeros(&[c.n_inducing, d]),
                    gather: CrossAttention::zeros(d, c.dist_head_dim(), c.scale_mlp_hidden),
                    gather_ff: FeedForward::zeros(d, d * c.ff_factor),
                    broadcast: CrossAttention::zeros(d, c.dist_head_dim(), c.scale_mlp_hidden),
                    broadcast_ff: FeedForward::zeros(d, d * c.ff_factor),
                })
                .collect(),
            stage2: Aggregator {
                cls: Tensor::zeros(&[c.n_cls_tokens, d]),
                blocks: (0..c.agg_blocks)
                    .map(|_| AggBlock {
                        attn: SelfAttention {
                            norm: Tensor::zeros(&[d]),
                            wq: Tensor::zeros(&[d, d]),
                            wk: Tensor::zeros(&[d, d]),
                            wv: Tensor::zeros(&[d, d]),
                            wo: Tensor::zeros(&[d, d]),
                        },
                        ff: FeedForward::zeros(d, d * c.ff_factor),
                    })
                    .collect(),
                final_norm: Tensor::zeros(&[d]),
            },
            stage3: Icl {
                label_icl: opt(cls, &[c.c_max, e]),
                target_w: opt(!cls, &[1, e]),
                target_b: opt(!cls, &[e]),
                layers: (0..c.icl_layers)
                    .map(|_| IclLayer {
                        norm: Tensor::zeros(&[e]),
                        wq: Tensor::zeros(&[e, e]),
                        wk: Tensor::zeros(&[e, icl_kv_width]),
                        wv: Tensor::zeros(&[e, icl_kv_width]),
                        wk_test: opt(single_test_head, &[e, c.icl_head_dim()]),
                        wv_test: opt(single_test_head, &[e, c.icl_head_dim()]),
                        wo: Tensor::zeros(&[e, e]),
                        scale: ScaleMlp::zeros(c.icl_head_dim(), c.scale_mlp_hidden),
                        ff: FeedForward::zeros(e, e * c.ff_factor),
                    })
                    .collect(),
                final_norm: Tensor::zeros(&[e]),
            },
            decoder: cls.then(|| Decoder {
                wq: Tensor::zeros(&[e, c.decoder_heads * c.decoder_head_dim]),
                wk: Tensor::zeros(&[e, c.decoder_heads * c.decoder_head_dim]),
                scale: ScaleMlp::zeros(c.decoder_head_dim, c.scale_mlp_hidden),
            }),
            head: (!cls).then(|| RegressionHead {
                w1: Tensor::zeros(&[e, e * c.ff_factor]),
                b1: Tensor::zeros(&[e * c.ff_factor]),
                w2: Tensor::zeros(&[e * c.ff_factor, c.n_buckets]),
                b2: Tensor::zeros(&[c.n_buckets]),
            }),
        })
    }

    /// Random initialization: norm gains 1, biases 0, label embeddings
    /// orthogonal, learned tokens standard normal, everything else normal
    /// with variance `1 / fan_in`. Each tensor draws from its own stream keyed
    /// by name, so the result does not depend on visiting order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Weights<T>> {
        let mut w = Weights::zeros(config)?;
        w.visit_mut("", &mut |name, t| {
            let leaf = name.rsplit('.').next().unwrap_or("");
            let shape = t.shape().to_vec();
            let vals: Vec<f64> = if leaf.contains("norm") {
                vec![1.0; t.len()]
            } else if leaf == "b" || leaf.starts_with('b') && leaf[1..].chars().all(|ch| ch.is_ascii_digit())
                || leaf.ends_with("_b")
            {
                vec![0.0; t.len()]
            } else if leaf.starts_with("label_") {
                init_orthogonal_label_embeddings(shape[0], shape[1], rng::derive_seed(seed, rng::tag(&name)))
            } else {
                let mut r = rng::stream(seed, rng::tag(&name));
                let std = if leaf == "inducing" || leaf == "cls" {
                    1.0
                } else {
                    1.0 / (shape[0] as f64).sqrt()
                };
                (0..t.len()).map(|_| { let z: f64 = StandardNormal.sample(&mut r); std * z }).collect::<Vec<f64>>()
            };
            for (dst, v) in t.data_mut().iter_mut().zip(vals) {
                *dst = T::lit(v);
            }
        });
        Ok(w)
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        let mut out = Weights::<U>::zeros(&self.config).expect("config already validated");
        let mut src: BTreeMap<String, &Tensor<T>> = BTreeMap::new();
        self.visit("", &mut |name, t| {
            src.insert(name, t);
        });
        out.visit_mut("", &mut |name, t| {
            *t = src[&name].cast();
        });
        out
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut recs = vec![Record::from_text(
            "config",
            &serde_json::to_string(&self.config).expect("config serializes"),
        )];
        recs.extend(self.named_tensors().into_iter().map(|(n, t)| Record::from_tensor(&n, t)));
        write_records(w, WEIGHTS_MAGIC, WEIGHTS_VERSION, &recs)
    }

    /// Reads a weights file, checking every tensor shape against the embedded
    /// config (or `expected`, when given, which must match it).
    pub fn read<R: Read>(r: R, expected: Option<&ModelConfig>) -> Result<Weights<T>> {
        let (version, recs) = read_records(r, WEIGHTS_MAGIC)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        let mut by_name: BTreeMap<String, Record> = recs.into_iter().map(|r| (r.name.clone(), r)).collect();
        let cfg_rec = by_name
            .remove("config")
            .ok_or_else(|| Error::Format("weights file has no config record".into()))?;
        let config: ModelConfig = serde_json::from_str(cfg_rec.text()?)?;
        if let Some(exp) = expected {
            if exp != &config {
                return Err(Error::Config("weights were saved for a different model config".into()));
            }
        }
        let mut w = Weights::<T>::zeros(&config)?;
        let mut err: Option<Error> = None;
        w.visit_mut("", &mut |name, t| {
            if err.is_some() {
                return;
            }
            match by_name.remove(&name) {
                None => err = Some(Error::Format(format!("missing tensor `{name}`"))),
                Some(rec) if rec.dims != t.shape() => {
                    err = Some(Error::Dimension(format!(
                        "tensor `{name}` has shape {:?}, config needs {:?}",
                        rec.dims,
                        t.shape()
                    )))
                }
                Some(rec) => match rec.to_tensor() {
                    Ok(v) => *t = v,
                    Err(e) => err = Some(e),
                },
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Format(format!("unexpected tensor `{extra}`")));
        }
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(f)
    }

    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Weights<T>> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?), expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_round_trips() {
        let c = ModelConfig::micro(Task::Classification);
        let a = Weights::<f64>::init(&c, 7).unwrap();
        let b = Weights::<f64>::init(&c, 7).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let back = Weights::<f64>::read(&buf[..], Some(&c)).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn shapes_follow_config() {
        let c = ModelConfig::micro(Task::Regression);
        let w = Weights::<f32>::init(&c, 1).unwrap();
        assert!(w.decoder.is_none() && w.embed.label_col.is_none());
        assert_eq!(w.head.as_ref().unwrap().w2.shape(), &[32, 64]);
        let names: Vec<String> = w.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"stage3.layers.1.wk_test".to_string()));
        assert!(names.contains(&"stage1.0.gather.scale.w1".to_string()));
    }

    #[test]
    fn norms_are_one_and_biases_zero() {
        let w = Weights::<f64>::init(&ModelConfig::micro(Task::Classification), 3).unwrap();
        assert!(w.stage2.final_norm.data().iter().all(|&v| v == 1.0));
        assert!(w.stage1[0].gather_ff.b1.data().iter().all(|&v| v == 0.0));
        assert!(w.embed.cell_b.data().iter().all(|&v| v == 0.0));
        assert!(w.embed.cell_w.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn loader_rejects_shape_mismatch() {
        let c = ModelConfig::micro(Task::Classification);
        let w = Weights::<f32>::init(&c, 1).unwrap();
        let mut recs = vec![Record::from_text("config", &serde_json::to_string(&c).unwrap())];
        for (n, t) in w.named_tensors() {
            if n == "stage2.cls" {
                recs.push(Record::from_tensor(&n, &Tensor::<f32>::zeros(&[3, 8])));
            } else {
                recs.push(Record::from_tensor(&n, t));
            }
        }
        let mut buf = Vec::new();
        write_records(&mut buf, WEIGHTS_MAGIC, WEIGHTS_VERSION, &recs).unwrap();
        assert!(matches!(Weights::<f32>::read(&buf[..], None), Err(Error::Dimension(_))));
        let other = ModelConfig::small(Task::Classification);
        let mut buf = Vec::new();
        w.write(&mut buf).unwrap();
        assert!(matches!(Weights::<f32>::read(&buf[..], Some(&other)), Err(Error::Config(_))));
    }
}
