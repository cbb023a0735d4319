//! The three-stage tabular in-context learner: cell embedding and
//! distribution embedding per column group, per-row feature aggregation,
//! in-context learning across rows, and the class decoder or bar-distribution
//! regression head.

pub mod bar;
pub mod config;
pub mod decoder;
pub mod embed;
pub mod forward;
pub mod input;
pub mod label_embed;
pub mod layers;
pub mod stage1;
pub mod stage2;
pub mod stage3;
pub mod weights;

pub use bar::{bar_edges, BarDistribution};
pub use config::{ModelConfig, Task};
pub use decoder::{many_class_decode, DecoderShape, DecoderSoftmax};
pub use embed::embed_cells;
pub use forward::{forward, ForwardOutput, Predictions};
pub use input::{ModelInput, TargetScale, Targets};
pub use label_embed::init_orthogonal_label_embeddings;
pub use stage1::stage1_distribution_embed;
pub use stage2::stage2_aggregate;
pub use stage3::stage3_icl;
pub use weights::{Params, Weights};
