//! Memory-bounded execution: row chunking, the train-side KV cache,
//! ensembling and quantile decoding.

pub mod cache;
pub mod chunk;
pub mod ensemble;
pub mod quantile;

pub use cache::{build_kv_cache, estimate_cache_bytes, predict_cached, KvCache};
pub use chunk::{
    encode_rows_chunked, forward_chunked, forward_chunked_with, plan_chunks, ChunkExec, ChunkOverride, ChunkPlan,
    CHUNK_THRESHOLD, DEFAULT_CHUNK_SIZE,
};
pub use ensemble::{align_predictions, average, canonical_edges, ensemble_predict, estimator_predict, EnsembleOptions};
pub use quantile::{decode_quantile, default_quantile_levels, mean_pinball_loss, pinball_loss};
