//! Attention-based selection of representative audio chunks.

pub mod lstm;
pub mod model;
pub mod select;

pub use lstm::{lstm_step, lstm_step_trace, LstmParams, StepTrace};
pub use model::{
    attention_distribution, attention_scores, bilstm_forward, chunk_feature, score_sequence,
    AttentionParams, BASE_CHUNKS, BASE_CHUNK_SEC,
};
pub use select::{query_representation, select_top_k, ChunkSelection, QueryMode, SUPPORTED_CHUNK_COUNTS};
