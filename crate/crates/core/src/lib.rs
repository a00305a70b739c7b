//! Cross-modal audio to music-video retrieval.
//!
//! Audio and video are projected into a shared space with the CCA family
//! (linear CCA, kernel CCA, cluster-CCA, deep CCA and supervised deep CCA on
//! cluster-expanded pairs). Audio queries are summarized by attention-selected
//! chunks, and retrieval quality is measured with precision/recall and MAP.

pub mod attention;
pub mod cca;
pub mod container;
pub mod data;
pub mod deep;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod pipeline;
pub mod retrieval;
pub mod seed;
pub mod supervision;

pub use error::{Error, Result};
