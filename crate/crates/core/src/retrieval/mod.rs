//! Exact cosine-similarity retrieval over stored video embeddings.

mod index;

pub use index::{build_index, cosine, rank, EmbeddingIndex, IndexEntry, RankedList};
