//! Seeded k-means clustering and cluster-based pair expansion.

pub mod io;
pub mod kmeans;
pub mod pairs;

pub use io::{read_assignments, write_assignments, Assignment, SeedsFile, CATEGORIES};
pub use kmeans::{seeded_kmeans, ClusterModel};
pub use pairs::{exhaustive_pair_count, expand_pairs, Pair, PairSet};
