//! Macro-chunk scoring, top-k selection and query construction.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::BASE_CHUNK_SEC;
use crate::data::sequence::mean_of_frames;
use crate::data::{FeatureSequence, Modality};
use crate::error::{Error, Result};

/// Macro-chunk counts supported for selection.
pub const SUPPORTED_CHUNK_COUNTS: [usize; 3] = [3, 6, 9];

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSelection {
    /// Number of macro-chunks `c` the audio is divided into.
    pub chunk_count: usize,
    /// Selected macro-chunks in temporal order.
    pub selected_indices: Vec<usize>,
    /// Score of every macro-chunk.
    pub scores: DVector<f64>,
    /// Attention distribution over the base chunks.
    pub distribution: DVector<f64>,
}

impl ChunkSelection {
    /// Base-chunk range `[start, end)` covered by macro-chunk `i`.
    pub fn macro_range(&self, i: usize) -> (usize, usize) {
        macro_range(self.distribution.len(), self.chunk_count, i)
    }

    /// Frame indices covered by the selected macro-chunks.
    pub fn frame_indices(&self) -> Vec<usize> {
        self.selected_indices
            .iter()
            .flat_map(|&i| {
                let (a, b) = self.macro_range(i);
                (a * BASE_CHUNK_SEC)..(b * BASE_CHUNK_SEC)
            })
            .collect()
    }
}

/// Base chunks are split into `c` nearly equal runs; with 72 base chunks every
/// supported `c` divides evenly.
pub(crate) fn macro_range(base: usize, c: usize, i: usize) -> (usize, usize) {
    (i * base / c, (i + 1) * base / c)
}

/// Scores each of `c` macro-chunks by the max of its base-chunk θ values and
/// keeps the best `k`, breaking ties toward the lower index.
pub fn select_top_k(theta: &DVector<f64>, c: usize, k: usize) -> Result<ChunkSelection> {
    if !SUPPORTED_CHUNK_COUNTS.contains(&c) {
        return Err(Error::Argument(format!("chunk count {c} is not one of 3, 6, 9")));
    }
    if k == 0 || k > c {
        return Err(Error::Argument(format!("k = {k} must be in 1..={c}")));
    }
    if theta.len() < c {
        return Err(Error::Argument(format!(
            "{} base chunks cannot form {c} macro-chunks",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("attention distribution has non-finite entries".into()));
    }
    let scores = DVector::from_fn(c, |i, _| {
        let (a, b) = macro_range(theta.len(), c, i);
        theta.rows(a, b - a).max()
    });
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected_indices = order[..k].to_vec();
    selected_indices.sort_unstable();
    Ok(ChunkSelection {
        chunk_count: c,
        selected_indices,
        scores,
        distribution: theta.clone(),
    })
}

/// How an audio query vector is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QueryMode {
    /// Mean over all frames.
    Mean,
    /// Mean over the frames of the top `k` of `c` macro-chunks.
    TopK { c: usize, k: usize },
}

impl QueryMode {
    /// The four configurations `1/3`, `2/6`, `3/9` and `mean`.
    pub fn standard_grid() -> [QueryMode; 4] {
        [
            QueryMode::TopK { c: 3, k: 1 },
            QueryMode::TopK { c: 6, k: 2 },
            QueryMode::TopK { c: 9, k: 3 },
            QueryMode::Mean,
        ]
    }

    pub fn label(&self) -> String {
        match self {
            QueryMode::Mean => "mean".into(),
            QueryMode::TopK { c, k } => format!("{k}/{c}"),
        }
    }

    /// File-name friendly label.
    pub fn slug(&self) -> String {
        match self {
            QueryMode::Mean => "mean".into(),
            QueryMode::TopK { c, k } => format!("k{k}c{c}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QueryMode::Mean => Ok(()),
            QueryMode::TopK { c, k } => {
                if !SUPPORTED_CHUNK_COUNTS.contains(&c) {
                    return Err(Error::Argument(format!("chunk count {c} is not one of 3, 6, 9")));
                }
                if k == 0 || k > c {
                    return Err(Error::Argument(format!("k = {k} must be in 1..={c}")));
                }
                Ok(())
            }
        }
    }
}

/// Query vector of an audio sequence: the mean of all frames, or of the
/// frames inside the selected macro-chunks.
pub fn query_representation(seq: &FeatureSequence, selection: Option<&ChunkSelection>) -> Result<DVector<f64>> {
    if seq.modality() != Modality::Audio {
        return Err(Error::Validation(format!("{} is not an audio sequence", seq.video_id())));
    }
    match selection {
        None => Ok(seq.mean_frame()),
        Some(sel) => {
            if sel.selected_indices.is_empty() {
                return Err(Error::Argument("empty chunk selection".into()));
            }
            let frames = sel.frame_indices();
            if frames.iter().any(|&t| t >= seq.n_frames()) {
                return Err(Error::Argument(format!(
                    "selection reaches past the {} frames of {}",
                    seq.n_frames(),
                    seq.video_id()
                )));
            }
            Ok(mean_of_frames(seq, frames))
        }
    }
}
