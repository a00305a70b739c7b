//! Fixed-length chunking of sequences and video-level pooling.

use nalgebra::DVector;

use super::sequence::{FeatureSequence, Modality};
use crate::error::{Error, Result};

/// A contiguous run of frames `[start_sec, end_sec)` cut from a parent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub parent_id: String,
    pub index: usize,
    pub start_sec: usize,
    pub end_sec: usize,
    dim: usize,
    frames: Vec<f32>,
}

impl Chunk {
    pub fn new(parent_id: impl Into<String>, index: usize, start_sec: usize, dim: usize, frames: Vec<f32>) -> Self {
        let n = frames.len().checked_div(dim).unwrap_or(0);
        Self {
            parent_id: parent_id.into(),
            index,
            start_sec,
            end_sec: start_sec + n,
            dim,
            frames,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_frames(&self) -> usize {
        self.end_sec - self.start_sec
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks_exact(self.dim.max(1))
    }

    pub fn data(&self) -> &[f32] {
        &self.frames
    }
}

/// Splits `seq` into `floor(n_frames / chunk_len_sec)` chunks; remainder frames are dropped.
pub fn partition_chunks(seq: &FeatureSequence, chunk_len_sec: usize) -> Result<Vec<Chunk>> {
    if chunk_len_sec == 0 {
        return Err(Error::Argument("chunk length must be at least one second".into()));
    }
    let dim = seq.dim();
    let count = seq.n_frames() / chunk_len_sec;
    Ok((0..count)
        .map(|i| {
            let start = i * chunk_len_sec;
            let data = seq.data()[start * dim..(start + chunk_len_sec) * dim].to_vec();
            Chunk::new(seq.video_id(), i, start, dim, data)
        })
        .collect())
}

/// Column-wise max over all frames of a visual sequence.
pub fn video_level_visual(seq: &FeatureSequence) -> Result<DVector<f64>> {
    if seq.modality() != Modality::Visual {
        return Err(Error::Validation(format!(
            "{} is not a visual sequence",
            seq.video_id()
        )));
    }
    column_max(seq.frames(), seq.dim())
        .ok_or_else(|| Error::Validation("empty visual sequence".into()))
}

pub(crate) fn column_max<'a>(frames: impl Iterator<Item = &'a [f32]>, dim: usize) -> Option<DVector<f64>> {
    let mut out: Option<DVector<f64>> = None;
    for frame in frames {
        match out.as_mut() {
            None => out = Some(DVector::from_iterator(dim, frame.iter().map(|&v| v as f64))),
            Some(acc) => {
                for (a, &v) in acc.iter_mut().zip(frame) {
                    *a = a.max(v as f64);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize, dim: usize, modality: Modality) -> FeatureSequence {
        let data = (0..n * dim).map(|i| (i as f32 * 0.37).sin()).collect();
        FeatureSequence::new("v", modality, dim, data).unwrap()
    }

    #[test]
    fn standard_chunk_counts() {
        let s = seq(216, 4, Modality::Audio);
        assert_eq!(partition_chunks(&s, 3).unwrap().len(), 72);
        assert_eq!(partition_chunks(&s, 72).unwrap().len(), 3);
    }

    #[test]
    fn remainder_dropped_and_concat_matches() {
        let s = seq(217, 4, Modality::Audio);
        let chunks = partition_chunks(&s, 3).unwrap();
        assert_eq!(chunks.len(), 72);
        let joined: Vec<f32> = chunks.iter().flat_map(|c| c.data().to_vec()).collect();
        assert_eq!(joined.as_slice(), &s.data()[..216 * 4]);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.start_sec, 3 * i);
            assert_eq!(c.end_sec - c.start_sec, 3);
        }
    }

    #[test]
    fn zero_chunk_length_rejected() {
        assert!(matches!(
            partition_chunks(&seq(5, 2, Modality::Audio), 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn visual_pooling_constant_and_single() {
        let v = vec![0.5f32, -1.0, 2.0];
        let s = FeatureSequence::new("v", Modality::Visual, 3, v.repeat(4)).unwrap();
        let pooled = video_level_visual(&s).unwrap();
        assert_eq!(pooled.as_slice(), &[0.5, -1.0, 2.0]);
        let one = FeatureSequence::new("v", Modality::Visual, 3, v.clone()).unwrap();
        assert_eq!(video_level_visual(&one).unwrap().as_slice(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn visual_pooling_matches_scan() {
        let s = seq(10, 6, Modality::Visual);
        let pooled = video_level_visual(&s).unwrap();
        for j in 0..6 {
            let mut best = f32::NEG_INFINITY;
            for t in 0..10 {
                if s.frame(t)[j] > best {
                    best = s.frame(t)[j];
                }
            }
            assert_eq!(pooled[j], best as f64);
        }
    }

    #[test]
    fn audio_rejected_for_visual_pooling() {
        assert!(video_level_visual(&seq(3, 2, Modality::Audio)).is_err());
    }
}
