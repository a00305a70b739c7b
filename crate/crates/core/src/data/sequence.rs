//! Frame-level feature sequences and the FVSQ binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FVSQ" | u8 version=1 | u8 modality (0=audio, 1=visual) | u32 n_frames | u32 dim
//! n_frames * dim f32, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FVSQ_MAGIC: &[u8; 4] = b"FVSQ";
pub const FVSQ_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4;

/// Conventional per-frame widths of the two modalities.
pub const AUDIO_DIM: usize = 128;
pub const VISUAL_DIM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Visual,
}

impl Modality {
    fn code(self) -> u8 {
        match self {
            Modality::Audio => 0,
            Modality::Visual => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Audio),
            1 => Ok(Modality::Visual),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }
}

/// One modality of one video: a row per second of media.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    modality: Modality,
    n_frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    /// Builds a sequence from row-major frame data.
    pub fn new(
        video_id: impl Into<String>,
        modality: Modality,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dim must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::Validation("sequence has no frames".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at frame {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            modality,
            n_frames: data.len() / dim,
            dim,
            data,
        })
    }

    pub fn from_rows(video_id: impl Into<String>, modality: Modality, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("frames have differing widths".into()));
        }
        Self::new(video_id, modality, dim, rows.concat())
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Keeps only the first `n` frames (no-op when already shorter).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_frames).max(1);
        Self {
            video_id: self.video_id.clone(),
            modality: self.modality,
            n_frames: n,
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_frames, self.dim, |i, j| self.data[i * self.dim + j] as f64)
    }

    /// Mean over all frames.
    pub fn mean_frame(&self) -> DVector<f64> {
        mean_of_frames(self, 0..self.n_frames)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(FVSQ_MAGIC);
        out.push(FVSQ_VERSION);
        out.push(self.modality.code());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses FVSQ bytes. The video id is not stored in the file.
    pub fn from_bytes(video_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FVSQ_MAGIC {
            return Err(Error::Format("missing FVSQ magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corruption("truncated FVSQ header".into()));
        }
        if bytes[4] != FVSQ_VERSION {
            return Err(Error::Format(format!("unsupported FVSQ version {}", bytes[4])));
        }
        let modality = Modality::from_code(bytes[5])?;
        let n_frames = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let expected = n_frames
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::Corruption("FVSQ shape overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::Corruption(format!(
                "FVSQ payload truncated: {} of {expected} bytes",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after FVSQ payload",
                payload.len() - expected
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(video_id, modality, dim, data)
    }
}

pub(crate) fn mean_of_frames(
    seq: &FeatureSequence,
    frames: impl IntoIterator<Item = usize>,
) -> DVector<f64> {
    let mut acc = DVector::zeros(seq.dim);
    let mut count = 0usize;
    for t in frames {
        for (a, &v) in acc.iter_mut().zip(seq.frame(t)) {
            *a += v as f64;
        }
        count += 1;
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}

/// Writes a sequence to `path` in FVSQ format.
pub fn write_sequence(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&seq.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads an FVSQ file. The video id is taken from the file stem.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSequence::from_bytes(id, &bytes)
}
