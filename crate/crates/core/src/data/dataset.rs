//! A manifest together with its loaded audio and visual sequences.

use std::fs;
use std::path::Path;

use super::manifest::{Manifest, ManifestEntry};
use super::sequence::{load_sequence, write_sequence, FeatureSequence, Modality};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub entry: ManifestEntry,
    pub audio: FeatureSequence,
    pub visual: FeatureSequence,
}

impl VideoRecord {
    /// Truncates both modalities to their common frame count.
    ///
    /// Returns the aligned pair and whether the frame counts differed.
    pub fn aligned(&self) -> (FeatureSequence, FeatureSequence, bool) {
        let n = self.audio.n_frames().min(self.visual.n_frames());
        let mismatch = self.audio.n_frames() != self.visual.n_frames();
        (self.audio.truncated(n), self.visual.truncated(n), mismatch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    manifest: Manifest,
    videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn new(manifest: Manifest, videos: Vec<VideoRecord>) -> Result<Self> {
        if manifest.len() != videos.len() {
            return Err(Error::Validation(format!(
                "manifest lists {} videos but {} were given",
                manifest.len(),
                videos.len()
            )));
        }
        for (e, v) in manifest.entries().iter().zip(&videos) {
            if e.video_id != v.entry.video_id {
                return Err(Error::Validation(format!(
                    "manifest order mismatch at {}",
                    e.video_id
                )));
            }
            check_modality(&v.audio, Modality::Audio, &e.video_id)?;
            check_modality(&v.visual, Modality::Visual, &e.video_id)?;
        }
        Ok(Self { manifest, videos })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Restricts the dataset to the entries of `manifest` (which must be a subset).
    pub fn restrict(&self, manifest: &Manifest) -> Result<Self> {
        let videos = manifest
            .entries()
            .iter()
            .map(|e| {
                self.videos
                    .iter()
                    .find(|v| v.entry.video_id == e.video_id)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("unknown video {}", e.video_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest.clone(), videos)
    }

    /// Ids of videos whose audio and visual frame counts disagree.
    pub fn frame_mismatches(&self) -> Vec<&str> {
        self.videos
            .iter()
            .filter(|v| v.audio.n_frames() != v.visual.n_frames())
            .map(|v| v.entry.video_id.as_str())
            .collect()
    }

    /// Writes `manifest.jsonl` and one FVSQ file per sequence under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for v in &self.videos {
            for (rel, seq) in [(&v.entry.audio_path, &v.audio), (&v.entry.visual_path, &v.visual)] {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                write_sequence(seq, &path)?;
            }
        }
        self.manifest.write(dir.join(MANIFEST_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::read(dir.join(MANIFEST_FILE))?;
        Self::load_with(dir, manifest)
    }

    /// Loads the sequences listed in `manifest`, resolving paths against `dir`.
    pub fn load_with(dir: impl AsRef<Path>, manifest: Manifest) -> Result<Self> {
        let dir = dir.as_ref();
        let videos = manifest
            .entries()
            .iter()
            .map(|e| {
                let mut audio = load_sequence(dir.join(&e.audio_path))?;
                let mut visual = load_sequence(dir.join(&e.visual_path))?;
                audio = rename(audio, &e.video_id)?;
                visual = rename(visual, &e.video_id)?;
                Ok(VideoRecord {
                    entry: e.clone(),
                    audio,
                    visual,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest, videos)
    }
}

fn rename(seq: FeatureSequence, id: &str) -> Result<FeatureSequence> {
    if seq.video_id() == id {
        return Ok(seq);
    }
    FeatureSequence::new(id, seq.modality(), seq.dim(), seq.data().to_vec())
}

fn check_modality(seq: &FeatureSequence, want: Modality, id: &str) -> Result<()> {
    if seq.modality() != want {
        return Err(Error::Validation(format!(
            "{id}: expected {want:?} sequence, found {:?}",
            seq.modality()
        )));
    }
    Ok(())
}
