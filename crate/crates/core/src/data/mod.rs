//! Feature files, manifests, chunking and the synthetic corpus generator.

pub mod chunk;
pub mod dataset;
pub mod manifest;
pub mod sequence;
pub mod synth;

pub use chunk::{partition_chunks, video_level_visual, Chunk};
pub use dataset::{Dataset, VideoRecord, MANIFEST_FILE};
pub use manifest::{filter_manifest, LengthSpan, Manifest, ManifestEntry};
pub use sequence::{load_sequence, write_sequence, FeatureSequence, Modality, AUDIO_DIM, VISUAL_DIM};
pub use synth::{synth_dataset, Activation, SynthConfig, SynthGenerator};
