//! Clips, label vocabularies, manifests and the synthetic dataset generator.

pub mod clip;
pub mod manifest;
pub mod synthetic;
pub mod transform;
pub mod vocab;

pub use clip::{load_frames, save_frames, Frames, VideoClip};
pub use manifest::{split_manifest, DatasetManifest, ManifestEntry, Split};
pub use synthetic::{generate_synthetic, standard_motifs, Motif, SyntheticSpec};
pub use vocab::LabelVocabulary;
