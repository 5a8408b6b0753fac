//! Dataset ingestion, spectral reduction, patch extraction and splitting.

pub mod cube;
pub mod io;
pub mod patches;
pub mod pca;
pub mod split;
pub mod synth;

pub use cube::{HsiCube, LabelRaster};
pub use io::{load_cube, read_cube, read_labels, write_cube, write_labels};
pub use patches::{extract_patches, PatchSet, Sample, Split};
pub use pca::{pca_reduce, PcaModel};
pub use split::{stratified_split, train_count};
pub use synth::SynthSpec;
