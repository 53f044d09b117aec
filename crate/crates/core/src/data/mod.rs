//! Dataset model: label taxonomy, manifest and feature files, stratified
//! splits, class-balanced sampling and a synthetic generator.

mod features;
mod manifest;
mod sampler;
mod split;
mod synth;
mod taxonomy;

pub use features::{read_features, read_features_expecting, write_features, FeatureArray, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{
    Dataset, DatasetHeader, DatasetManifest, ItemRecord, MusicVideoItem, Split, SplitCounts, AUDIO_FILE, HEADER_FILE,
    ITEMS_FILE, MANIFEST_VERSION, VIDEO_FILE,
};
pub use sampler::{balanced_batch, BalancedSampler};
pub use split::{resplit, stratified_split, SplitAssignment, SplitFractions};
pub use synth::{generate_synthetic, synthetic_class_names, SyntheticConfig};
pub use taxonomy::{Condensed, GenreTaxonomy, TaxonomyClass, TaxonomyFile};
