//! Per-patch feature vectors arranged as the `m x n x D` features matrix.
//!
//! Two backends fill the matrix: a small trainable CNN run directly on the
//! patches, and precomputed vectors read from DSRF files.

mod dsrf;
mod matrix;
mod stats;
mod tiny_cnn;

pub use dsrf::{load_precomputed, read_dsrf, save_features, write_dsrf, DSRF_MAGIC, DSRF_VERSION, EXPORT_FEATURE_DIM};
pub use matrix::{extract_features, gray_to_rgb, Backend, FeatureMatrix, GrayImage};
pub use stats::{apply_stats, fit_stats, FeatureStats, STD_FLOOR};
pub use tiny_cnn::{CnnCache, TinyCnnParams, CNN_CHANNELS, DEFAULT_FEATURE_DIM};
