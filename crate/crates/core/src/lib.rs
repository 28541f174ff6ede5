//! Crowd counting by regressing local counts over overlapping patches.
//!
//! An image is cut into a grid of overlapping square patches, each patch is
//! turned into a feature vector, and a stacked LSTM reads short horizontal
//! runs of neighbouring patches to predict each patch's local count. The
//! local counts are merged back into a global count and a density map.

mod error;
pub mod eval;
pub mod features;
pub mod numerics;
pub mod patch_grid;
pub mod regressor;
pub mod spatial;

pub use error::{Error, Result};
pub use features::{Backend, FeatureMatrix, FeatureStats, TinyCnnParams};
pub use patch_grid::{build_grid, DensityMap, HeadAnnotations, ImageBuffer, LocalCountMatrix, PatchGrid, Point};
pub use regressor::{Checkpoint, RegressorParams, TrainConfig};
