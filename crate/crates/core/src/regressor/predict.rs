use crate::error::{contract, Result};
use crate::features::{apply_stats, extract_features, FeatureMatrix, FeatureStats, TinyCnnParams};
use crate::patch_grid::{
    assemble_density, global_count, CountMode, DensityMap, ImageBuffer, LocalCountMatrix, PatchGrid,
};
use crate::spatial::make_sequences;

use super::lstm::{predict_sequences, RegressorParams};

/// Where the per-patch features of an image come from.
#[derive(Debug, Clone, Copy)]
pub enum Extractor<'a> {
    TinyCnn(&'a TinyCnnParams),
    /// Raw (unstandardised) features read from a DSRF file.
    Precomputed(&'a FeatureMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub count: f64,
    pub local: LocalCountMatrix,
    pub density: DensityMap,
}

pub fn predict_image(
    image: &ImageBuffer,
    grid: &PatchGrid,
    extractor: Extractor<'_>,
    stats: &FeatureStats,
    params: &RegressorParams,
) -> Result<Prediction> {
    let features = match extractor {
        Extractor::TinyCnn(cnn) => extract_features(image, grid, cnn)?,
        Extractor::Precomputed(f) => f.clone(),
    };
    predict_features(&features, grid, stats, params)
}

/// Standardise, sequence, regress and aggregate one features matrix.
pub fn predict_features(
    features: &FeatureMatrix,
    grid: &PatchGrid,
    stats: &FeatureStats,
    params: &RegressorParams,
) -> Result<Prediction> {
    if !features.matches_grid(grid) {
        return Err(contract(format!(
            "features matrix is {}x{} but the grid is {}x{}",
            features.rows(),
            features.cols(),
            grid.rows(),
            grid.cols()
        )));
    }
    let standard = apply_stats(features, stats)?;
    let sequences = make_sequences(&standard)?;
    let raw = predict_sequences(&sequences, params)?;
    let local = LocalCountMatrix::new(grid.rows(), grid.cols(), raw, CountMode::Fractional)?.clamped();
    let count = global_count(&local)?;
    let density = assemble_density(grid, &local)?;
    Ok(Prediction { count, local, density })
}
