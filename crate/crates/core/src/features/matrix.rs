use crate::error::{contract, Error, Result};
use crate::patch_grid::{ImageBuffer, PatchGrid};

use super::tiny_cnn::TinyCnnParams;

/// Single-channel image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Replicates a grayscale image into three identical channels.
pub fn gray_to_rgb(gray: &GrayImage) -> Result<ImageBuffer> {
    let pixels = gray.values.iter().flat_map(|&v| [v, v, v]).collect();
    ImageBuffer::new(gray.height, gray.width, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    TinyCnn,
    Precomputed,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::TinyCnn => "tiny_cnn",
            Backend::Precomputed => "precomputed",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny_cnn" => Ok(Backend::TinyCnn),
            "precomputed" => Ok(Backend::Precomputed),
            other => Err(Error::Input(format!("unknown feature backend `{other}`"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `m x n x D` deep features matrix, stored row-major in `(i, j, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    dim: usize,
    values: Vec<f64>,
    backend: Backend,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, dim: usize, values: Vec<f64>, backend: Backend) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(contract(format!("feature matrix extents must be positive, got {rows}x{cols}x{dim}")));
        }
        if values.len() != rows * cols * dim {
            return Err(contract(format!(
                "{rows}x{cols}x{dim} feature matrix needs {} values, got {}",
                rows * cols * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(contract("feature values must be finite"));
        }
        Ok(Self { rows, cols, dim, values, backend })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Feature vector of cell `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn matches_grid(&self, grid: &PatchGrid) -> bool {
        self.rows == grid.rows() && self.cols == grid.cols()
    }
}

/// Runs the tiny CNN over every window of `grid`, in row-major order.
pub fn extract_features(image: &ImageBuffer, grid: &PatchGrid, params: &TinyCnnParams) -> Result<FeatureMatrix> {
    if image.height() != grid.height() || image.width() != grid.width() {
        return Err(contract(format!(
            "grid built for {}x{} but image is {}x{}",
            grid.width(),
            grid.height(),
            image.width(),
            image.height()
        )));
    }
    let size = grid.patch_size();
    if size < TinyCnnParams::min_patch_size() {
        return Err(contract(format!("patch size {size} is too small for the tiny CNN")));
    }
    let dim = params.dim();
    let mut values = Vec::with_capacity(grid.len() * dim);
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            let (top, left) = grid.origin(i, j);
            let f = params.forward(&image.crop_chw(top, left, size), size);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Extraction { row: i, col: j });
            }
            values.extend_from_slice(&f);
        }
    }
    FeatureMatrix::new(grid.rows(), grid.cols(), dim, values, Backend::TinyCnn)
}
