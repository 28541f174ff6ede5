//! Overlapping patch tiling, ground-truth local counts and density maps.
//!
//! Images are covered by `P x P` windows placed every `S` pixels along each
//! axis, plus one window flush with the far edge whenever the stride grid
//! stops short. Local counts are kept in *fractional* mode for training and
//! aggregation: every head contributes `1 / multiplicity` to each window that
//! contains it, so the plain sum over the grid equals the head count.

use crate::error::{contract, Error, Result};

pub const DEFAULT_PATCH_SIZE: usize = 100;
pub const DEFAULT_STRIDE: usize = 50;
pub const DEFAULT_GT_SIGMA: f64 = 4.0;

/// RGB image, row-major `height x width x 3`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(contract("image extents must be at least 1x1"));
        }
        if pixels.len() != height * width * Self::CHANNELS {
            return Err(contract(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * Self::CHANNELS,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(contract(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * Self::CHANNELS + channel]
    }

    /// Copies a `size x size` window into channel-major (CHW) layout.
    pub fn crop_chw(&self, top: usize, left: usize, size: usize) -> Vec<f64> {
        let mut out = vec![0.0; Self::CHANNELS * size * size];
        for r in 0..size {
            let src = &self.pixels[((top + r) * self.width + left) * Self::CHANNELS..];
            for c in 0..size {
                for ch in 0..Self::CHANNELS {
                    out[(ch * size + r) * size + c] = src[c * Self::CHANNELS + ch];
                }
            }
        }
        out
    }
}

/// A head centre: `x` is the column, `y` the row, both in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn pixel(self) -> (usize, usize) {
        (self.y.floor() as usize, self.x.floor() as usize)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadAnnotations {
    pub points: Vec<Point>,
}

impl HeadAnnotations {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        for (k, p) in self.points.iter().enumerate() {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < width as f64
                && p.y < height as f64;
            if !inside {
                return Err(Error::Input(format!(
                    "head {k} at ({}, {}) lies outside the {width}x{height} image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Window layout over one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    height: usize,
    width: usize,
    patch_size: usize,
    stride: usize,
    row_origins: Vec<usize>,
    col_origins: Vec<usize>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut origins: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o + patch <= extent).collect();
    let last = *origins.last().expect("extent >= patch gives at least one window");
    if last + patch < extent {
        origins.push(extent - patch);
    }
    origins
}

/// Number of windows along one axis that contain each coordinate.
fn axis_coverage(extent: usize, patch: usize, origins: &[usize]) -> Vec<u32> {
    let mut cover = vec![0u32; extent];
    for &o in origins {
        for c in &mut cover[o..o + patch] {
            *c += 1;
        }
    }
    cover
}

pub fn build_grid(height: usize, width: usize, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    if patch_size == 0 || stride == 0 || stride > patch_size {
        return Err(contract(format!("need 0 < stride <= patch size, got stride {stride}, patch {patch_size}")));
    }
    if height < patch_size || width < patch_size {
        return Err(Error::Input(format!(
            "image {width}x{height} is smaller than one {patch_size}x{patch_size} patch; \
             upscale or pad it first"
        )));
    }
    Ok(PatchGrid {
        height,
        width,
        patch_size,
        stride,
        row_origins: axis_origins(height, patch_size, stride),
        col_origins: axis_origins(width, patch_size, stride),
    })
}

impl PatchGrid {
    pub fn rows(&self) -> usize {
        self.row_origins.len()
    }

    pub fn cols(&self) -> usize {
        self.col_origins.len()
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn row_origins(&self) -> &[usize] {
        &self.row_origins
    }

    pub fn col_origins(&self) -> &[usize] {
        &self.col_origins
    }

    /// Top-left `(row, col)` of window `(i, j)`.
    pub fn origin(&self, i: usize, j: usize) -> (usize, usize) {
        (self.row_origins[i], self.col_origins[j])
    }

    /// All origins in row-major order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_origins.iter().flat_map(move |&r| self.col_origins.iter().map(move |&c| (r, c)))
    }

    fn covering(origins: &[usize], patch: usize, coord: usize) -> impl Iterator<Item = usize> + '_ {
        origins.iter().enumerate().filter(move |(_, &o)| o <= coord && coord < o + patch).map(|(k, _)| k)
    }

    pub fn coverage_map(&self) -> CoverageMap {
        let rows = axis_coverage(self.height, self.patch_size, &self.row_origins);
        let cols = axis_coverage(self.width, self.patch_size, &self.col_origins);
        let values = rows.iter().flat_map(|&r| cols.iter().map(move |&c| r * c)).collect();
        CoverageMap { height: self.height, width: self.width, values }
    }

    fn check_matrix(&self, counts: &LocalCountMatrix) -> Result<()> {
        if counts.rows != self.rows() || counts.cols != self.cols() {
            return Err(contract(format!(
                "count matrix is {}x{} but grid is {}x{}",
                counts.rows,
                counts.cols,
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }
}

/// Per-pixel number of windows containing that pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u32>,
}

impl CoverageMap {
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.values[row * self.width + col]
    }

    pub fn min(&self) -> u32 {
        self.values.iter().copied().min().unwrap_or(0)
    }
}

pub fn coverage_map(grid: &PatchGrid) -> CoverageMap {
    grid.coverage_map()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Each head weighted by the inverse of its window multiplicity.
    Fractional,
    /// Each head counted once in every window that contains it.
    Raw,
}

/// `m x n` local counts, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCountMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mode: CountMode,
}

impl LocalCountMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, mode: CountMode) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(contract(format!(
                "{rows}x{cols} count matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values, mode })
    }

    pub fn zeros(rows: usize, cols: usize, mode: CountMode) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols], mode }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy with every entry clamped to `>= 0`.
    pub fn clamped(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.max(0.0)).collect(), ..self.clone() }
    }
}

pub fn local_ground_truth(
    grid: &PatchGrid,
    annotations: &HeadAnnotations,
    mode: CountMode,
) -> Result<LocalCountMatrix> {
    annotations.validate(grid.height, grid.width)?;
    let mut counts = LocalCountMatrix::zeros(grid.rows(), grid.cols(), mode);
    let p = grid.patch_size;
    for point in &annotations.points {
        let (row, col) = point.pixel();
        let rows: Vec<usize> = PatchGrid::covering(&grid.row_origins, p, row).collect();
        let cols: Vec<usize> = PatchGrid::covering(&grid.col_origins, p, col).collect();
        let weight = match mode {
            CountMode::Raw => 1.0,
            CountMode::Fractional => 1.0 / (rows.len() * cols.len()) as f64,
        };
        for &i in &rows {
            for &j in &cols {
                counts.values[i * grid.cols() + j] += weight;
            }
        }
    }
    Ok(counts)
}

/// Sum of the (clamped) local counts.
pub fn global_count(counts: &LocalCountMatrix) -> Result<f64> {
    if counts.mode != CountMode::Fractional {
        return Err(Error::Mode("raw local counts overcount overlapping windows; aggregate fractional counts".into()));
    }
    Ok(counts.values.iter().map(|v| v.max(0.0)).sum())
}

/// Nonnegative per-pixel density field.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0.0; height * width] }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Spreads each clamped local count over its window, weighting pixels by
/// inverse coverage so overlapping windows share their pixels fairly.
pub fn assemble_density(grid: &PatchGrid, counts: &LocalCountMatrix) -> Result<DensityMap> {
    grid.check_matrix(counts)?;
    if counts.mode != CountMode::Fractional {
        return Err(Error::Mode("density maps are assembled from fractional counts".into()));
    }
    let coverage = grid.coverage_map();
    let inv: Vec<f64> = coverage.values.iter().map(|&c| 1.0 / f64::from(c)).collect();
    let mut map = DensityMap::zeros(grid.height, grid.width);
    let p = grid.patch_size;
    let w = grid.width;
    for i in 0..grid.rows() {
        for j in 0..grid.cols() {
            let c = counts.get(i, j).max(0.0);
            if c == 0.0 {
                continue;
            }
            let (top, left) = grid.origin(i, j);
            let total: f64 = (top..top + p).map(|r| inv[r * w + left..r * w + left + p].iter().sum::<f64>()).sum();
            let scale = c / total;
            for r in top..top + p {
                let row = r * w;
                for (d, &wt) in map.values[row + left..row + left + p].iter_mut().zip(&inv[row + left..row + left + p])
                {
                    *d += scale * wt;
                }
            }
        }
    }
    Ok(map)
}

/// Ground-truth visualisation map: one unit-mass Gaussian per head,
/// truncated at `3 sigma` and renormalised over the pixels it keeps.
pub fn gaussian_gt_density(
    height: usize,
    width: usize,
    annotations: &HeadAnnotations,
    sigma: f64,
) -> Result<DensityMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(contract(format!("sigma must be positive, got {sigma}")));
    }
    annotations.validate(height, width)?;
    let mut map = DensityMap::zeros(height, width);
    let cutoff = 3.0 * sigma;
    let radius = cutoff.ceil() as isize;
    let mut kernel = Vec::new();
    for point in &annotations.points {
        let (cr, cc) = point.pixel();
        kernel.clear();
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let (r, c) = (cr as isize + dr, cc as isize + dc);
                if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
                    continue;
                }
                let d2 = (dr * dr + dc * dc) as f64;
                if d2.sqrt() > cutoff {
                    continue;
                }
                kernel.push((r as usize * width + c as usize, (-d2 / (2.0 * sigma * sigma)).exp()));
            }
        }
        let total: f64 = kernel.iter().map(|(_, v)| v).sum();
        for &(idx, v) in &kernel {
            map.values[idx] += v / total;
        }
    }
    Ok(map)
}
