//! Synthetic crowds: bright Gaussian blobs ("heads") on a noisy background,
//! one annotation point per blob centre.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::annotations::AnnotationFile;
use crate::error::{CliError, CliResult};
use crate::manifest::{ManifestFile, Record};

const BACKGROUND: f64 = 0.2;
const BLOB_PEAK: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub count_min: usize,
    pub count_max: usize,
    pub blob_sigma: f64,
    pub noise: f64,
    pub images: usize,
    /// Trailing images placed in the test split.
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { size: 160, count_min: 10, count_max: 100, blob_sigma: 2.0, noise: 0.03, images: 250, test: 50, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.size == 0 || self.images == 0 {
            return Err(CliError::input("synthetic size and image count must be positive"));
        }
        if self.count_min > self.count_max {
            return Err(CliError::input("count range is empty"));
        }
        // One blob per 4x4 cell at most keeps heads distinguishable.
        if self.count_max > self.size * self.size / 16 {
            return Err(CliError::input(format!(
                "at most {} heads fit in a {}-pixel image",
                self.size * self.size / 16,
                self.size
            )));
        }
        if !(self.blob_sigma > 0.0 && self.blob_sigma.is_finite()) || !(0.0..=1.0).contains(&self.noise) {
            return Err(CliError::input("blob sigma must be positive and noise within [0, 1]"));
        }
        if self.test > self.images {
            return Err(CliError::input("more test images than images"));
        }
        Ok(())
    }
}

/// One rendered image: interleaved RGB bytes and head centres `(x, y)`.
pub struct SynthImage {
    pub rgb: Vec<u8>,
    pub points: Vec<[f64; 2]>,
}

pub fn render(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> SynthImage {
    let s = spec.size;
    let count = rng.random_range(spec.count_min..=spec.count_max);
    let points: Vec<[f64; 2]> =
        (0..count).map(|_| [rng.random_range(0.0..s as f64), rng.random_range(0.0..s as f64)]).collect();
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.85..1.0));

    let mut lum = vec![BACKGROUND; s * s];
    let radius = (3.0 * spec.blob_sigma).ceil() as isize;
    let two_var = 2.0 * spec.blob_sigma * spec.blob_sigma;
    for &[x, y] in &points {
        let (cx, cy) = (x.floor() as isize, y.floor() as isize);
        for r in (cy - radius).max(0)..(cy + radius + 1).min(s as isize) {
            for c in (cx - radius).max(0)..(cx + radius + 1).min(s as isize) {
                let d2 = (c as f64 + 0.5 - x).powi(2) + (r as f64 + 0.5 - y).powi(2);
                lum[r as usize * s + c as usize] += BLOB_PEAK * (-d2 / two_var).exp();
            }
        }
    }
    let mut rgb = Vec::with_capacity(s * s * 3);
    for v in lum {
        for t in tint {
            let noisy = v * t + spec.noise * rng.sample::<f64, _>(StandardNormal);
            rgb.push((noisy.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    SynthImage { rgb, points }
}

/// Writes `images/NNNN.png`, `annotations/NNNN.json` and `manifest.json`
/// under `out`. The last `spec.test` images form the test split.
pub fn generate(spec: &SyntheticSpec, out: &Path) -> CliResult<ManifestFile> {
    spec.validate()?;
    std::fs::create_dir_all(out.join("images"))?;
    std::fs::create_dir_all(out.join("annotations"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.images);
    for k in 0..spec.images {
        let img = render(spec, &mut rng);
        let image = format!("images/{k:04}.png");
        let annotations = format!("annotations/{k:04}.json");
        image::save_buffer(out.join(&image), &img.rgb, spec.size as u32, spec.size as u32, image::ColorType::Rgb8)?;
        AnnotationFile { image: image.clone(), points: img.points }.save(&out.join(&annotations))?;
        records.push(Record { image, annotations, features: None });
    }
    let names: Vec<String> = records.iter().map(|r| r.image.clone()).collect();
    let cut = spec.images - spec.test;
    let manifest = ManifestFile {
        name: format!("synthetic-{}", spec.seed),
        records,
        train: Some(names[..cut].to_vec()),
        test: Some(names[cut..].to_vec()),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_count() {
        let spec = SyntheticSpec { count_min: 5, count_max: 5, images: 3, test: 1, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&spec, dir.path()).unwrap();
        assert_eq!(m.records.len(), 3);
        for r in &m.records {
            let ann = AnnotationFile::load(&dir.path().join(&r.annotations)).unwrap();
            assert_eq!(ann.points.len(), 5);
            assert!(ann.points.iter().flatten().all(|&v| (0.0..160.0).contains(&v)));
        }
        assert_eq!(m.test.as_deref(), Some(&["images/0002.png".to_string()][..]));
    }

    #[test]
    fn blobs_brighten_the_image() {
        let spec = SyntheticSpec { count_min: 0, count_max: 0, noise: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let empty = render(&spec, &mut rng);
        let crowded = render(&SyntheticSpec { count_min: 80, count_max: 80, ..spec }, &mut rng);
        let mean = |v: &[u8]| v.iter().map(|&b| f64::from(b)).sum::<f64>() / v.len() as f64;
        assert!(mean(&crowded.rgb) > mean(&empty.rgb) + 5.0);
    }

    #[test]
    fn rejects_overfull_ranges() {
        let spec = SyntheticSpec { size: 16, count_min: 1, count_max: 17, ..Default::default() };
        assert!(spec.validate().is_err());
        assert!(SyntheticSpec { count_min: 9, count_max: 3, ..Default::default() }.validate().is_err());
    }
}
