//! Image decoding into `[0, 1]` RGB buffers and 16-bit density-map export.

use std::path::Path;

use dsrm_core::features::{gray_to_rgb, GrayImage};
use dsrm_core::patch_grid::{DensityMap, HeadAnnotations, ImageBuffer, Point};
use image::imageops::FilterType;
use image::DynamicImage;

use crate::error::{CliError, CliResult};

/// A decoded image and the factors its coordinates were scaled by.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: ImageBuffer,
    /// `(x, y)` multipliers applied by upscaling; `(1, 1)` otherwise.
    pub scale: (f64, f64),
}

impl LoadedImage {
    pub fn scale_annotations(&self, heads: &HeadAnnotations) -> HeadAnnotations {
        let (sx, sy) = self.scale;
        HeadAnnotations::new(heads.points.iter().map(|p| Point::new(p.x * sx, p.y * sy)).collect())
    }
}

/// Decodes `path`. Images whose short side is below `min_side` are rejected
/// unless `upscale`, in which case they are bilinearly resized so the short
/// side equals `min_side`.
pub fn load_image(path: &Path, min_side: usize, upscale: bool) -> CliResult<LoadedImage> {
    let img = image::open(path).map_err(|e| CliError::input(format!("cannot decode {}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (img, scale) = if w.min(h) < min_side {
        if !upscale {
            return Err(CliError::input(format!(
                "{} is {w}x{h}, smaller than one {min_side}-pixel patch; pass --upscale-small to resize it",
                path.display()
            )));
        }
        let k = min_side as f64 / w.min(h) as f64;
        let (nw, nh) =
            (((w as f64 * k).round() as usize).max(min_side), ((h as f64 * k).round() as usize).max(min_side));
        let resized = img.resize_exact(nw as u32, nh as u32, FilterType::Triangle);
        (resized, (nw as f64 / w as f64, nh as f64 / h as f64))
    } else {
        (img, (1.0, 1.0))
    };
    Ok(LoadedImage { image: to_buffer(&img)?, scale })
}

fn to_buffer(img: &DynamicImage) -> CliResult<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let buffer = if img.color().has_color() {
        let rgb = img.to_rgb8();
        ImageBuffer::new(h, w, rgb.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect())?
    } else {
        let luma = img.to_luma8();
        let gray =
            GrayImage { height: h, width: w, values: luma.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect() };
        gray_to_rgb(&gray)?
    };
    Ok(buffer)
}

/// Writes `map` as a binary 16-bit PGM scaled so its maximum is 65535, and
/// returns the sidecar line recording the true mass.
pub fn write_density_pgm(map: &DensityMap, path: &Path) -> CliResult<String> {
    let max = map.max();
    let samples: Vec<u16> =
        map.values.iter().map(|&v| if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 }).collect();
    // The image crate only encodes 8-bit graymaps; a 16-bit P5 is a
    // text header followed by big-endian samples.
    let mut out = format!("P5\n{} {}\n65535\n", map.width, map.height).into_bytes();
    out.extend(samples.iter().flat_map(|s| s.to_be_bytes()));
    std::fs::write(path, out)?;
    Ok(format!("mass {}\n", map.mass()))
}

/// Parses a sidecar written next to a density map.
pub fn parse_mass_sidecar(text: &str) -> CliResult<f64> {
    text.trim()
        .strip_prefix("mass ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::input("malformed density sidecar"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let map = DensityMap { height: 2, width: 3, values: vec![0.0, 0.5, 1.0, 0.25, 0.0, 2.0] };
        let side = write_density_pgm(&map, &path).unwrap();
        assert_eq!(parse_mass_sidecar(&side).unwrap(), 3.75);
        let back = image::open(&path).unwrap().to_luma16();
        assert_eq!(back.dimensions(), (3, 2));
        assert_eq!(back.as_raw(), &vec![0, 16384, 32768, 8192, 0, 65535]);
        let header = std::fs::read(&path).unwrap();
        assert!(header.starts_with(b"P5"));
    }

    #[test]
    fn small_images_need_the_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.png");
        image::GrayImage::from_pixel(40, 50, image::Luma([128])).save(&path).unwrap();
        assert!(matches!(load_image(&path, 100, false), Err(CliError::Input(_))));
        let loaded = load_image(&path, 100, true).unwrap();
        assert_eq!((loaded.image.width(), loaded.image.height()), (100, 125));
        assert_eq!(loaded.scale, (2.5, 2.5));
        assert!((loaded.image.get(10, 10, 2) - 128.0 / 255.0).abs() < 1e-12);
        let heads = loaded.scale_annotations(&HeadAnnotations::new(vec![Point::new(4.0, 2.0)]));
        assert_eq!(heads.points[0], Point::new(10.0, 5.0));
    }
}
