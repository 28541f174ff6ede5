//! DSRF feature files.
//!
//! Layout, all little-endian:
//!
//! | bytes  | content                         |
//! |--------|---------------------------------|
//! | 0..4   | magic `DSRF`                    |
//! | 4..8   | version `u32` = 1               |
//! | 8..20  | `m`, `n`, `D` as `u32`          |
//! | 20..   | `m * n * D` `f32`, `(i, j, d)`  |
//!
//! No trailing bytes are allowed.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::matrix::{Backend, FeatureMatrix};

pub const DSRF_MAGIC: &[u8; 4] = b"DSRF";
pub const DSRF_VERSION: u32 = 1;
/// Width of the backbone features the exporter produces.
pub const EXPORT_FEATURE_DIM: usize = 1000;
const HEADER_LEN: usize = 20;

pub fn write_dsrf<W: Write>(mut out: W, features: &FeatureMatrix) -> Result<()> {
    out.write_all(DSRF_MAGIC)?;
    out.write_all(&DSRF_VERSION.to_le_bytes())?;
    for extent in [features.rows(), features.cols(), features.dim()] {
        let extent = u32::try_from(extent).map_err(|_| Error::Format(format!("extent {extent} exceeds u32")))?;
        out.write_all(&extent.to_le_bytes())?;
    }
    let mut payload = Vec::with_capacity(features.values().len() * 4);
    for &v in features.values() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn save_features(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + features.values().len() * 4);
    write_dsrf(&mut buf, features)?;
    fs::write(path, buf)?;
    Ok(())
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

/// Parses a DSRF byte buffer; values are widened to `f64`.
pub fn read_dsrf(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("DSRF header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if &bytes[0..4] != DSRF_MAGIC {
        return Err(Error::Format("bad magic, expected `DSRF`".into()));
    }
    let version = u32_at(bytes, 4);
    if version != DSRF_VERSION {
        return Err(Error::Format(format!("unsupported DSRF version {version}")));
    }
    let (m, n, d) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize, u32_at(bytes, 16) as usize);
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::Format(format!("degenerate DSRF dimensions {m}x{n}x{d}")));
    }
    let count = m
        .checked_mul(n)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| Error::Format("DSRF dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "header declares {count} floats ({} bytes) but payload has {} bytes",
            count * 4,
            payload.len()
        )));
    }
    if d != EXPORT_FEATURE_DIM {
        log::warn!("DSRF feature dimension is {d}, expected {EXPORT_FEATURE_DIM}; accepting");
    }
    let values: Vec<f64> =
        payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk")))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("DSRF payload contains non-finite values".into()));
    }
    FeatureMatrix::new(m, n, d, values, Backend::Precomputed)
}

pub fn load_precomputed(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    read_dsrf(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        let values = (0..2 * 3 * 4).map(|v| (v as f64) * 0.1 - 0.7).collect();
        FeatureMatrix::new(2, 3, 4, values, Backend::TinyCnn).unwrap()
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_dsrf(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[0..4], b"DSRF");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..20], &[2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(buf.len(), 20 + 24 * 4);
        assert_eq!(&buf[20..24], &(-0.7f32).to_le_bytes());
    }

    #[test]
    fn round_trip_at_f32_precision() {
        let f = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.dsrf");
        save_features(&path, &f).unwrap();
        let g = load_precomputed(&path).unwrap();
        assert_eq!(g.backend(), Backend::Precomputed);
        assert_eq!((g.rows(), g.cols(), g.dim()), (2, 3, 4));
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(f64::from(*a as f32), *b);
        }
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(read_dsrf(&[]), Err(Error::Format(_))));

        let mut buf = Vec::new();
        write_dsrf(&mut buf, &sample()).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_dsrf(&bad_magic), Err(Error::Format(_))));

        let mut bad_version = buf.clone();
        bad_version[4] = 2;
        assert!(matches!(read_dsrf(&bad_version), Err(Error::Format(_))));

        assert!(matches!(read_dsrf(&buf[..buf.len() - 1]), Err(Error::Format(_))));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(read_dsrf(&trailing), Err(Error::Format(_))));

        let mut zero_dim = buf;
        zero_dim[16..20].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(read_dsrf(&zero_dim), Err(Error::Format(_))));
    }
}
