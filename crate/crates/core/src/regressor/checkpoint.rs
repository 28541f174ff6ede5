//! DSRM checkpoint files.
//!
//! Little-endian layout: magic `DSRM`, version `u32`, extractor tag `u32`
//! (0 = tiny CNN, 1 = precomputed), feature dimension `u32`, block count
//! `u32`, then per block: name length `u32`, UTF-8 name, rank `u32`, extents
//! `u32 * rank`, and the `f64` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Backend, FeatureStats, TinyCnnParams};
use crate::numerics::Tensor;
use crate::patch_grid::{DEFAULT_PATCH_SIZE, DEFAULT_STRIDE};

use super::lstm::{LstmLayerParams, Readout, RegressorParams};

pub const DSRM_MAGIC: &[u8; 4] = b"DSRM";
pub const DSRM_VERSION: u32 = 1;

/// Everything needed to predict: regressor, feature statistics, grid
/// geometry and (for the tiny CNN backend) the extractor weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub backend: Backend,
    pub regressor: RegressorParams,
    pub stats: FeatureStats,
    pub cnn: Option<TinyCnnParams>,
    pub patch_size: usize,
    pub stride: usize,
}

impl Checkpoint {
    pub fn new(backend: Backend, regressor: RegressorParams, stats: FeatureStats, cnn: Option<TinyCnnParams>) -> Self {
        Self { backend, regressor, stats, cnn, patch_size: DEFAULT_PATCH_SIZE, stride: DEFAULT_STRIDE }
    }

    pub fn dim(&self) -> usize {
        self.regressor.input_size()
    }

    fn named_blocks(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> =
            self.regressor.blocks().into_iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let readout = match self.regressor.readout {
            Readout::Final => 0.0,
            Readout::Center => 1.0,
        };
        let seed = self.regressor.seed;
        out.push(("meta.readout".into(), Tensor::scalar(readout)));
        out.push(("meta.seed".into(), vec_tensor(vec![(seed & 0xffff_ffff) as f64, (seed >> 32) as f64])));
        out.push(("meta.grid".into(), vec_tensor(vec![self.patch_size as f64, self.stride as f64])));
        out.push(("stats.mean".into(), vec_tensor(self.stats.mean.clone())));
        out.push(("stats.std".into(), vec_tensor(self.stats.std.clone())));
        if let Some(cnn) = &self.cnn {
            out.extend(cnn.blocks().into_iter().map(|(n, t)| (n.to_string(), t.clone())));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DSRM_MAGIC);
        buf.extend_from_slice(&DSRM_VERSION.to_le_bytes());
        put_u32(&mut buf, backend_tag(self.backend))?;
        put_u32(&mut buf, self.dim())?;
        let blocks = self.named_blocks();
        put_u32(&mut buf, blocks.len())?;
        for (name, t) in &blocks {
            put_u32(&mut buf, name.len())?;
            buf.extend_from_slice(name.as_bytes());
            put_u32(&mut buf, t.shape().len())?;
            for &d in t.shape() {
                put_u32(&mut buf, d)?;
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DSRM_MAGIC {
            return Err(Error::Format("bad magic, expected `DSRM`".into()));
        }
        let version = r.u32()?;
        if version != DSRM_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let backend = match r.u32()? {
            0 => Backend::TinyCnn,
            1 => Backend::Precomputed,
            t => return Err(Error::Format(format!("unknown extractor tag {t}"))),
        };
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut blocks: Vec<(String, Option<Tensor>)> = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("block name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("block too large".into()))?)?;
            let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("block `{name}`: {e}")))?;
            blocks.push((name, Some(t)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last block".into()));
        }
        let mut take =
            |name: &str| -> Option<Tensor> { blocks.iter_mut().find(|(n, _)| n == name).and_then(|(_, t)| t.take()) };
        let fmt = |e: Error| Error::Format(e.to_string());
        let mut need = |name: &str| take(name).ok_or_else(|| Error::Format(format!("missing block `{name}`")));

        let l1 = layer(need("layer1.w")?, need("layer1.u")?, need("layer1.b")?)?;
        let l2 = layer(need("layer2.w")?, need("layer2.u")?, need("layer2.b")?)?;
        let head_w = need("head.w")?;
        let head_b = need("head.b")?;
        let readout = match need("meta.readout")?.data() {
            [v] if *v == 0.0 => Readout::Final,
            [v] if *v == 1.0 => Readout::Center,
            _ => return Err(Error::Format("bad readout block".into())),
        };
        let seed = match need("meta.seed")?.data() {
            &[lo, hi] => (lo as u64) | ((hi as u64) << 32),
            _ => return Err(Error::Format("bad seed block".into())),
        };
        let (patch_size, stride) = match need("meta.grid")?.data() {
            &[p, s] => (p as usize, s as usize),
            _ => return Err(Error::Format("bad grid block".into())),
        };
        let stats = FeatureStats { mean: need("stats.mean")?.into_data(), std: need("stats.std")?.into_data() };
        let regressor = RegressorParams { layer1: l1, layer2: l2, head_w, head_b, readout, seed };
        regressor.validate().map_err(fmt)?;
        if regressor.input_size() != dim || stats.dim() != dim || stats.std.len() != dim {
            return Err(Error::Format(format!("header dimension {dim} disagrees with the stored blocks")));
        }
        let cnn = match backend {
            Backend::TinyCnn => {
                let cnn = TinyCnnParams::from_blocks(&mut take).map_err(fmt)?;
                if cnn.dim() != dim {
                    return Err(Error::Format("cnn output dimension disagrees with header".into()));
                }
                Some(cnn)
            }
            Backend::Precomputed => None,
        };
        Ok(Self { backend, regressor, stats, cnn, patch_size, stride })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn backend_tag(backend: Backend) -> usize {
    match backend {
        Backend::TinyCnn => 0,
        Backend::Precomputed => 1,
    }
}

fn vec_tensor(v: Vec<f64>) -> Tensor {
    Tensor::new(vec![v.len()], v).expect("nonempty vector block")
}

fn layer(w: Tensor, u: Tensor, b: Tensor) -> Result<LstmLayerParams> {
    match (w.shape(), u.shape()) {
        (&[input_size, _], &[hidden_size, _]) => Ok(LstmLayerParams { input_size, hidden_size, w, u, b }),
        _ => Err(Error::Format("lstm weights must be matrices".into())),
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(backend: Backend) -> Checkpoint {
        let mut regressor = RegressorParams::with_hidden(6, 4, 0x1234_5678_9abc);
        regressor.readout = Readout::Center;
        let stats = FeatureStats { mean: (0..6).map(|v| v as f64 * 0.3).collect(), std: vec![1.5; 6] };
        let cnn = (backend == Backend::TinyCnn).then(|| TinyCnnParams::new(6, 9));
        Checkpoint { patch_size: 64, stride: 32, ..Checkpoint::new(backend, regressor, stats, cnn) }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for backend in [Backend::TinyCnn, Backend::Precomputed] {
            let ck = sample(backend);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn header() {
        let bytes = sample(Backend::Precomputed).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DSRM");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &6u32.to_le_bytes());
    }

    #[test]
    fn corrupt_files() {
        let bytes = sample(Backend::TinyCnn).to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut magic = bytes.clone();
        magic[3] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(1);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Format(_))));
        assert!(Checkpoint::from_bytes(&[]).is_err());
    }
}
