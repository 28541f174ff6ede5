use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};
use crate::numerics::kernels::{axpy, dot};
use crate::numerics::Tensor;

pub const DEFAULT_FEATURE_DIM: usize = 64;
/// Channel progression of the three conv stages.
pub const CNN_CHANNELS: [usize; 4] = [3, 8, 16, 32];
const K: usize = 3;

/// Three `3x3` valid conv + ReLU + `2x2` max-pool stages, global average
/// pooling, then an affine projection to `dim` features.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyCnnParams {
    /// `[out, in, 3, 3]` per stage.
    pub conv_w: [Tensor; 3],
    pub conv_b: [Tensor; 3],
    /// `[32, dim]`, input-major.
    pub head_w: Tensor,
    pub head_b: Tensor,
}

const BLOCK_NAMES: [&str; 8] = [
    "cnn.conv1.w",
    "cnn.conv1.b",
    "cnn.conv2.w",
    "cnn.conv2.b",
    "cnn.conv3.w",
    "cnn.conv3.b",
    "cnn.head.w",
    "cnn.head.b",
];

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
}

impl TinyCnnParams {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_w = std::array::from_fn(|s| {
            let (cin, cout) = (CNN_CHANNELS[s], CNN_CHANNELS[s + 1]);
            glorot(&[cout, cin, K, K], cin * K * K, cout * K * K, &mut rng)
        });
        let conv_b = std::array::from_fn(|s| Tensor::zeros(&[CNN_CHANNELS[s + 1]]));
        let head_w = glorot(&[CNN_CHANNELS[3], dim], CNN_CHANNELS[3], dim, &mut rng);
        Self { conv_w, conv_b, head_w, head_b: Tensor::zeros(&[dim]) }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            conv_w: self.conv_w.clone().map(|t| t.zeros_like()),
            conv_b: self.conv_b.clone().map(|t| t.zeros_like()),
            head_w: self.head_w.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }

    pub fn dim(&self) -> usize {
        self.head_b.len()
    }

    pub fn blocks(&self) -> Vec<(&'static str, &Tensor)> {
        let [w1, w2, w3] = &self.conv_w;
        let [b1, b2, b3] = &self.conv_b;
        BLOCK_NAMES.into_iter().zip([w1, b1, w2, b2, w3, b3, &self.head_w, &self.head_b]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let [w1, w2, w3] = &mut self.conv_w;
        let [b1, b2, b3] = &mut self.conv_b;
        BLOCK_NAMES.into_iter().zip([w1, b1, w2, b2, w3, b3, &mut self.head_w, &mut self.head_b]).collect()
    }

    /// Rebuilds parameters from named blocks (checkpoint loading).
    pub fn from_blocks(mut lookup: impl FnMut(&str) -> Option<Tensor>) -> Result<Self> {
        let mut take = |name: &str| lookup(name).ok_or_else(|| contract(format!("missing block `{name}`")));
        let params = Self {
            conv_w: [take(BLOCK_NAMES[0])?, take(BLOCK_NAMES[2])?, take(BLOCK_NAMES[4])?],
            conv_b: [take(BLOCK_NAMES[1])?, take(BLOCK_NAMES[3])?, take(BLOCK_NAMES[5])?],
            head_w: take(BLOCK_NAMES[6])?,
            head_b: take(BLOCK_NAMES[7])?,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..3 {
            let (cin, cout) = (CNN_CHANNELS[s], CNN_CHANNELS[s + 1]);
            if self.conv_w[s].shape() != [cout, cin, K, K] || self.conv_b[s].shape() != [cout] {
                return Err(contract(format!("conv stage {} has wrong shape", s + 1)));
            }
        }
        let dim = self.dim();
        if self.head_w.shape() != [CNN_CHANNELS[3], dim] {
            return Err(contract("cnn head weight shape does not match its bias"));
        }
        Ok(())
    }

    /// Smallest patch side that survives the three conv/pool stages.
    pub fn min_patch_size() -> usize {
        // 3 -> 1 after the last stage requires side >= 22
        22
    }

    /// Feature vector for one `3 x size x size` channel-major patch.
    pub fn forward(&self, patch: &[f64], size: usize) -> Vec<f64> {
        self.forward_cached(patch, size).features
    }

    pub fn forward_cached(&self, patch: &[f64], size: usize) -> CnnCache {
        debug_assert_eq!(patch.len(), 3 * size * size);
        let mut stages = Vec::with_capacity(3);
        let mut input = patch.to_vec();
        let mut side = size;
        for s in 0..3 {
            let (cin, cout) = (CNN_CHANNELS[s], CNN_CHANNELS[s + 1]);
            let conv_side = side - (K - 1);
            let mut act = conv2d_valid(&input, cin, side, &self.conv_w[s], &self.conv_b[s], cout);
            for v in &mut act {
                *v = v.max(0.0);
            }
            let (pooled, argmax, pool_side) = max_pool2(&act, cout, conv_side);
            stages.push(StageCache { input, side, conv_side, argmax });
            input = pooled;
            side = pool_side;
        }
        let channels = CNN_CHANNELS[3];
        let area = (side * side) as f64;
        let gap: Vec<f64> = input.chunks_exact(side * side).map(|c| c.iter().sum::<f64>() / area).collect();
        let mut features = self.head_b.data().to_vec();
        let dim = features.len();
        for (c, &g) in gap.iter().enumerate() {
            axpy(g, &self.head_w.data()[c * dim..(c + 1) * dim], &mut features);
        }
        debug_assert_eq!(gap.len(), channels);
        CnnCache { stages, final_side: side, gap, features }
    }

    /// Accumulates into `grads` the gradient of `<grad_features, f(patch)>`.
    pub fn backward(&self, cache: &CnnCache, grad_features: &[f64], grads: &mut TinyCnnParams) {
        let dim = self.dim();
        debug_assert_eq!(grad_features.len(), dim);
        axpy(1.0, grad_features, grads.head_b.data_mut());
        let channels = CNN_CHANNELS[3];
        let side = cache.final_side;
        let area = (side * side) as f64;
        let mut grad_pooled = vec![0.0; channels * side * side];
        for c in 0..channels {
            axpy(cache.gap[c], grad_features, &mut grads.head_w.data_mut()[c * dim..(c + 1) * dim]);
            let g = dot(&self.head_w.data()[c * dim..(c + 1) * dim], grad_features) / area;
            grad_pooled[c * side * side..(c + 1) * side * side].fill(g);
        }

        for s in (0..3).rev() {
            let stage = &cache.stages[s];
            let (cin, cout) = (CNN_CHANNELS[s], CNN_CHANNELS[s + 1]);
            // Un-pool; ReLU is folded in because argmax entries of a
            // zero-clamped window only matter when positive.
            let mut grad_act = vec![0.0; cout * stage.conv_side * stage.conv_side];
            for (&src, &g) in stage.argmax.iter().zip(&grad_pooled) {
                if let Some(src) = src {
                    grad_act[src] += g;
                }
            }
            let need_input = s > 0;
            grad_pooled = conv2d_valid_backward(
                &stage.input,
                cin,
                stage.side,
                &self.conv_w[s],
                &grad_act,
                cout,
                &mut grads.conv_w[s],
                &mut grads.conv_b[s],
                need_input,
            );
        }
    }
}

struct StageCache {
    input: Vec<f64>,
    side: usize,
    conv_side: usize,
    /// For each pooled cell, the conv-output index it came from, or `None`
    /// when the winning activation was clamped to zero by the ReLU.
    argmax: Vec<Option<usize>>,
}

/// Intermediate activations of one patch forward pass.
pub struct CnnCache {
    stages: Vec<StageCache>,
    final_side: usize,
    gap: Vec<f64>,
    pub features: Vec<f64>,
}

fn conv2d_valid(input: &[f64], cin: usize, side: usize, w: &Tensor, b: &Tensor, cout: usize) -> Vec<f64> {
    let out_side = side - (K - 1);
    let plane = out_side * out_side;
    let mut out = vec![0.0; cout * plane];
    let w = w.data();
    for oc in 0..cout {
        let out_plane = &mut out[oc * plane..(oc + 1) * plane];
        out_plane.fill(b.data()[oc]);
        for ic in 0..cin {
            let in_plane = &input[ic * side * side..(ic + 1) * side * side];
            for ky in 0..K {
                for kx in 0..K {
                    let wv = w[((oc * cin + ic) * K + ky) * K + kx];
                    for y in 0..out_side {
                        let src = &in_plane[(y + ky) * side + kx..(y + ky) * side + kx + out_side];
                        axpy(wv, src, &mut out_plane[y * out_side..(y + 1) * out_side]);
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv2d_valid_backward(
    input: &[f64],
    cin: usize,
    side: usize,
    w: &Tensor,
    grad_out: &[f64],
    cout: usize,
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
    need_input: bool,
) -> Vec<f64> {
    let out_side = side - (K - 1);
    let plane = out_side * out_side;
    let mut grad_in = if need_input { vec![0.0; cin * side * side] } else { Vec::new() };
    let wd = w.data();
    let gw = grad_w.data_mut();
    for oc in 0..cout {
        let g_plane = &grad_out[oc * plane..(oc + 1) * plane];
        if g_plane.iter().all(|&g| g == 0.0) {
            continue;
        }
        grad_b.data_mut()[oc] += g_plane.iter().sum::<f64>();
        for ic in 0..cin {
            let in_plane = &input[ic * side * side..(ic + 1) * side * side];
            for ky in 0..K {
                for kx in 0..K {
                    let idx = ((oc * cin + ic) * K + ky) * K + kx;
                    let mut acc = 0.0;
                    for y in 0..out_side {
                        let src = &in_plane[(y + ky) * side + kx..(y + ky) * side + kx + out_side];
                        acc += dot(src, &g_plane[y * out_side..(y + 1) * out_side]);
                    }
                    gw[idx] += acc;
                    if need_input {
                        let wv = wd[idx];
                        let gi = &mut grad_in[ic * side * side..(ic + 1) * side * side];
                        for y in 0..out_side {
                            let dst = &mut gi[(y + ky) * side + kx..(y + ky) * side + kx + out_side];
                            axpy(wv, &g_plane[y * out_side..(y + 1) * out_side], dst);
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// `2x2` stride-2 max pooling (floor); ties go to the first cell in scan order.
fn max_pool2(input: &[f64], channels: usize, side: usize) -> (Vec<f64>, Vec<Option<usize>>, usize) {
    let out_side = side / 2;
    let mut out = Vec::with_capacity(channels * out_side * out_side);
    let mut argmax = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        let base = c * side * side;
        for y in 0..out_side {
            for x in 0..out_side {
                let mut best = base + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * side + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                argmax.push((input[best] > 0.0).then_some(best));
            }
        }
    }
    (out, argmax, out_side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, DEFAULT_FD_STEP};

    /// Direct transcription of the network, one output value at a time.
    fn naive_forward(p: &TinyCnnParams, patch: &[f64], size: usize) -> Vec<f64> {
        let mut x = patch.to_vec();
        let mut side = size;
        for s in 0..3 {
            let (cin, cout) = (CNN_CHANNELS[s], CNN_CHANNELS[s + 1]);
            let os = side - 2;
            let mut conv = vec![0.0; cout * os * os];
            for oc in 0..cout {
                for y in 0..os {
                    for xx in 0..os {
                        let mut acc = p.conv_b[s].data()[oc];
                        for ic in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    acc += p.conv_w[s].data()[((oc * cin + ic) * 3 + ky) * 3 + kx]
                                        * x[(ic * side + y + ky) * side + xx + kx];
                                }
                            }
                        }
                        conv[(oc * os + y) * os + xx] = acc.max(0.0);
                    }
                }
            }
            let ps = os / 2;
            let mut pooled = vec![0.0; cout * ps * ps];
            for c in 0..cout {
                for y in 0..ps {
                    for xx in 0..ps {
                        let mut m = f64::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                m = m.max(conv[(c * os + 2 * y + dy) * os + 2 * xx + dx]);
                            }
                        }
                        pooled[(c * ps + y) * ps + xx] = m;
                    }
                }
            }
            x = pooled;
            side = ps;
        }
        let dim = p.dim();
        (0..dim)
            .map(|d| {
                let mut acc = p.head_b.data()[d];
                for c in 0..32 {
                    let mean: f64 =
                        x[c * side * side..(c + 1) * side * side].iter().sum::<f64>() / (side * side) as f64;
                    acc += mean * p.head_w.data()[c * dim + d];
                }
                acc
            })
            .collect()
    }

    fn random_patch(size: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..3 * size * size).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    fn with_random_biases(mut p: TinyCnnParams, seed: u64) -> TinyCnnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in p.conv_b.iter_mut().chain([&mut p.head_b]) {
            b.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
        p
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let p = with_random_biases(TinyCnnParams::new(16, 4), 5);
        let patch = random_patch(100, 6);
        let fast = p.forward(&patch, 100);
        let slow = naive_forward(&p, &patch, 100);
        assert_eq!(fast.len(), 16);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn output_dimension() {
        let p = TinyCnnParams::new(64, 0);
        assert_eq!(p.forward(&random_patch(100, 1), 100).len(), 64);
        assert_eq!(p.forward(&random_patch(22, 1), 22).len(), 64);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let size = 24;
        let p = with_random_biases(TinyCnnParams::new(3, 8), 9);
        let patch = random_patch(size, 10);
        let probe = [0.3, -1.1, 0.7];
        let objective = |params: &TinyCnnParams| -> f64 {
            params.forward(&patch, size).iter().zip(&probe).map(|(f, w)| f * w).sum()
        };
        let cache = p.forward_cached(&patch, size);
        let mut grads = p.zeros_like();
        p.backward(&cache, &probe, &mut grads);

        for (idx, ((name, analytic), (_, value))) in grads.blocks().into_iter().zip(p.blocks()).enumerate() {
            let numeric = finite_diff_grad(
                |t| {
                    let mut q = p.clone();
                    *q.blocks_mut()[idx].1 = t.clone();
                    objective(&q)
                },
                value,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                let tol = 1e-4 * a.abs().max(n.abs()) + 1e-6;
                assert!((a - n).abs() <= tol, "{name}: analytic {a} vs numeric {n}");
            }
        }
    }

    #[test]
    fn block_round_trip() {
        let p = TinyCnnParams::new(5, 3);
        let blocks: Vec<(String, Tensor)> = p.blocks().into_iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let q =
            TinyCnnParams::from_blocks(|name| blocks.iter().find(|(n, _)| n == name).map(|(_, t)| t.clone())).unwrap();
        assert_eq!(p, q);
        assert!(TinyCnnParams::from_blocks(|_| None).is_err());
    }
}
