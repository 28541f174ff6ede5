//! Two stacked LSTM layers over a length-3 spatial sequence, followed by a
//! single-unit affine readout.
//!
//! Gate pre-activations for a batch are computed as `X W + H U + b`, where
//! `W` is `[input, 4H]` and `U` is `[H, 4H]`. The `4H` columns hold the
//! input, forget, output and candidate gates in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Error, Result};
use crate::numerics::kernels::{axpy, dot, gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::numerics::tensor::sigmoid;
use crate::numerics::Tensor;
use crate::spatial::{SpatialSequence, SEQUENCE_LEN};

pub const DEFAULT_HIDDEN: usize = 100;
const GATES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            w: Tensor::zeros(&[input_size, GATES * hidden_size]),
            u: Tensor::zeros(&[hidden_size, GATES * hidden_size]),
            b: Tensor::zeros(&[GATES * hidden_size]),
        }
    }

    /// Uniform fan-based input weights, orthogonal recurrent blocks and a
    /// forget-gate bias of 1.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        let h4 = GATES * hidden_size;
        let limit = (6.0 / (input_size + hidden_size) as f64).sqrt();
        for v in p.w.data_mut() {
            *v = rng.random_range(-limit..limit);
        }
        for gate in 0..GATES {
            let q = random_orthogonal(hidden_size, rng);
            for r in 0..hidden_size {
                for c in 0..hidden_size {
                    p.u.data_mut()[r * h4 + gate * hidden_size + c] = q[r * hidden_size + c];
                }
            }
        }
        let forget = Gate::Forget as usize * hidden_size;
        p.b.data_mut()[forget..forget + hidden_size].fill(1.0);
        p
    }

    /// The `[input, H]` slice of `W` belonging to one gate, copied out.
    pub fn gate_input_weights(&self, gate: Gate) -> Tensor {
        self.gate_columns(&self.w, self.input_size, gate)
    }

    pub fn gate_recurrent_weights(&self, gate: Gate) -> Tensor {
        self.gate_columns(&self.u, self.hidden_size, gate)
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let h = self.hidden_size;
        &self.b.data()[gate as usize * h..(gate as usize + 1) * h]
    }

    fn gate_columns(&self, t: &Tensor, rows: usize, gate: Gate) -> Tensor {
        let h = self.hidden_size;
        let off = gate as usize * h;
        Tensor::from_fn(&[rows, h], |k| t.data()[(k / h) * GATES * h + off + k % h])
    }

    fn check(&self, name: &str) -> Result<()> {
        let (i, h) = (self.input_size, self.hidden_size);
        if self.w.shape() != [i, GATES * h] || self.u.shape() != [h, GATES * h] || self.b.shape() != [GATES * h] {
            return Err(contract(format!("{name} weight shapes inconsistent with input {i}, hidden {h}")));
        }
        Ok(())
    }
}

/// Gram-Schmidt on a Gaussian matrix; rows of the result are orthonormal.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for r in 0..n {
        for prev in 0..r {
            let (head, tail) = q.split_at_mut(r * n);
            let p = &head[prev * n..(prev + 1) * n];
            let row = &mut tail[..n];
            let proj = dot(p, row);
            axpy(-proj, p, row);
        }
        let row = &mut q[r * n..(r + 1) * n];
        let norm = dot(row, row).sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    q
}

/// Which timestep of the second layer feeds the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    #[default]
    Final,
    Center,
}

impl Readout {
    pub fn step(self) -> usize {
        match self {
            Readout::Final => SEQUENCE_LEN - 1,
            Readout::Center => 1,
        }
    }
}

/// Every trainable weight of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// `[H2]`.
    pub head_w: Tensor,
    /// `[1]`.
    pub head_b: Tensor,
    pub readout: Readout,
    pub seed: u64,
}

pub(crate) const BLOCK_NAMES: [&str; 8] =
    ["layer1.w", "layer1.u", "layer1.b", "layer2.w", "layer2.u", "layer2.b", "head.w", "head.b"];

impl RegressorParams {
    /// Two hidden layers of [`DEFAULT_HIDDEN`] units.
    pub fn new(input_size: usize, seed: u64) -> Self {
        Self::with_hidden(input_size, DEFAULT_HIDDEN, seed)
    }

    pub fn with_hidden(input_size: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer1 = LstmLayerParams::init(input_size, hidden, &mut rng);
        let layer2 = LstmLayerParams::init(hidden, hidden, &mut rng);
        let limit = (6.0 / (hidden + 1) as f64).sqrt();
        let head_w = Tensor::from_fn(&[hidden], |_| rng.random_range(-limit..limit));
        Self { layer1, layer2, head_w, head_b: Tensor::zeros(&[1]), readout: Readout::Final, seed }
    }

    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            layer1: LstmLayerParams::zeros(input_size, hidden),
            layer2: LstmLayerParams::zeros(hidden, hidden),
            head_w: Tensor::zeros(&[hidden]),
            head_b: Tensor::zeros(&[1]),
            readout: Readout::Final,
            seed: 0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self { readout: self.readout, seed: self.seed, ..Self::zeros(self.input_size(), self.layer1.hidden_size) }
    }

    pub fn input_size(&self) -> usize {
        self.layer1.input_size
    }

    pub fn blocks(&self) -> Vec<(&'static str, &Tensor)> {
        let (l1, l2) = (&self.layer1, &self.layer2);
        BLOCK_NAMES.into_iter().zip([&l1.w, &l1.u, &l1.b, &l2.w, &l2.u, &l2.b, &self.head_w, &self.head_b]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let (l1, l2) = (&mut self.layer1, &mut self.layer2);
        BLOCK_NAMES
            .into_iter()
            .zip([&mut l1.w, &mut l1.u, &mut l1.b, &mut l2.w, &mut l2.u, &mut l2.b, &mut self.head_w, &mut self.head_b])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.layer1.check("layer1")?;
        self.layer2.check("layer2")?;
        if self.layer2.input_size != self.layer1.hidden_size {
            return Err(contract("layer2 input size must equal layer1 hidden size"));
        }
        if self.head_w.shape() != [self.layer2.hidden_size] || self.head_b.shape() != [1] {
            return Err(contract("readout must map layer2 hidden state to one unit"));
        }
        Ok(())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        for (name, t) in self.blocks() {
            if !t.is_finite() {
                return Err(Error::Divergence { block: name.to_string() });
            }
        }
        Ok(())
    }
}

/// One `(sequence, local count)` training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sequence: SpatialSequence,
    pub target: f64,
}

/// Hidden states of both layers for every step, and the readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layer1_hidden: [Vec<f64>; SEQUENCE_LEN],
    pub layer2_hidden: [Vec<f64>; SEQUENCE_LEN],
    pub prediction: f64,
}

/// Batch inputs: one `[batch, input]` matrix per timestep.
pub(crate) type StepInputs = [Vec<f64>; SEQUENCE_LEN];

struct LayerCache {
    x: StepInputs,
    /// `h[t]` is the state entering step `t`; `h[SEQUENCE_LEN]` the last output.
    h: [Vec<f64>; SEQUENCE_LEN + 1],
    c: [Vec<f64>; SEQUENCE_LEN + 1],
    /// Activated gates per step, `[batch, 4H]`.
    gates: [Vec<f64>; SEQUENCE_LEN],
    tanh_c: [Vec<f64>; SEQUENCE_LEN],
}

fn layer_forward(p: &LstmLayerParams, x: StepInputs, batch: usize) -> LayerCache {
    let hs = p.hidden_size;
    let h4 = GATES * hs;
    let zero = vec![0.0; batch * hs];
    let mut h: [Vec<f64>; SEQUENCE_LEN + 1] = std::array::from_fn(|_| zero.clone());
    let mut c: [Vec<f64>; SEQUENCE_LEN + 1] = std::array::from_fn(|_| zero.clone());
    let mut gates: [Vec<f64>; SEQUENCE_LEN] = Default::default();
    let mut tanh_c: [Vec<f64>; SEQUENCE_LEN] = Default::default();
    for t in 0..SEQUENCE_LEN {
        let mut pre: Vec<f64> = p.b.data().iter().copied().cycle().take(batch * h4).collect();
        gemm_acc(&x[t], p.w.data(), &mut pre, batch, p.input_size, h4);
        gemm_acc(&h[t], p.u.data(), &mut pre, batch, hs, h4);
        let mut c_next = vec![0.0; batch * hs];
        let mut tc = vec![0.0; batch * hs];
        let mut h_next = vec![0.0; batch * hs];
        for b in 0..batch {
            let row = &mut pre[b * h4..(b + 1) * h4];
            let (ifo, cand) = row.split_at_mut(3 * hs);
            ifo.iter_mut().for_each(|v| *v = sigmoid(*v));
            cand.iter_mut().for_each(|v| *v = v.tanh());
            for k in 0..hs {
                let idx = b * hs + k;
                let (i, f, o, g) = (ifo[k], ifo[hs + k], ifo[2 * hs + k], cand[k]);
                c_next[idx] = f * c[t][idx] + i * g;
                tc[idx] = c_next[idx].tanh();
                h_next[idx] = o * tc[idx];
            }
        }
        gates[t] = pre;
        tanh_c[t] = tc;
        c[t + 1] = c_next;
        h[t + 1] = h_next;
    }
    LayerCache { x, h, c, gates, tanh_c }
}

/// BPTT through one layer. `dh_out[t]` is the loss gradient w.r.t. the
/// layer's output at step `t` coming from above. Returns input gradients
/// per step when requested.
fn layer_backward(
    p: &LstmLayerParams,
    cache: &LayerCache,
    dh_out: &StepInputs,
    batch: usize,
    grads: &mut LstmLayerParams,
    want_dx: bool,
) -> Option<StepInputs> {
    let hs = p.hidden_size;
    let h4 = GATES * hs;
    let mut dh_next = vec![0.0; batch * hs];
    let mut dc_next = vec![0.0; batch * hs];
    let mut dx: StepInputs = Default::default();
    for t in (0..SEQUENCE_LEN).rev() {
        let gates = &cache.gates[t];
        let mut da = vec![0.0; batch * h4];
        for b in 0..batch {
            let g_row = &gates[b * h4..(b + 1) * h4];
            let da_row = &mut da[b * h4..(b + 1) * h4];
            for k in 0..hs {
                let idx = b * hs + k;
                let (i, f, o, g) = (g_row[k], g_row[hs + k], g_row[2 * hs + k], g_row[3 * hs + k]);
                let tc = cache.tanh_c[t][idx];
                let dh = dh_out[t][idx] + dh_next[idx];
                let d_o = dh * tc;
                let dc = dc_next[idx] + dh * o * (1.0 - tc * tc);
                let di = dc * g;
                let dg = dc * i;
                let df = dc * cache.c[t][idx];
                dc_next[idx] = dc * f;
                da_row[k] = di * i * (1.0 - i);
                da_row[hs + k] = df * f * (1.0 - f);
                da_row[2 * hs + k] = d_o * o * (1.0 - o);
                da_row[3 * hs + k] = dg * (1.0 - g * g);
            }
        }
        gemm_tn_acc(&cache.x[t], &da, grads.w.data_mut(), batch, p.input_size, h4);
        gemm_tn_acc(&cache.h[t], &da, grads.u.data_mut(), batch, hs, h4);
        for row in da.chunks_exact(h4) {
            axpy(1.0, row, grads.b.data_mut());
        }
        dh_next.fill(0.0);
        gemm_nt_acc(&da, p.u.data(), &mut dh_next, batch, hs, h4);
        if want_dx {
            let mut d = vec![0.0; batch * p.input_size];
            gemm_nt_acc(&da, p.w.data(), &mut d, batch, p.input_size, h4);
            dx[t] = d;
        }
    }
    want_dx.then_some(dx)
}

pub(crate) struct BatchForward {
    l1: LayerCache,
    l2: LayerCache,
    pub predictions: Vec<f64>,
}

pub(crate) fn batch_forward(params: &RegressorParams, inputs: StepInputs, batch: usize) -> BatchForward {
    let l1 = layer_forward(&params.layer1, inputs, batch);
    let l2_in: StepInputs = std::array::from_fn(|t| l1.h[t + 1].clone());
    let l2 = layer_forward(&params.layer2, l2_in, batch);
    let read = &l2.h[params.readout.step() + 1];
    let hs = params.layer2.hidden_size;
    let bias = params.head_b.data()[0];
    let predictions = read.chunks_exact(hs).map(|h| dot(h, params.head_w.data()) + bias).collect();
    BatchForward { l1, l2, predictions }
}

/// Gradients of the mean squared error over a batch.
pub struct BatchGradients {
    pub loss: f64,
    pub params: RegressorParams,
    /// Per-step `[batch, input]` gradients w.r.t. the sequence inputs.
    pub inputs: Option<StepInputs>,
}

pub(crate) fn batch_backward(
    params: &RegressorParams,
    inputs: StepInputs,
    targets: &[f64],
    want_input_grads: bool,
) -> Result<BatchGradients> {
    let batch = targets.len();
    let fwd = batch_forward(params, inputs, batch);
    let n = batch as f64;
    let mut loss = 0.0;
    let mut dpred = Vec::with_capacity(batch);
    for (p, z) in fwd.predictions.iter().zip(targets) {
        let e = p - z;
        loss += e * e;
        dpred.push(2.0 * e / n);
    }
    loss /= n;

    let mut grads = params.zeros_like();
    let hs = params.layer2.hidden_size;
    let step = params.readout.step();
    let read = &fwd.l2.h[step + 1];
    let mut dh2: StepInputs = std::array::from_fn(|_| vec![0.0; batch * hs]);
    for (b, &d) in dpred.iter().enumerate() {
        axpy(d, &read[b * hs..(b + 1) * hs], grads.head_w.data_mut());
        axpy(d, params.head_w.data(), &mut dh2[step][b * hs..(b + 1) * hs]);
    }
    grads.head_b.data_mut()[0] = dpred.iter().sum();

    let dh1 = layer_backward(&params.layer2, &fwd.l2, &dh2, batch, &mut grads.layer2, true)
        .expect("layer2 input gradients requested");
    let dx = layer_backward(&params.layer1, &fwd.l1, &dh1, batch, &mut grads.layer1, want_input_grads);
    grads.check_finite()?;
    Ok(BatchGradients { loss, params: grads, inputs: dx })
}

fn stack_sequences<'a>(seqs: impl Iterator<Item = &'a SpatialSequence>, dim: usize) -> Result<StepInputs> {
    let mut steps: StepInputs = Default::default();
    for s in seqs {
        for (t, v) in s.steps.iter().enumerate() {
            if v.len() != dim {
                return Err(contract(format!("sequence step has dimension {}, regressor expects {dim}", v.len())));
            }
            steps[t].extend_from_slice(v);
        }
    }
    Ok(steps)
}

pub fn lstm_forward(seq: &SpatialSequence, params: &RegressorParams) -> Result<ForwardTrace> {
    params.validate()?;
    let inputs = stack_sequences(std::iter::once(seq), params.input_size())?;
    let fwd = batch_forward(params, inputs, 1);
    Ok(ForwardTrace {
        layer1_hidden: std::array::from_fn(|t| fwd.l1.h[t + 1].clone()),
        layer2_hidden: std::array::from_fn(|t| fwd.l2.h[t + 1].clone()),
        prediction: fwd.predictions[0],
    })
}

/// Raw (unclamped) predictions for a list of sequences.
pub fn predict_sequences(seqs: &[SpatialSequence], params: &RegressorParams) -> Result<Vec<f64>> {
    params.validate()?;
    if seqs.is_empty() {
        return Ok(Vec::new());
    }
    let inputs = stack_sequences(seqs.iter(), params.input_size())?;
    Ok(batch_forward(params, inputs, seqs.len()).predictions)
}

/// Mean squared error between predictions and targets.
pub fn loss(batch: &[Sample], params: &RegressorParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(contract("loss needs a nonempty batch"));
    }
    let preds = predict_sequences(&batch.iter().map(|s| s.sequence.clone()).collect::<Vec<_>>(), params)?;
    Ok(preds.iter().zip(batch).map(|(p, s)| (p - s.target).powi(2)).sum::<f64>() / batch.len() as f64)
}

/// Exact gradients of [`loss`] for every parameter block.
pub fn backward(batch: &[Sample], params: &RegressorParams) -> Result<BatchGradients> {
    backward_refs(&batch.iter().collect::<Vec<_>>(), params, false)
}

pub(crate) fn backward_refs(
    batch: &[&Sample],
    params: &RegressorParams,
    want_input_grads: bool,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(contract("backward needs a nonempty batch"));
    }
    params.validate()?;
    let inputs = stack_sequences(batch.iter().map(|s| &s.sequence), params.input_size())?;
    let targets: Vec<f64> = batch.iter().map(|s| s.target).collect();
    batch_backward(params, inputs, &targets, want_input_grads)
}
