//! End-to-end training of the tiny CNN together with the regressor.
//!
//! Features are standardised with statistics fixed before training; the
//! standardisation acts as a constant affine layer between the CNN and the
//! first LSTM layer. Each batch runs the CNN once per distinct patch, then
//! re-runs it patch by patch during the backward pass so no more than one
//! activation cache is alive at a time.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::features::{FeatureStats, TinyCnnParams, STD_FLOOR};
use crate::numerics::kernels::axpy;
use crate::numerics::AdamState;
use crate::spatial::{neighbor_columns, SEQUENCE_LEN};

use super::lstm::{batch_backward, RegressorParams, StepInputs};
use super::train::{EarlyStop, EpochRecord, ParamGroup, RegressorOptimizer, TrainConfig, TrainHistory};

/// Channel-major patches and fractional targets of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageExample {
    pub rows: usize,
    pub cols: usize,
    pub patch_size: usize,
    /// `rows * cols` patches, each `3 x patch_size x patch_size`.
    pub patches: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl ImageExample {
    fn validate(&self) -> Result<()> {
        let cells = self.rows * self.cols;
        if cells == 0 || self.patches.len() != cells || self.targets.len() != cells {
            return Err(contract("image example needs one patch and one target per grid cell"));
        }
        let len = 3 * self.patch_size * self.patch_size;
        if self.patches.iter().any(|p| p.len() != len) {
            return Err(contract("patch buffer does not match the patch size"));
        }
        if self.targets.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(contract("training targets must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// CNN, fixed standardisation and regressor trained as one model.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub cnn: TinyCnnParams,
    pub stats: FeatureStats,
    pub regressor: RegressorParams,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PatchKey {
    image: usize,
    row: usize,
    col: usize,
}

/// Loss and gradients for one batch of `(image, row, col)` cells.
pub struct JointGradients {
    pub loss: f64,
    pub cnn: TinyCnnParams,
    pub regressor: RegressorParams,
}

fn joint_batch(
    model: &JointModel,
    images: &[ImageExample],
    cells: &[(usize, usize, usize)],
    want_cnn: bool,
) -> Result<JointGradients> {
    let dim = model.cnn.dim();
    // Distinct patches in sorted order, each forwarded once.
    let mut slots: BTreeMap<PatchKey, usize> = BTreeMap::new();
    for &(image, row, col) in cells {
        for c in neighbor_columns(col, images[image].cols) {
            let next = slots.len();
            slots.entry(PatchKey { image, row, col: c }).or_insert(next);
        }
    }
    let mut keys = vec![PatchKey { image: 0, row: 0, col: 0 }; slots.len()];
    for (&k, &slot) in &slots {
        keys[slot] = k;
    }
    let features: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| {
            let ex = &images[k.image];
            let mut f = model.cnn.forward(&ex.patches[k.row * ex.cols + k.col], ex.patch_size);
            model.stats.apply_to(&mut f);
            f
        })
        .collect();
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { block: "cnn".into() });
    }

    let mut inputs: StepInputs = Default::default();
    let mut targets = Vec::with_capacity(cells.len());
    let mut cell_slots = Vec::with_capacity(cells.len());
    for &(image, row, col) in cells {
        let ex = &images[image];
        let s = neighbor_columns(col, ex.cols).map(|c| slots[&PatchKey { image, row, col: c }]);
        for (t, &slot) in s.iter().enumerate() {
            inputs[t].extend_from_slice(&features[slot]);
        }
        targets.push(ex.targets[row * ex.cols + col]);
        cell_slots.push(s);
    }

    let grads = batch_backward(&model.regressor, inputs, &targets, want_cnn)?;
    let mut cnn_grads = model.cnn.zeros_like();
    if let Some(dx) = grads.inputs {
        let mut per_patch = vec![vec![0.0; dim]; keys.len()];
        for (b, s) in cell_slots.iter().enumerate() {
            for t in 0..SEQUENCE_LEN {
                axpy(1.0, &dx[t][b * dim..(b + 1) * dim], &mut per_patch[s[t]]);
            }
        }
        for (key, mut g) in keys.iter().zip(per_patch) {
            for (gi, s) in g.iter_mut().zip(&model.stats.std) {
                *gi /= s.max(STD_FLOOR);
            }
            let ex = &images[key.image];
            let patch = &ex.patches[key.row * ex.cols + key.col];
            let cache = model.cnn.forward_cached(patch, ex.patch_size);
            model.cnn.backward(&cache, &g, &mut cnn_grads);
        }
        for (name, t) in cnn_grads.blocks() {
            if !t.is_finite() {
                return Err(Error::Divergence { block: name.to_string() });
            }
        }
    }
    Ok(JointGradients { loss: grads.loss, cnn: cnn_grads, regressor: grads.params })
}

/// Loss and gradients of every CNN and regressor block for one batch of
/// grid cells given as `(image index, row, col)`.
pub fn joint_backward(
    model: &JointModel,
    images: &[ImageExample],
    cells: &[(usize, usize, usize)],
) -> Result<JointGradients> {
    if cells.is_empty() {
        return Err(contract("backward needs a nonempty batch"));
    }
    for &(image, row, col) in cells {
        let ex = images.get(image).ok_or_else(|| contract(format!("no image {image}")))?;
        if row >= ex.rows || col >= ex.cols {
            return Err(contract(format!("cell ({row}, {col}) outside image {image}")));
        }
    }
    joint_batch(model, images, cells, true)
}

/// Trains CNN and regressor together. Groups listed in `config.freeze`
/// (including [`ParamGroup::Extractor`]) are held fixed.
pub fn train_joint(
    images: &[ImageExample],
    config: &TrainConfig,
    init: JointModel,
) -> Result<(JointModel, TrainHistory)> {
    train_joint_monitored(images, config, init, None::<fn(&JointModel) -> Result<f64>>)
}

pub fn train_joint_monitored<V>(
    images: &[ImageExample],
    config: &TrainConfig,
    init: JointModel,
    mut validate: Option<V>,
) -> Result<(JointModel, TrainHistory)>
where
    V: FnMut(&JointModel) -> Result<f64>,
{
    config.validate()?;
    if images.is_empty() {
        return Err(contract("training needs at least one image"));
    }
    for ex in images {
        ex.validate()?;
    }
    init.regressor.validate()?;
    if init.cnn.dim() != init.regressor.input_size() || init.stats.dim() != init.cnn.dim() {
        return Err(contract("cnn, stats and regressor dimensions disagree"));
    }

    let mut cells: Vec<(usize, usize, usize)> = images
        .iter()
        .enumerate()
        .flat_map(|(k, ex)| (0..ex.rows).flat_map(move |i| (0..ex.cols).map(move |j| (k, i, j))))
        .collect();
    let mut model = init;
    let mut reg_opt = RegressorOptimizer::new(&model.regressor, config.adam);
    let mut cnn_opt: Vec<AdamState> =
        model.cnn.blocks().into_iter().map(|(_, t)| AdamState::new(t.shape(), config.adam)).collect();
    let train_cnn = !config.is_frozen(ParamGroup::Extractor);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut history = TrainHistory::default();
    let mut stopper = EarlyStop::new(config.patience);

    for epoch in 0..config.epochs {
        cells.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in cells.chunks(config.batch_size).enumerate() {
            let grads = joint_batch(&model, images, chunk, train_cnn)?;
            if !grads.loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            total += grads.loss * chunk.len() as f64;
            reg_opt.step(&mut model.regressor, &grads.regressor, config)?;
            if train_cnn {
                for ((state, (_, param)), (_, grad)) in
                    cnn_opt.iter_mut().zip(model.cnn.blocks_mut()).zip(grads.cnn.blocks())
                {
                    state.step_in_place(param, grad)?;
                }
            }
        }
        let train_loss = total / cells.len() as f64;
        let val_mae = validate.as_mut().map(|v| v(&model)).transpose()?;
        history.epochs.push(EpochRecord { epoch, train_loss, val_mae });
        if let Some(mae) = val_mae {
            if stopper.observe(mae, &model) {
                break;
            }
        }
    }
    Ok((stopper.into_best().unwrap_or(model), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, DEFAULT_FD_STEP};
    use rand::Rng;

    const SIZE: usize = 24;

    fn toy_images(seed: u64) -> Vec<ImageExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [(1, 3), (2, 2)]
            .into_iter()
            .map(|(rows, cols)| ImageExample {
                rows,
                cols,
                patch_size: SIZE,
                patches: (0..rows * cols)
                    .map(|_| (0..3 * SIZE * SIZE).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect(),
                targets: (0..rows * cols).map(|_| rng.random_range(0.0..3.0)).collect(),
            })
            .collect()
    }

    fn toy_model() -> JointModel {
        let mut stats = FeatureStats::identity(4);
        stats.mean = vec![0.1, -0.2, 0.0, 0.3];
        stats.std = vec![0.5, 2.0, 1.0, 0.7];
        JointModel { cnn: TinyCnnParams::new(4, 1), stats, regressor: RegressorParams::with_hidden(4, 3, 2) }
    }

    #[test]
    fn cnn_gradients_match_finite_differences() {
        let images = toy_images(3);
        let model = toy_model();
        let cells = [(0, 0, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 0, 1)];
        let grads = joint_backward(&model, &images, &cells).unwrap();
        let loss_with = |m: &JointModel| joint_batch(m, &images, &cells, false).unwrap().loss;

        for (idx, (name, value)) in model.cnn.blocks().into_iter().enumerate() {
            if name == "cnn.conv1.w" || name == "cnn.conv2.w" {
                // covered by the per-patch CNN gradient check; keep this one fast
                continue;
            }
            let numeric = finite_diff_grad(
                |t| {
                    let mut m = model.clone();
                    *m.cnn.blocks_mut()[idx].1 = t.clone();
                    loss_with(&m)
                },
                value,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            let analytic = grads.cnn.blocks()[idx].1;
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()) + 1e-6, "{name}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn frozen_extractor_leaves_cnn_untouched() {
        let images = toy_images(4);
        let init = toy_model();
        let config = TrainConfig { epochs: 2, batch_size: 3, ..TrainConfig::default() };
        let (model, history) = train_joint(&images, &config, init.clone()).unwrap();
        assert_eq!(model.cnn, init.cnn);
        assert_ne!(model.regressor, init.regressor);
        assert_eq!(history.epochs.len(), 2);
    }

    #[test]
    fn unfrozen_extractor_learns() {
        let images = toy_images(5);
        let init = toy_model();
        let config = TrainConfig { epochs: 40, batch_size: 7, freeze: Default::default(), ..TrainConfig::default() };
        let (model, history) = train_joint(&images, &config, init.clone()).unwrap();
        assert_ne!(model.cnn, init.cnn);
        assert!(history.last_loss().unwrap() < history.first_loss().unwrap());
    }
}
