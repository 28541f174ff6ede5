use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::numerics::{AdamConfig, AdamState};

use super::lstm::{backward_refs, RegressorParams, Sample};

/// Independently freezable parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    Extractor,
    Layer1,
    Layer2,
    Head,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Extractor, ParamGroup::Layer1, ParamGroup::Layer2, ParamGroup::Head];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Extractor => "extractor",
            ParamGroup::Layer1 => "layer1",
            ParamGroup::Layer2 => "layer2",
            ParamGroup::Head => "head",
        }
    }

    /// Group owning a regressor block name such as `layer2.u`.
    pub fn of_block(name: &str) -> ParamGroup {
        match name.split('.').next() {
            Some("layer1") => ParamGroup::Layer1,
            Some("layer2") => ParamGroup::Layer2,
            Some("head") => ParamGroup::Head,
            _ => ParamGroup::Extractor,
        }
    }
}

impl std::str::FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown parameter group `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub shuffle_seed: u64,
    pub freeze: BTreeSet<ParamGroup>,
    /// Epochs without validation improvement before stopping. Only used when
    /// a validation monitor is supplied.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 50,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
            freeze: BTreeSet::from([ParamGroup::Extractor]),
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(contract("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(contract("epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.freeze.contains(&group)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// One Adam state per regressor block, in block order.
pub(crate) struct RegressorOptimizer {
    states: Vec<AdamState>,
}

impl RegressorOptimizer {
    pub(crate) fn new(params: &RegressorParams, adam: AdamConfig) -> Self {
        Self { states: params.blocks().into_iter().map(|(_, t)| AdamState::new(t.shape(), adam)).collect() }
    }

    pub(crate) fn step(
        &mut self,
        params: &mut RegressorParams,
        grads: &RegressorParams,
        config: &TrainConfig,
    ) -> Result<()> {
        let grads = grads.blocks();
        for ((state, (name, param)), (_, grad)) in self.states.iter_mut().zip(params.blocks_mut()).zip(grads) {
            if !config.is_frozen(ParamGroup::of_block(name)) {
                state.step_in_place(param, grad)?;
            }
        }
        Ok(())
    }
}

/// Tracks the best validation score and decides when to stop.
pub(crate) struct EarlyStop<T> {
    patience: usize,
    best: Option<(f64, T)>,
    stale: usize,
}

impl<T: Clone> EarlyStop<T> {
    pub(crate) fn new(patience: usize) -> Self {
        Self { patience, best: None, stale: 0 }
    }

    /// Returns true when training should stop.
    pub(crate) fn observe(&mut self, score: f64, snapshot: &T) -> bool {
        match &self.best {
            Some((best, _)) if score >= *best => self.stale += 1,
            _ => {
                self.best = Some((score, snapshot.clone()));
                self.stale = 0;
            }
        }
        self.patience > 0 && self.stale >= self.patience
    }

    pub(crate) fn into_best(self) -> Option<T> {
        self.best.map(|(_, t)| t)
    }
}

/// Mini-batch Adam on the mean squared local-count error.
pub fn train(
    dataset: &[Sample],
    config: &TrainConfig,
    init: RegressorParams,
) -> Result<(RegressorParams, TrainHistory)> {
    train_monitored(dataset, config, init, None::<fn(&RegressorParams) -> Result<f64>>)
}

/// As [`train`], with an optional validation monitor returning an MAE after
/// every epoch. When present, training stops after `config.patience` epochs
/// without improvement and the best-scoring parameters are returned.
pub fn train_monitored<V>(
    dataset: &[Sample],
    config: &TrainConfig,
    init: RegressorParams,
    mut validate: Option<V>,
) -> Result<(RegressorParams, TrainHistory)>
where
    V: FnMut(&RegressorParams) -> Result<f64>,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(contract("training needs at least one sample"));
    }
    if let Some(bad) = dataset.iter().find(|s| !s.target.is_finite() || s.target < 0.0) {
        return Err(contract(format!("training targets must be finite and nonnegative, got {}", bad.target)));
    }
    init.validate()?;

    let mut params = init;
    let mut optimizer = RegressorOptimizer::new(&params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = TrainHistory::default();
    let mut stopper = EarlyStop::new(config.patience);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &dataset[k]).collect();
            let grads = backward_refs(&batch, &params, false)?;
            if !grads.loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            total += grads.loss * batch.len() as f64;
            optimizer.step(&mut params, &grads.params, config)?;
        }
        let train_loss = total / dataset.len() as f64;
        let val_mae = validate.as_mut().map(|v| v(&params)).transpose()?;
        log::debug!("epoch {epoch}: loss {train_loss:.6}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_mae });
        if let Some(mae) = val_mae {
            if stopper.observe(mae, &params) {
                break;
            }
        }
    }
    let params = stopper.into_best().unwrap_or(params);
    Ok((params, history))
}

/// Continues training source-domain parameters on target-domain samples.
/// The default [`TrainConfig`] freezes only the extractor, so all three
/// regressor layers adapt.
pub fn finetune(
    params: RegressorParams,
    target: &[Sample],
    config: &TrainConfig,
) -> Result<(RegressorParams, TrainHistory)> {
    train(target, config, params)
}
