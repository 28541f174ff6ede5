//! Flat `key = value` run configuration.
//!
//! Every key has a default; unknown or repeated keys are rejected. The
//! canonical form lists every key in sorted order, one per line, and parses
//! back to the same configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dsrm_core::features::{Backend, DEFAULT_FEATURE_DIM};
use dsrm_core::numerics::AdamConfig;
use dsrm_core::patch_grid::{DEFAULT_PATCH_SIZE, DEFAULT_STRIDE};
use dsrm_core::regressor::{ParamGroup, Readout, TrainConfig, DEFAULT_HIDDEN};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub patch_size: usize,
    pub stride: usize,
    pub backend: Backend,
    pub feature_dim: usize,
    pub hidden: usize,
    pub readout: Readout,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub freeze: BTreeSet<ParamGroup>,
    pub patience: usize,
    pub val_fraction: f64,
    pub groups: usize,
    pub bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            backend: Backend::TinyCnn,
            feature_dim: DEFAULT_FEATURE_DIM,
            hidden: DEFAULT_HIDDEN,
            readout: Readout::Final,
            batch_size: train.batch_size,
            epochs: train.epochs,
            lr: train.adam.lr,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            eps: train.adam.eps,
            freeze: train.freeze,
            patience: train.patience,
            val_fraction: 0.0,
            groups: 10,
            bins: 10,
        }
    }
}

const KEYS: [&str; 18] = [
    "eval.bins",
    "eval.groups",
    "features.backend",
    "features.dim",
    "grid.patch_size",
    "grid.stride",
    "regressor.hidden",
    "regressor.readout",
    "seed",
    "train.batch_size",
    "train.beta1",
    "train.beta2",
    "train.epochs",
    "train.eps",
    "train.freeze",
    "train.lr",
    "train.patience",
    "train.val_fraction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| CliError::input(format!("config key `{key}`: cannot parse `{value}`")))
}

fn readout_name(r: Readout) -> &'static str {
    match r {
        Readout::Final => "final",
        Readout::Center => "center",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("config line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::input(format!("config key `{key}` given twice")));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "grid.patch_size" => self.patch_size = parse(key, value)?,
            "grid.stride" => self.stride = parse(key, value)?,
            "features.backend" => self.backend = parse(key, value)?,
            "features.dim" => self.feature_dim = parse(key, value)?,
            "regressor.hidden" => self.hidden = parse(key, value)?,
            "regressor.readout" => {
                self.readout = match value {
                    "final" => Readout::Final,
                    "center" => Readout::Center,
                    _ => return Err(CliError::input(format!("config key `{key}`: expected final or center"))),
                }
            }
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.beta1" => self.beta1 = parse(key, value)?,
            "train.beta2" => self.beta2 = parse(key, value)?,
            "train.eps" => self.eps = parse(key, value)?,
            "train.freeze" => {
                self.freeze = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse::<ParamGroup>(key, s))
                    .collect::<CliResult<_>>()?
            }
            "train.patience" => self.patience = parse(key, value)?,
            "train.val_fraction" => self.val_fraction = parse(key, value)?,
            "eval.groups" => self.groups = parse(key, value)?,
            "eval.bins" => self.bins = parse(key, value)?,
            _ => return Err(CliError::input(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(CliError::input("train.val_fraction must lie in [0, 1)"));
        }
        if self.groups == 0 || self.bins == 0 {
            return Err(CliError::input("eval.groups and eval.bins must be positive"));
        }
        if self.feature_dim == 0 || self.hidden == 0 {
            return Err(CliError::input("features.dim and regressor.hidden must be positive"));
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam: AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
            shuffle_seed: self.seed.wrapping_add(2),
            freeze: self.freeze.clone(),
            patience: self.patience,
        }
    }

    pub fn cnn_seed(&self) -> u64 {
        self.seed
    }

    pub fn regressor_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    fn value(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "grid.patch_size" => self.patch_size.to_string(),
            "grid.stride" => self.stride.to_string(),
            "features.backend" => self.backend.to_string(),
            "features.dim" => self.feature_dim.to_string(),
            "regressor.hidden" => self.hidden.to_string(),
            "regressor.readout" => readout_name(self.readout).to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.epochs" => self.epochs.to_string(),
            "train.lr" => self.lr.to_string(),
            "train.beta1" => self.beta1.to_string(),
            "train.beta2" => self.beta2.to_string(),
            "train.eps" => self.eps.to_string(),
            "train.freeze" => self.freeze.iter().map(|g| g.as_str()).collect::<Vec<_>>().join(","),
            "train.patience" => self.patience.to_string(),
            "train.val_fraction" => self.val_fraction.to_string(),
            "eval.groups" => self.groups.to_string(),
            "eval.bins" => self.bins.to_string(),
            _ => unreachable!("unlisted key {key}"),
        }
    }

    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value(key)).expect("string write");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = RunConfig::default().to_canonical();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, RunConfig::default());
        assert_eq!(back.to_canonical(), text);
        assert!(text.contains("train.freeze = extractor\n"));
    }

    #[test]
    fn keys_are_sorted() {
        let mut sorted = KEYS;
        sorted.sort();
        assert_eq!(sorted, KEYS);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse("# tiny run\n train.epochs = 3\n\ntrain.lr=0.01\ntrain.freeze =\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.lr, 0.01);
        assert!(cfg.freeze.is_empty());
        assert_eq!(RunConfig::parse(&cfg.to_canonical()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "train.epoch = 3",
            "train.epochs = three",
            "train.epochs = 0",
            "seed = 1\nseed = 2",
            "no equals sign",
            "train.freeze = everything",
            "regressor.readout = middle",
            "train.val_fraction = 1",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Input(_))), "{text}");
        }
    }
}
