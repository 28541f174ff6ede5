//! Per-image plumbing shared by the commands: decode, grid, features,
//! fractional targets, training and prediction.

use std::path::PathBuf;

use dsrm_core::eval::{mae, EvalPairs};
use dsrm_core::features::{
    apply_stats, extract_features, fit_stats, load_precomputed, Backend, FeatureMatrix, FeatureStats, TinyCnnParams,
};
use dsrm_core::patch_grid::{build_grid, local_ground_truth, CountMode, HeadAnnotations, LocalCountMatrix, PatchGrid};
use dsrm_core::regressor::{
    predict_features, train_joint_monitored, train_monitored, Checkpoint, ImageExample, JointModel, ParamGroup,
    Prediction, RegressorParams, Sample, TrainConfig, TrainHistory,
};
use dsrm_core::spatial::make_sequences;

use crate::annotations::AnnotationFile;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::image_io::{load_image, LoadedImage};
use crate::manifest::{Manifest, Record};

/// One decoded record with its grid.
#[derive(Clone)]
pub struct Item {
    pub key: String,
    pub image: LoadedImage,
    pub heads: HeadAnnotations,
    pub grid: PatchGrid,
    pub features_path: Option<PathBuf>,
}

impl Item {
    pub fn load(manifest: &Manifest, record: &Record, patch: usize, stride: usize, upscale: bool) -> CliResult<Self> {
        let image = load_image(&manifest.resolve(&record.image), patch, upscale)?;
        let ann = AnnotationFile::load(&manifest.resolve(&record.annotations))?;
        let heads = image.scale_annotations(&ann.heads());
        let grid = build_grid(image.image.height(), image.image.width(), patch, stride)?;
        heads
            .validate(grid.height(), grid.width())
            .map_err(|e| CliError::input(format!("{}: {e}", record.annotations)))?;
        Ok(Self {
            key: record.image.clone(),
            image,
            heads,
            grid,
            features_path: record.features.as_ref().map(|f| manifest.resolve(f)),
        })
    }

    /// An image predicted without annotations (truth is zero).
    pub fn unannotated(path: &std::path::Path, patch: usize, stride: usize, upscale: bool) -> CliResult<Self> {
        let image = load_image(path, patch, upscale)?;
        let grid = build_grid(image.image.height(), image.image.width(), patch, stride)?;
        Ok(Self {
            key: path.to_string_lossy().into_owned(),
            image,
            heads: HeadAnnotations::default(),
            grid,
            features_path: None,
        })
    }

    pub fn truth(&self) -> f64 {
        self.heads.len() as f64
    }

    pub fn targets(&self) -> CliResult<LocalCountMatrix> {
        Ok(local_ground_truth(&self.grid, &self.heads, CountMode::Fractional)?)
    }

    /// Raw (unstandardised) features from the requested backend.
    pub fn features(&self, backend: Backend, cnn: Option<&TinyCnnParams>, dim: usize) -> CliResult<FeatureMatrix> {
        let f = match backend {
            Backend::TinyCnn => {
                let cnn = cnn.ok_or_else(|| CliError::input("tiny_cnn backend without extractor weights"))?;
                extract_features(&self.image.image, &self.grid, cnn)?
            }
            Backend::Precomputed => {
                let path = self
                    .features_path
                    .as_ref()
                    .ok_or_else(|| CliError::input(format!("{}: no precomputed features listed", self.key)))?;
                let f = load_precomputed(path)?;
                if !f.matches_grid(&self.grid) {
                    return Err(CliError::input(format!(
                        "{}: features are {}x{} but the image grid is {}x{}",
                        path.display(),
                        f.rows(),
                        f.cols(),
                        self.grid.rows(),
                        self.grid.cols()
                    )));
                }
                f
            }
        };
        if f.dim() != dim {
            return Err(CliError::input(format!(
                "{}: feature dimension {} does not match the model's {dim}",
                self.key,
                f.dim()
            )));
        }
        Ok(f)
    }

    fn example(&self) -> CliResult<ImageExample> {
        let p = self.grid.patch_size();
        Ok(ImageExample {
            rows: self.grid.rows(),
            cols: self.grid.cols(),
            patch_size: p,
            patches: self.grid.origins().map(|(top, left)| self.image.image.crop_chw(top, left, p)).collect(),
            targets: self.targets()?.values().to_vec(),
        })
    }
}

pub fn load_items(manifest: &Manifest, records: &[&Record], cfg: &RunConfig, upscale: bool) -> CliResult<Vec<Item>> {
    if records.is_empty() {
        return Err(CliError::input("no records to process"));
    }
    records.iter().map(|r| Item::load(manifest, r, cfg.patch_size, cfg.stride, upscale)).collect()
}

/// Sequences of standardised features paired with fractional local counts.
pub fn samples(features: &FeatureMatrix, targets: &LocalCountMatrix) -> CliResult<Vec<Sample>> {
    Ok(make_sequences(features)?
        .into_iter()
        .map(|s| {
            let target = targets.get(s.row, s.col);
            Sample { sequence: s, target }
        })
        .collect())
}

fn count_mae(
    items: &[&Item],
    features: &[FeatureMatrix],
    stats: &FeatureStats,
    params: &RegressorParams,
) -> dsrm_core::Result<f64> {
    let mut truth = Vec::with_capacity(items.len());
    let mut pred = Vec::with_capacity(items.len());
    for (item, f) in items.iter().zip(features) {
        truth.push(item.truth());
        pred.push(predict_features(f, &item.grid, stats, params)?.count);
    }
    mae(&EvalPairs::new(truth, pred)?)
}

/// Fits statistics on the training images, trains, and packages a
/// checkpoint. With `train.val_fraction > 0` the trailing share of images is
/// held out to drive early stopping.
pub fn train_model(items: &[Item], cfg: &RunConfig) -> CliResult<(Checkpoint, TrainHistory)> {
    let n_val = (items.len() as f64 * cfg.val_fraction).round() as usize;
    if n_val >= items.len() {
        return Err(CliError::input("validation split leaves no training images"));
    }
    let (fit, val) = items.split_at(items.len() - n_val);
    let tc: TrainConfig = cfg.train_config();
    let cnn = match cfg.backend {
        Backend::TinyCnn => Some(TinyCnnParams::new(cfg.feature_dim, cfg.cnn_seed())),
        Backend::Precomputed => None,
    };
    let raw: Vec<FeatureMatrix> =
        fit.iter().map(|it| it.features(cfg.backend, cnn.as_ref(), cfg.feature_dim)).collect::<CliResult<_>>()?;
    let stats = fit_stats(&raw)?;
    let mut init = RegressorParams::with_hidden(cfg.feature_dim, cfg.hidden, cfg.regressor_seed());
    init.readout = cfg.readout;
    let val_refs: Vec<&Item> = val.iter().collect();

    let joint = cfg.backend == Backend::TinyCnn && !tc.is_frozen(ParamGroup::Extractor);
    if joint {
        let cnn = cnn.expect("tiny_cnn backend");
        let examples: Vec<ImageExample> = fit.iter().map(Item::example).collect::<CliResult<_>>()?;
        drop(raw);
        let monitor = (!val.is_empty()).then_some(|m: &JointModel| {
            let feats: Vec<FeatureMatrix> = val_refs
                .iter()
                .map(|it| extract_features(&it.image.image, &it.grid, &m.cnn))
                .collect::<dsrm_core::Result<_>>()?;
            count_mae(&val_refs, &feats, &m.stats, &m.regressor)
        });
        let (model, history) =
            train_joint_monitored(&examples, &tc, JointModel { cnn, stats, regressor: init }, monitor)?;
        let mut ckpt = Checkpoint::new(Backend::TinyCnn, model.regressor, model.stats, Some(model.cnn));
        (ckpt.patch_size, ckpt.stride) = (cfg.patch_size, cfg.stride);
        return Ok((ckpt, history));
    }

    let mut dataset = Vec::new();
    for (item, f) in fit.iter().zip(&raw) {
        dataset.extend(samples(&apply_stats(f, &stats)?, &item.targets()?)?);
    }
    drop(raw);
    let val_feats: Vec<FeatureMatrix> =
        val.iter().map(|it| it.features(cfg.backend, cnn.as_ref(), cfg.feature_dim)).collect::<CliResult<_>>()?;
    let monitor = (!val.is_empty()).then_some(|p: &RegressorParams| count_mae(&val_refs, &val_feats, &stats, p));
    let (params, history) = train_monitored(&dataset, &tc, init, monitor)?;
    let mut ckpt = Checkpoint::new(cfg.backend, params, stats, cnn);
    (ckpt.patch_size, ckpt.stride) = (cfg.patch_size, cfg.stride);
    Ok((ckpt, history))
}

/// Runs a checkpoint on one decoded image.
pub fn predict_item(ckpt: &Checkpoint, item: &Item) -> CliResult<Prediction> {
    let features = item.features(ckpt.backend, ckpt.cnn.as_ref(), ckpt.dim())?;
    Ok(predict_features(&features, &item.grid, &ckpt.stats, &ckpt.regressor)?)
}

/// Loads each record at the checkpoint's grid geometry and predicts it.
/// Failures stay per record.
pub fn predict_records(
    manifest: &Manifest,
    records: &[&Record],
    ckpt: &Checkpoint,
    upscale: bool,
) -> Vec<(String, CliResult<(f64, Prediction)>)> {
    records
        .iter()
        .map(|r| {
            let out = Item::load(manifest, r, ckpt.patch_size, ckpt.stride, upscale)
                .and_then(|item| Ok((item.truth(), predict_item(ckpt, &item)?)));
            (r.image.clone(), out)
        })
        .collect()
}

/// Ground truth and predicted counts for records that must all succeed.
pub fn count_pairs(manifest: &Manifest, records: &[&Record], ckpt: &Checkpoint, upscale: bool) -> CliResult<EvalPairs> {
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (key, out) in predict_records(manifest, records, ckpt, upscale) {
        let (t, p) = out.map_err(|e| CliError::input(format!("{key}: {e}")))?;
        truth.push(t);
        pred.push(p.count);
    }
    Ok(EvalPairs::new(truth, pred)?)
}

/// Local-count training samples for `items` under a fixed checkpoint's
/// extractor and statistics.
pub fn checkpoint_samples(ckpt: &Checkpoint, items: &[Item]) -> CliResult<Vec<Sample>> {
    let mut out = Vec::new();
    for item in items {
        let f = item.features(ckpt.backend, ckpt.cnn.as_ref(), ckpt.dim())?;
        out.extend(samples(&apply_stats(&f, &ckpt.stats)?, &item.targets()?)?);
    }
    Ok(out)
}
