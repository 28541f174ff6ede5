use std::path::Path;

use dsrm_core::eval::MetricSet;
use dsrm_core::regressor::{finetune, loss, Checkpoint, ParamGroup};

use super::metrics;
use super::train::write_history;
use crate::error::{CliError, CliResult};
use crate::manifest::SplitSel;
use crate::pipeline::{checkpoint_samples, count_pairs, load_items};
use crate::Common;

/// Fine-tunes the regressor on the target train split and compares target
/// test metrics before and after. Writes `model.dsrm`, `history.csv` and
/// `finetune.csv` (`metric,zero_shot,finetuned,delta`).
pub fn run(common: &Common, checkpoint: &Path) -> CliResult<()> {
    let cfg = common.run_config()?;
    let source = Checkpoint::load(checkpoint)
        .map_err(|e| CliError::input(format!("cannot load checkpoint {}: {e}", checkpoint.display())))?;
    let tc = cfg.train_config();
    if !tc.is_frozen(ParamGroup::Extractor) {
        return Err(CliError::input("fine-tuning adapts the regressor only; keep `extractor` in train.freeze"));
    }
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    let (tune, eval) = if manifest.file.test.is_some() {
        (manifest.select(SplitSel::Train)?, manifest.select(SplitSel::Test)?)
    } else {
        (manifest.select(SplitSel::All)?, manifest.select(SplitSel::All)?)
    };

    let mut geo = cfg.clone();
    (geo.patch_size, geo.stride) = (source.patch_size, source.stride);
    let items = load_items(&manifest, &tune, &geo, common.upscale_small)?;
    let samples = checkpoint_samples(&source, &items)?;
    let before = metrics(&count_pairs(&manifest, &eval, &source, common.upscale_small)?, common.mnae_skip_zero)?;
    let loss_before = loss(&samples, &source.regressor)?;

    let (params, history) = finetune(source.regressor.clone(), &samples, &tc)?;
    let loss_after = loss(&samples, &params)?;
    let tuned = Checkpoint { regressor: params, ..source };
    let after = metrics(&count_pairs(&manifest, &eval, &tuned, common.upscale_small)?, common.mnae_skip_zero)?;

    tuned.save(out.join("model.dsrm"))?;
    write_history(&history, &out.join("history.csv"))?;
    write_report(&out.join("finetune.csv"), &before, &after, (loss_before, loss_after))?;
    println!(
        "target MAE {:.4} -> {:.4} ({:+.4}); train loss {loss_before:.4} -> {loss_after:.4}",
        before.mae,
        after.mae,
        after.mae - before.mae
    );
    Ok(())
}

fn write_report(path: &Path, before: &MetricSet, after: &MetricSet, train_loss: (f64, f64)) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "zero_shot", "finetuned", "delta"])?;
    let mut row =
        |name: &str, a: f64, b: f64| w.write_record([name, &a.to_string(), &b.to_string(), &(b - a).to_string()]);
    row("MAE", before.mae, after.mae)?;
    row("MSE", before.mse, after.mse)?;
    if let (Some(a), Some(b)) = (before.mnae, after.mnae) {
        row("MNAE", a, b)?;
    }
    row("train_loss", train_loss.0, train_loss.1)?;
    w.flush()?;
    Ok(())
}
