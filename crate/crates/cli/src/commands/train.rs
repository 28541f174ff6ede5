use dsrm_core::regressor::TrainHistory;

use crate::error::CliResult;
use crate::manifest::SplitSel;
use crate::pipeline::{load_items, train_model};
use crate::Common;

pub fn run(common: &Common) -> CliResult<()> {
    let cfg = common.run_config()?;
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    let records = manifest.select(SplitSel::Train)?;
    let items = load_items(&manifest, &records, &cfg, common.upscale_small)?;
    let (ckpt, history) = train_model(&items, &cfg)?;
    ckpt.save(out.join("model.dsrm"))?;
    write_history(&history, &out.join("history.csv"))?;
    std::fs::write(out.join("config.txt"), cfg.to_canonical())?;
    if let (Some(first), Some(last)) = (history.first_loss(), history.last_loss()) {
        println!("trained on {} images, {} epochs: loss {first:.4} -> {last:.4}", items.len(), history.epochs.len());
    }
    Ok(())
}

pub(crate) fn write_history(history: &TrainHistory, path: &std::path::Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_mae"])?;
    for e in &history.epochs {
        w.write_record([
            (e.epoch + 1).to_string(),
            e.train_loss.to_string(),
            e.val_mae.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
