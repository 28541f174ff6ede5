use dsrm_core::eval::{kfold_split, EvalPairs};

use super::metrics;
use crate::error::CliResult;
use crate::manifest::SplitSel;
use crate::pipeline::{load_items, predict_item, train_model};
use crate::Common;

/// Trains on `k - 1` folds and scores the held-out fold, `k` times. Writes
/// `kfold.csv` with one row per fold and a `mean` row.
pub fn run(common: &Common, k: usize) -> CliResult<()> {
    let cfg = common.run_config()?;
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    let records = manifest.select(SplitSel::All)?;
    let folds = kfold_split(records.len(), k, cfg.seed)?;
    let items = load_items(&manifest, &records, &cfg, common.upscale_small)?;

    let mut w = csv::Writer::from_path(out.join("kfold.csv"))?;
    w.write_record(["fold", "n_test", "mae", "mse", "mnae"])?;
    let mut sums = [0.0; 3];
    let mut all_mnae = true;
    for (f, held) in folds.iter().enumerate() {
        let train_items: Vec<_> = (0..items.len()).filter(|i| !held.contains(i)).collect();
        let subset: Vec<_> = train_items.iter().map(|&i| items[i].clone()).collect();
        let (ckpt, _) = train_model(&subset, &cfg)?;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for &i in held {
            truth.push(items[i].truth());
            pred.push(predict_item(&ckpt, &items[i])?.count);
        }
        let m = metrics(&EvalPairs::new(truth, pred)?, common.mnae_skip_zero)?;
        sums[0] += m.mae;
        sums[1] += m.mse;
        match m.mnae {
            Some(v) => sums[2] += v,
            None => all_mnae = false,
        }
        let mnae = m.mnae.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([f.to_string(), held.len().to_string(), m.mae.to_string(), m.mse.to_string(), mnae])?;
        println!("fold {f}: MAE {:.4}  MSE {:.4}", m.mae, m.mse);
    }
    let kf = k as f64;
    let mean_mnae = if all_mnae { (sums[2] / kf).to_string() } else { String::new() };
    w.write_record([
        "mean".to_string(),
        records.len().to_string(),
        (sums[0] / kf).to_string(),
        (sums[1] / kf).to_string(),
        mean_mnae,
    ])?;
    w.flush()?;
    println!("mean: MAE {:.4}  MSE {:.4}", sums[0] / kf, sums[1] / kf);
    Ok(())
}
