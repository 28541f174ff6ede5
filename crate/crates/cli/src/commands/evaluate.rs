use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dsrm_core::eval::{count_histogram, group_comparison, uniform_edges, EvalPairs};

use super::{metrics, write_csv_file};
use crate::annotations::AnnotationFile;
use crate::error::{CliError, CliResult};
use crate::manifest::SplitSel;
use crate::Common;

/// Reads `path,count[,error]` rows.
pub fn read_predictions(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut rows = Vec::new();
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    for rec in r.records() {
        let rec = rec?;
        let key = rec.get(0).unwrap_or_default().to_string();
        if let Some(err) = rec.get(2).filter(|e| !e.is_empty()) {
            return Err(CliError::input(format!("prediction for {key} failed: {err}")));
        }
        let count: f64 = rec
            .get(1)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| CliError::input(format!("prediction row for {key} has no count")))?;
        rows.push((key, count));
    }
    Ok(rows)
}

/// Writes `metrics.csv`, `groups.csv` and `histogram.csv`.
pub fn run(
    common: &Common,
    predictions: &Path,
    groups: Option<usize>,
    bins: Option<usize>,
    split: SplitSel,
) -> CliResult<()> {
    let cfg = common.run_config()?;
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    let records = manifest.select(split)?;

    let mut by_id: BTreeMap<PathBuf, (String, f64)> = BTreeMap::new();
    for (key, count) in read_predictions(predictions)? {
        if by_id.insert(manifest.identity(&key), (key.clone(), count)).is_some() {
            return Err(CliError::input(format!("duplicate prediction row for {key}")));
        }
    }
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let mut missing = Vec::new();
    for r in &records {
        match by_id.remove(&manifest.identity(&r.image)) {
            Some((_, count)) => {
                truth.push(AnnotationFile::load(&manifest.resolve(&r.annotations))?.points.len() as f64);
                pred.push(count);
            }
            None => missing.push(r.image.clone()),
        }
    }
    if !missing.is_empty() || !by_id.is_empty() {
        let extra: Vec<String> = by_id.into_values().map(|(k, _)| k).collect();
        return Err(CliError::input(format!(
            "predictions do not match the manifest; missing: [{}]; extra: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let pairs = EvalPairs::new(truth, pred)?;
    let m = metrics(&pairs, common.mnae_skip_zero)?;
    let report = group_comparison(&pairs, groups.unwrap_or(cfg.groups))?;
    let edges = uniform_edges(pairs.truth(), bins.unwrap_or(cfg.bins))?;
    let hist = count_histogram(pairs.truth(), &edges)?;
    write_csv_file(&out.join("metrics.csv"), |b| m.write_csv(b))?;
    write_csv_file(&out.join("groups.csv"), |b| report.write_csv(b))?;
    write_csv_file(&out.join("histogram.csv"), |b| hist.write_csv(b))?;
    let mnae = m.mnae.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
    println!("MAE {:.4}  MSE {:.4}  MNAE {mnae}  ({} images)", m.mae, m.mse, pairs.len());
    Ok(())
}
