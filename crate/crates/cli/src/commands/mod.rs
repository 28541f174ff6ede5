pub mod evaluate;
pub mod extract;
pub mod finetune;
pub mod kfold;
pub mod predict;
pub mod stats;
pub mod synth_cmd;
pub mod train;

use std::path::Path;

use dsrm_core::eval::{mae, mnae, mse, EvalPairs, MetricSet};
use dsrm_core::Error;

use crate::error::CliResult;

/// MAE, MSE and MNAE with the zero-count policy applied: a hard error by
/// default, or zero-count images dropped from MNAE with a warning.
pub(crate) fn metrics(pairs: &EvalPairs, skip_zero: bool) -> CliResult<MetricSet> {
    let mnae = if skip_zero {
        let (kept, dropped) = pairs.without_zero_truth();
        if dropped > 0 {
            log::warn!("MNAE excludes {dropped} image(s) with a ground-truth count of 0");
        }
        match mnae(&kept) {
            Ok(v) => Some(v),
            Err(Error::Contract(_)) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        Some(mnae(pairs)?)
    };
    Ok(MetricSet { mae: mae(pairs)?, mse: mse(pairs)?, mnae })
}

pub(crate) fn write_csv_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> dsrm_core::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
