use std::path::Path;

use dsrm_core::regressor::{Checkpoint, Prediction};

use crate::error::{CliError, CliResult};
use crate::image_io::write_density_pgm;
use crate::manifest::SplitSel;
use crate::pipeline::{predict_item, predict_records, Item};
use crate::Common;

/// Writes `predictions.csv` (`path,count,error`) and, with `density`,
/// `density/NNNN.pgm` plus `density/NNNN.mass` sidecars. A failing image gets
/// an error row and the rest are still processed.
pub fn run(common: &Common, checkpoint: &Path, image: Option<&Path>, density: bool, split: SplitSel) -> CliResult<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .map_err(|e| CliError::input(format!("cannot load checkpoint {}: {e}", checkpoint.display())))?;
    let out = common.out_dir()?;
    let results = match (image, &common.manifest) {
        (Some(img), None) => {
            let res = Item::unannotated(img, ckpt.patch_size, ckpt.stride, common.upscale_small)
                .and_then(|item| Ok((0.0, predict_item(&ckpt, &item)?)));
            vec![(img.to_string_lossy().into_owned(), res)]
        }
        (None, Some(_)) => {
            let manifest = common.manifest()?;
            predict_records(&manifest, &manifest.select(split)?, &ckpt, common.upscale_small)
        }
        _ => return Err(CliError::input("give exactly one of --manifest or --image")),
    };
    if density {
        std::fs::create_dir_all(out.join("density"))?;
    }

    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    w.write_record(["path", "count", "error"])?;
    let mut failed = 0;
    for (k, (key, res)) in results.iter().enumerate() {
        match res {
            Ok((_, pred)) => {
                w.write_record([key.as_str(), &pred.count.to_string(), ""])?;
                if density {
                    write_density(pred, &out.join("density"), k)?;
                }
            }
            Err(e) => {
                failed += 1;
                log::error!("{key}: {e}");
                w.write_record([key.as_str(), "", &e.to_string()])?;
            }
        }
    }
    w.flush()?;
    println!("predicted {} of {} images", results.len() - failed, results.len());
    Ok(())
}

fn write_density(pred: &Prediction, dir: &Path, k: usize) -> CliResult<()> {
    let sidecar = write_density_pgm(&pred.density, &dir.join(format!("{k:04}.pgm")))?;
    std::fs::write(dir.join(format!("{k:04}.mass")), sidecar)?;
    Ok(())
}
