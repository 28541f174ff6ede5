use dsrm_core::features::{save_features, Backend, TinyCnnParams};

use crate::error::{CliError, CliResult};
use crate::manifest::{Manifest, ManifestFile, Record};
use crate::pipeline::Item;
use crate::Common;

/// Runs the tiny CNN over every record and writes `features/NNNN.dsrf` plus
/// a manifest (with absolute image paths) next to them.
pub fn run(common: &Common) -> CliResult<()> {
    let cfg = common.run_config()?;
    if cfg.backend != Backend::TinyCnn {
        return Err(CliError::input("extract computes tiny_cnn features; precomputed files come from elsewhere"));
    }
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    std::fs::create_dir_all(out.join("features"))?;
    let cnn = TinyCnnParams::new(cfg.feature_dim, cfg.cnn_seed());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in manifest.file.records.iter().enumerate() {
        let rel = format!("features/{k:04}.dsrf");
        let done = Item::load(&manifest, r, cfg.patch_size, cfg.stride, common.upscale_small)
            .and_then(|item| item.features(Backend::TinyCnn, Some(&cnn), cfg.feature_dim))
            .and_then(|f| Ok(save_features(out.join(&rel), &f)?));
        match done {
            Ok(()) => records.push(Record {
                image: absolute(&manifest, &r.image),
                annotations: absolute(&manifest, &r.annotations),
                features: Some(rel),
            }),
            Err(e) => {
                log::error!("{}: {e}", r.image);
                failures.push(r.image.clone());
            }
        }
    }
    let rename = |list: &Option<Vec<String>>| {
        list.as_ref()
            .map(|l| l.iter().filter(|p| !failures.contains(p)).map(|p| absolute(&manifest, p)).collect::<Vec<_>>())
    };
    let file = ManifestFile {
        name: manifest.file.name.clone(),
        train: rename(&manifest.file.train),
        test: rename(&manifest.file.test),
        records,
    };
    Manifest::new(file, out)?.save(&out.join("manifest.json"))?;
    println!("extracted {} of {} images", manifest.file.records.len() - failures.len(), manifest.file.records.len());
    if !failures.is_empty() {
        return Err(CliError::input(format!("{} image(s) failed: {}", failures.len(), failures.join(", "))));
    }
    Ok(())
}

fn absolute(manifest: &Manifest, p: &str) -> String {
    manifest.identity(p).to_string_lossy().into_owned()
}
