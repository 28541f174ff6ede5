use dsrm_core::eval::{count_histogram, dataset_stats, uniform_edges, Split};

use super::write_csv_file;
use crate::annotations::AnnotationFile;
use crate::error::CliResult;
use crate::Common;

/// Writes `stats.csv` and `histogram.csv` for every record of the manifest.
pub fn run(common: &Common, bins: Option<usize>) -> CliResult<()> {
    let cfg = common.run_config()?;
    let manifest = common.manifest()?;
    let out = common.out_dir()?;
    let mut counts = Vec::new();
    let mut sizes = Vec::new();
    for r in &manifest.file.records {
        counts.push(AnnotationFile::load(&manifest.resolve(&r.annotations))?.points.len() as f64);
        let (w, h) = image::image_dimensions(manifest.resolve(&r.image))?;
        sizes.push((w as usize, h as usize));
    }
    let split = match (&manifest.file.train, &manifest.file.test) {
        (Some(tr), Some(te)) => Split::Fixed { train: tr.len(), test: te.len() },
        _ => Split::None,
    };
    let s = dataset_stats(&counts, split, &sizes)?;
    let hist = count_histogram(&counts, &uniform_edges(&counts, bins.unwrap_or(cfg.bins))?)?;
    write_csv_file(&out.join("stats.csv"), |b| s.write_csv(b))?;
    write_csv_file(&out.join("histogram.csv"), |b| hist.write_csv(b))?;
    println!(
        "{} images, counts {}..{} (average {}), {} people, resolution {}",
        s.images,
        s.min,
        s.max,
        s.average_display(),
        s.total_people,
        s.resolution
    );
    Ok(())
}
