//! Head-annotation JSON: `{"image": "<path>", "points": [[x, y], ...]}`
//! with `x` the column and `y` the row, in pixels.

use std::path::Path;

use dsrm_core::patch_grid::{HeadAnnotations, Point};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub image: String,
    pub points: Vec<[f64; 2]>,
}

impl AnnotationFile {
    pub fn from_heads(image: impl Into<String>, heads: &HeadAnnotations) -> Self {
        Self { image: image.into(), points: heads.points.iter().map(|p| [p.x, p.y]).collect() }
    }

    pub fn heads(&self) -> HeadAnnotations {
        HeadAnnotations::new(self.points.iter().map(|&[x, y]| Point::new(x, y)).collect())
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let ann: Self = serde_json::from_str(text)?;
        if ann.points.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::input("annotation coordinates must be finite and nonnegative"));
        }
        Ok(ann)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read annotations {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
