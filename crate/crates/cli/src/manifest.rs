//! Dataset manifests.
//!
//! ```json
//! {"name": "synth", "records": [{"image": "images/0000.png", "annotations": "annotations/0000.json"}],
//!  "train": ["images/0000.png"], "test": []}
//! ```
//!
//! Relative paths resolve against the manifest's directory. Split lists name
//! records by their `image` entry.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub image: String,
    pub annotations: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    #[serde(default)]
    pub name: String,
    pub records: Vec<Record>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Vec<String>>,
}

/// Which records a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitSel {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub file: ManifestFile,
    pub dir: PathBuf,
}

impl Manifest {
    pub fn new(file: ManifestFile, dir: impl Into<PathBuf>) -> CliResult<Self> {
        let m = Self { file, dir: dir.into() };
        m.check()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read manifest {}: {e}", path.display())))?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::new(file, dir)?;
        for r in &m.file.records {
            for p in [Some(&r.image), Some(&r.annotations), r.features.as_ref()].into_iter().flatten() {
                if !m.resolve(p).exists() {
                    return Err(CliError::input(format!("manifest entry `{p}` does not exist")));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.file)? + "\n")?;
        Ok(())
    }

    fn check(&self) -> CliResult<()> {
        let mut images = BTreeSet::new();
        for r in &self.file.records {
            if !images.insert(r.image.as_str()) {
                return Err(CliError::input(format!("image `{}` listed twice", r.image)));
            }
        }
        match (&self.file.train, &self.file.test) {
            (None, None) => Ok(()),
            (Some(train), Some(test)) => {
                let tr: BTreeSet<&str> = train.iter().map(String::as_str).collect();
                let te: BTreeSet<&str> = test.iter().map(String::as_str).collect();
                if tr.len() != train.len() || te.len() != test.len() || !tr.is_disjoint(&te) {
                    return Err(CliError::input("train and test lists must be disjoint and free of repeats"));
                }
                if tr.union(&te).copied().collect::<BTreeSet<_>>() != images {
                    return Err(CliError::input("train and test lists must together cover every record"));
                }
                Ok(())
            }
            _ => Err(CliError::input("give both train and test lists or neither")),
        }
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.dir.join(path)
        }
    }

    /// Records of a split, in manifest order. Without split lists, `train`
    /// and `all` both mean every record and `test` is an error.
    pub fn select(&self, split: SplitSel) -> CliResult<Vec<&Record>> {
        let names: Option<BTreeSet<&str>> = match split {
            SplitSel::All => None,
            SplitSel::Train => self.file.train.as_ref().map(|l| l.iter().map(String::as_str).collect()),
            SplitSel::Test => Some(
                self.file
                    .test
                    .as_ref()
                    .ok_or_else(|| CliError::input("manifest has no test split"))?
                    .iter()
                    .map(String::as_str)
                    .collect(),
            ),
        };
        Ok(self.file.records.iter().filter(|r| names.as_ref().is_none_or(|n| n.contains(r.image.as_str()))).collect())
    }

    /// Stable identity of an image path for matching prediction rows.
    pub fn identity(&self, p: &str) -> PathBuf {
        let path = self.resolve(p);
        std::fs::canonicalize(&path).unwrap_or(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize) -> Record {
        Record { image: format!("{k}.png"), annotations: format!("{k}.json"), features: None }
    }

    fn file(train: Option<Vec<&str>>, test: Option<Vec<&str>>) -> ManifestFile {
        let own = |l: Option<Vec<&str>>| l.map(|v| v.into_iter().map(String::from).collect());
        ManifestFile { name: "t".into(), records: (0..3).map(rec).collect(), train: own(train), test: own(test) }
    }

    #[test]
    fn split_invariants() {
        assert!(Manifest::new(file(None, None), ".").is_ok());
        let m = Manifest::new(file(Some(vec!["0.png", "2.png"]), Some(vec!["1.png"])), ".").unwrap();
        let test: Vec<_> = m.select(SplitSel::Test).unwrap().iter().map(|r| r.image.clone()).collect();
        assert_eq!(test, vec!["1.png"]);
        assert_eq!(m.select(SplitSel::Train).unwrap().len(), 2);
        assert!(Manifest::new(file(Some(vec!["0.png", "1.png"]), Some(vec!["1.png", "2.png"])), ".").is_err());
        assert!(Manifest::new(file(Some(vec!["0.png"]), Some(vec!["1.png"])), ".").is_err());
        assert!(Manifest::new(file(Some(vec!["0.png"]), None), ".").is_err());
    }

    #[test]
    fn no_split_lists() {
        let m = Manifest::new(file(None, None), "data").unwrap();
        assert_eq!(m.select(SplitSel::Train).unwrap().len(), 3);
        assert!(m.select(SplitSel::Test).is_err());
        assert_eq!(m.resolve("a.png"), Path::new("data/a.png"));
        assert_eq!(m.resolve("/abs/a.png"), Path::new("/abs/a.png"));
    }

    #[test]
    fn json_shape() {
        let m: ManifestFile = serde_json::from_str(r#"{"records": [{"image": "a", "annotations": "b"}]}"#).unwrap();
        assert_eq!(m.records[0].features, None);
        assert!(serde_json::from_str::<ManifestFile>(r#"{"records": [], "bogus": 1}"#).is_err());
    }
}
