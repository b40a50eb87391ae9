//! Run configuration shared by every pipeline command.
//!
//! ```json
//! {
//!   "datasets": [
//!     {"name": "A", "path": "a.jsonl",
//!      "merge_rule": {"positive_labels": ["toxic"], "mode": "any"}}
//!   ],
//!   "seed": 42,
//!   "output_dir": "out",
//!   "embedding_path": "vectors.vec",
//!   "classifier": "builtin_linear",
//!   "ensemble_set": ["LL", "DV", "SV", "MW", "T0.5", "T0.95", "DM"]
//! }
//! ```
//!
//! `classifier` is either `"builtin_linear"` or `"external:<dir>"`, where
//! the directory holds one score file per (classifier, dataset) pair.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::MergeRule;
use crate::ensemble::Strategy;
use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub merge_rule: MergeRule,
    /// Declares that the file carries its own split tags.
    #[serde(default)]
    pub predefined_split: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierConfig {
    BuiltinLinear,
    /// Directory of external score files.
    External(PathBuf),
}

impl<'de> Deserialize<'de> for ClassifierConfig {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = String::deserialize(deserializer)?;
        if raw == "builtin_linear" {
            Ok(ClassifierConfig::BuiltinLinear)
        } else if let Some(path) = raw.strip_prefix("external:") {
            if path.is_empty() {
                Err(serde::de::Error::custom("external classifier needs a path"))
            } else {
                Ok(ClassifierConfig::External(PathBuf::from(path)))
            }
        } else {
            Err(serde::de::Error::custom(format!(
                "classifier must be \"builtin_linear\" or \"external:<path>\", got {raw:?}"
            )))
        }
    }
}

/// Optional t-SNE overrides; anything absent keeps the defaults.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct TsneOverrides {
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunConfig {
    pub datasets: Vec<DatasetConfig>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub embedding_path: Option<PathBuf>,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierConfig,
    #[serde(default = "default_ensemble_set")]
    pub ensemble_set: Vec<Strategy>,
    /// Terms kept per class-corpus for the similarity and t-SNE reports.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub tsne: TsneOverrides,
}

fn default_classifier() -> ClassifierConfig {
    ClassifierConfig::BuiltinLinear
}

fn default_ensemble_set() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_top_k() -> usize {
    30
}

impl RunConfig {
    /// Parses and validates everything that does not touch the filesystem.
    pub fn from_json(json: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(json).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and checks that every referenced path exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config = Self::from_json(&json)?;
        config.check_paths()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig(
                "config needs at least one dataset".into(),
            ));
        }
        let mut names = HashSet::new();
        for ds in &self.datasets {
            if ds.name.is_empty() {
                return Err(Error::InvalidConfig("dataset names must be non-empty".into()));
            }
            if !names.insert(ds.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate dataset name {:?}",
                    ds.name
                )));
            }
        }
        let mut strategies = HashSet::new();
        for s in &self.ensemble_set {
            if !strategies.insert(*s) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate ensemble strategy {s}"
                )));
            }
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<()> {
        let check = |path: &Path, what: &str| {
            if path.exists() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{what} {} does not exist",
                    path.display()
                )))
            }
        };
        for ds in &self.datasets {
            check(&ds.path, "dataset file")?;
        }
        if let Some(embedding) = &self.embedding_path {
            check(embedding, "embedding file")?;
        }
        if let ClassifierConfig::External(dir) = &self.classifier {
            check(dir, "external score directory")?;
        }
        Ok(())
    }
}
