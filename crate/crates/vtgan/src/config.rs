//! Experiment configuration: TOML (or JSON by extension), with relative
//! paths resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vtgan_core::data::{ColumnAssignment, TableSchema};
use vtgan_core::protocol::{PartitionConfig, TrainingConfig};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub csv: PathBuf,
    pub schema: PathBuf,
    /// Column names held by each client, in client order.
    pub assignment: Vec<Vec<String>>,
    /// Held-out rows for ML utility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    /// Overrides the schema's target column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSection {
    /// Passes over the data; when set, replaces `rounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(flatten)]
    pub base: TrainingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub transport: TransportKind,
    pub output_dir: PathBuf,
    /// Rounds between checkpoints; the final round is always saved.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn default_checkpoint_every() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.csv);
        fix(&mut self.data.schema);
        if let Some(p) = &mut self.data.test_csv {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn assignment(&self) -> ColumnAssignment {
        ColumnAssignment::new(self.data.assignment.clone())
    }

    /// Checks and loads the schema. Errors name the offending field.
    pub fn validate(&self) -> Result<TableSchema> {
        for (field, p) in [("data.csv", Some(&self.data.csv)), ("data.schema", Some(&self.data.schema)), ("data.test_csv", self.data.test_csv.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Config(format!("{field}: {} does not exist", p.display())));
                }
            }
        }
        let schema = io::read_schema(&self.data.schema)?;
        self.assignment()
            .validate(&schema)
            .map_err(|e| Error::Config(format!("data.assignment: {e}")))?;
        if let Some(t) = &self.data.target {
            if schema.column(t).is_none() {
                return Err(Error::Config(format!("data.target: no column {t:?} in the schema")));
            }
        }
        vtgan_core::protocol::plan_partition(&self.partition, &vtgan_core::cond::RatioVector(vec![1.0]))
            .map_err(|e| Error::Config(format!("partition: {e}")))?;
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every: must be at least 1".into()));
        }
        Ok(schema)
    }

    /// The training config with `epochs` turned into rounds.
    pub fn training_config(&self, n_rows: usize) -> Result<TrainingConfig> {
        let mut t = self.training.base.clone();
        if let Some(e) = self.training.epochs {
            t.rounds = TrainingConfig::rounds_for_epochs(e, n_rows, t.batch);
        }
        t.validate(n_rows).map_err(|e| Error::Config(format!("training: {e}")))?;
        Ok(t)
    }

    /// Every field spelled out, rounds resolved and paths absolute.
    pub fn snapshot(&self, n_rows: usize) -> Result<Self> {
        let mut s = self.clone();
        s.training = TrainingSection {
            epochs: None,
            base: self.training_config(n_rows)?,
        };
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(&*p).map_err(|e| Error::io(&*p, e))?;
            Ok(())
        };
        abs(&mut s.data.csv)?;
        abs(&mut s.data.schema)?;
        if let Some(p) = &mut s.data.test_csv {
            abs(p)?;
        }
        abs(&mut s.output_dir)?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize the snapshot: {e}")))
    }
}
