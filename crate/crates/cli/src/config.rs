use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{read, CliError, Result};

pub const DEFAULT_BURST: usize = 30;
pub const DEFAULT_REPS: usize = 180;
pub const DEFAULT_MODEL: &str = "aws-like";
pub const DEFAULT_OUT: &str = "runs";

/// Settings read from `--config`; any command-line flag overrides them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub definition: Option<PathBuf>,
    pub model: Option<String>,
    pub burst: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = read(path)?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub definition: PathBuf,
    /// Builtin model name or path to a model file.
    pub model: String,
    pub burst: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(definition: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            definition: definition.into(),
            model: DEFAULT_MODEL.into(),
            burst: DEFAULT_BURST,
            repetitions: DEFAULT_REPS,
            seed: 0,
            out: DEFAULT_OUT.into(),
            input: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.burst == 0 {
            return Err(CliError::usage("--burst must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(CliError::usage("--reps must be at least 1"));
        }
        Ok(())
    }
}
