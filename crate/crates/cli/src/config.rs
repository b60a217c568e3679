use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Top level of a configuration file. Experiment parameters live in the
/// `[params]` table and are validated by the experiment itself.
///
/// ```toml
/// seed = 7
/// [params]
/// snapshots = 200
/// ```
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Deserializes an experiment's parameter struct, rejecting unknown keys
/// through the struct's own `deny_unknown_fields`.
pub fn parse_params<P: DeserializeOwned>(table: &toml::Table) -> Result<P> {
    toml::Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}
