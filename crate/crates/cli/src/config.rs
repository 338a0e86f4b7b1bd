use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// Experiment file. `method`, `params`, `seed` and `output_dir` are optional;
/// command-line flags override `seed` and `output_dir`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: String,
    pub instance: Value,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn instance<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        section("instance", self.instance.clone())
    }

    /// Missing or `null` params fall back to the defaults of `T`.
    pub fn params<T: DeserializeOwned + Default>(&self) -> Result<T, CliError> {
        match &self.params {
            Value::Null => Ok(T::default()),
            v => section("params", v.clone()),
        }
    }
}

fn section<T: DeserializeOwned>(name: &str, v: Value) -> Result<T, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("{name}: {e}")))
}

/// Accepts `estimate_z`, `estimate-z` and `estimate_Z` for the same experiment.
pub fn normalize(name: &str) -> String {
    name.to_ascii_lowercase().replace('-', "_")
}
