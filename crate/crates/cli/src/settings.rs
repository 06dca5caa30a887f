//! Config file: named model definitions plus default flag values.
//!
//! ```toml
//! model = "oracle"            # used when --model is absent
//!
//! [defaults]                  # any long flag, with - or _
//! samples = 500
//! input-size = "62x62"
//!
//! [models.oracle]
//! type = "label_oracle"
//! manifest = "split.csv"      # relative to this file
//! num_classes = 43
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use limescope::bridge::ModelConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Default model name.
    pub model: Option<String>,
    #[serde(default)]
    pub defaults: toml::Table,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(skip)]
    pub dir: PathBuf,
    #[serde(skip)]
    pub path: PathBuf,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.path = path.to_path_buf();
        cfg.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve_paths(&self, model: ModelConfig) -> ModelConfig {
        match model {
            ModelConfig::LabelOracle {
                manifest,
                num_classes,
            } if manifest.is_relative() => ModelConfig::LabelOracle {
                manifest: self.dir.join(manifest),
                num_classes,
            },
            other => other,
        }
    }

    fn named(&self, name: &str) -> Option<ModelConfig> {
        self.models
            .get(name)
            .cloned()
            .map(|m| self.resolve_paths(m))
    }
}

/// Finds the model for `--model SPEC`, falling back to the config default.
///
/// `SPEC` is either `FILE#NAME` or a name defined in the active config.
pub fn resolve_model(
    spec: Option<&str>,
    config: Option<&FileConfig>,
) -> Result<ModelConfig, CliError> {
    if let Some((file, name)) = spec.and_then(|s| s.split_once('#')) {
        let other = FileConfig::load(Path::new(file))?;
        return other
            .named(name)
            .ok_or_else(|| CliError::Config(format!("model '{name}' is not defined in {file}")));
    }
    let config = config.ok_or_else(|| match spec {
        Some(name) => CliError::Config(format!(
            "model '{name}' given but no config file (use --config, LIMESCOPE_CONFIG or FILE#NAME)"
        )),
        None => CliError::Config("no model given (use --model)".into()),
    })?;
    let name = spec
        .or(config.model.as_deref())
        .ok_or_else(|| CliError::Config("no model given (use --model)".into()))?;
    config.named(name).ok_or_else(|| {
        CliError::Config(format!(
            "model '{name}' is not defined in {}",
            config.path.display()
        ))
    })
}

fn toml_to_arg(value: &toml::Value) -> Result<String, CliError> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(toml_to_arg)
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        other => {
            return Err(CliError::Config(format!(
                "unsupported default value {other}"
            )))
        }
    })
}

/// Extra `--flag value` pairs supplying config defaults for flags the user
/// did not set on the command line.
pub fn default_args(config: &FileConfig, sub: &ArgMatches) -> Result<Vec<OsString>, CliError> {
    let mut extra = Vec::new();
    for (key, value) in &config.defaults {
        let id = key.replace('-', "_");
        if sub.try_contains_id(&id).is_err() {
            continue;
        }
        let explicit = matches!(
            sub.value_source(&id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        );
        if !explicit {
            extra.push(format!("--{}", id.replace('_', "-")).into());
            extra.push(toml_to_arg(value)?.into());
        }
    }
    Ok(extra)
}
