use std::path::Path;

use agilecc_core::forest::ForestParams;
use agilecc_core::labeler::LabelerConfig;
use agilecc_core::synthgen::GenConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Contents of the `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gen: GenConfig,
    pub labeler: LabelerConfig,
    pub forest: ForestParams,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
