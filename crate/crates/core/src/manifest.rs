//! Line-delimited corpus manifests.
//!
//! The first line is a [`ManifestHeader`]; every following line is one
//! [`ManifestRow`]. Both are JSON objects with a fixed field order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::FeatureSchema;
use crate::forest::Example;
use crate::labeler::{Label, LabelerConfig, TimingRecord};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("unsupported manifest format_version {0}")]
    Version(u32),
    #[error("row `{id}`: {message}")]
    Row { id: String, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub schema: FeatureSchema,
    /// Digests of the configurations that produced the rows, by stage.
    #[serde(default)]
    pub config_hashes: BTreeMap<String, String>,
    /// Set once the corpus has been labeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler: Option<LabelerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    /// `source_path:function`.
    pub function_id: String,
    pub source_path: String,
    pub function: String,
    pub max_depth: usize,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_reason: Option<String>,
}

pub fn function_id(source_path: &str, function: &str) -> String {
    format!("{source_path}:{function}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub rows: Vec<ManifestRow>,
}

impl CorpusManifest {
    pub fn new(schema: FeatureSchema) -> Self {
        CorpusManifest {
            header: ManifestHeader {
                format_version: MANIFEST_VERSION,
                schema,
                config_hashes: BTreeMap::new(),
                labeler: None,
            },
            rows: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let width = self.header.schema.width();
        for r in &self.rows {
            let fail = |message: String| {
                Err(ManifestError::Row {
                    id: r.function_id.clone(),
                    message,
                })
            };
            if r.features.len() != width {
                return fail(format!("{} feature values, schema width is {width}", r.features.len()));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return fail("non-finite feature value".into());
            }
            if r.label.is_some() && r.timing.is_none() {
                return fail("labeled without timing".into());
            }
            if r.quarantine_reason.is_some() && (r.label.is_some() || r.timing.is_some()) {
                return fail("quarantined rows carry neither timing nor label".into());
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (n, first) = lines.next().ok_or(ManifestError::Empty)?;
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version =
            serde_json::from_str(first).map_err(|source| ManifestError::Json { line: n + 1, source })?;
        if v.format_version != MANIFEST_VERSION {
            return Err(ManifestError::Version(v.format_version));
        }
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|source| ManifestError::Json { line: n + 1, source })?;
        let rows = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|source| ManifestError::Json { line: n + 1, source }))
            .collect::<Result<Vec<ManifestRow>, _>>()?;
        let m = CorpusManifest { header, rows };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Hex SHA-256 of the serialized manifest.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    /// Labeled rows as training examples.
    pub fn examples(&self) -> Vec<Example> {
        self.rows
            .iter()
            .filter_map(|r| {
                Some(Example {
                    id: r.function_id.clone(),
                    values: r.features.clone(),
                    label: r.label?,
                })
            })
            .collect()
    }
}
