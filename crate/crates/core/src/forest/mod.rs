//! Random forest over feature vectors.
//!
//! Trees are grown on bootstrap samples with Gini splits at midpoints
//! between consecutive distinct values. Tree `i` draws from its own stream
//! seeded with `rng_seed ^ i`, so a model depends only on its inputs and
//! never on how many threads trained it.

mod export;
mod metrics;
mod tree;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::features::{FeatureSchema, FeatureVector};
use crate::labeler::Label;

pub use export::{export_decision_code, EXPORT_FUNCTION};
pub use metrics::{cross_validate, evaluate, stratified_folds, CvReport, Metrics};
pub use tree::{best_split, build_tree, gini, grow, majority, DecisionTree, EmptyNode, Node, Split};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("no training rows")]
    Empty,
    #[error("invalid forest parameters: {0}")]
    Params(String),
    #[error("row `{id}` has {got} values, schema width is {width}")]
    Width { id: String, got: usize, width: usize },
    #[error("row `{0}` has a non-finite feature value")]
    NonFinite(String),
    #[error("schema mismatch: model has width {model}, input has width {input}")]
    SchemaMismatch { model: usize, input: usize },
    #[error("unsupported model format_version {0}")]
    Version(u32),
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_tree_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(width))`.
    pub features_per_split: Option<usize>,
    /// Bootstrap size relative to the training set, drawn with replacement.
    pub bootstrap_fraction: f64,
    pub rng_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 25,
            max_tree_depth: 12,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap_fraction: 1.0,
            rng_seed: 0,
        }
    }
}

impl ForestParams {
    /// Checks the parameters against `width` and fills in `features_per_split`.
    pub fn resolve(&self, width: usize) -> Result<ForestParams, ForestError> {
        let bad = |m: String| Err(ForestError::Params(m));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if self.max_tree_depth == 0 {
            return bad("max_tree_depth must be positive".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive".into());
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return bad(format!(
                "bootstrap_fraction must lie in (0, 1], got {}",
                self.bootstrap_fraction
            ));
        }
        let k = self
            .features_per_split
            .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize);
        if k == 0 || k > width {
            return bad(format!("features_per_split must lie in [1, {width}], got {k}"));
        }
        Ok(ForestParams {
            features_per_split: Some(k),
            ..self.clone()
        })
    }
}

/// One labeled training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub values: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// `(easy, hard)` tree votes.
    pub votes: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForest {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub params: ForestParams,
    pub training_fingerprint: String,
    pub trees: Vec<DecisionTree>,
}

fn check_rows(rows: &[Example], width: usize) -> Result<(), ForestError> {
    if rows.is_empty() {
        return Err(ForestError::Empty);
    }
    for r in rows {
        if r.values.len() != width {
            return Err(ForestError::Width {
                id: r.id.clone(),
                got: r.values.len(),
                width,
            });
        }
        if r.values.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite(r.id.clone()));
        }
    }
    Ok(())
}

impl RandomForest {
    /// Trains `params.n_trees` trees, scheduled by `exec`.
    pub fn train(
        rows: &[Example],
        schema: FeatureSchema,
        params: &ForestParams,
        training_fingerprint: impl Into<String>,
        exec: Execution,
    ) -> Result<RandomForest, ForestError> {
        let width = schema.width();
        let params = params.resolve(width)?;
        check_rows(rows, width)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
        let y: Vec<Label> = rows.iter().map(|r| r.label).collect();
        let k = params.features_per_split.expect("resolved");
        let trees = exec.map_indexed(params.n_trees, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed ^ i as u64);
            build_tree(&x, &y, &params, k, &mut rng)
        });
        Ok(RandomForest {
            format_version: FORMAT_VERSION,
            schema,
            params,
            training_fingerprint: training_fingerprint.into(),
            trees,
        })
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    /// Majority vote over raw values; exact ties go to `Hard`.
    pub fn predict_values(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.width() {
            return Err(ForestError::SchemaMismatch {
                model: self.width(),
                input: x.len(),
            });
        }
        let mut votes = [0usize; 2];
        for t in &self.trees {
            votes[t.predict(x).index()] += 1;
        }
        let label = if votes[0] > votes[1] { Label::Easy } else { Label::Hard };
        Ok(Prediction { label, votes })
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ForestError> {
        if x.schema != self.schema {
            return Err(ForestError::SchemaMismatch {
                model: self.width(),
                input: x.schema.width(),
            });
        }
        self.predict_values(&x.values)
    }

    /// Pretty JSON with a trailing newline. Floats use the shortest
    /// representation that round-trips.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<RandomForest, ForestError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.format_version != FORMAT_VERSION {
            return Err(ForestError::Version(v.format_version));
        }
        let model: RandomForest = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        let width = self.width();
        let params = self.params.resolve(width)?;
        if params != self.params {
            return Err(ForestError::Corrupt("features_per_split is not recorded".into()));
        }
        if self.trees.len() != self.params.n_trees {
            return Err(ForestError::Corrupt(format!(
                "{} trees, params say {}",
                self.trees.len(),
                self.params.n_trees
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(width)
                .map_err(|e| ForestError::Corrupt(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RandomForest, ForestError> {
        RandomForest::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn planted(n: usize, seed: u64) -> (FeatureSchema, Vec<Example>) {
        use rand::Rng;
        let schema = FeatureSchema::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..schema.width()).map(|_| rng.random_range(0..6) as f64).collect();
                let label = if values[5] <= 2.0 { Label::Easy } else { Label::Hard };
                Example {
                    id: format!("r{i}"),
                    values,
                    label,
                }
            })
            .collect();
        (schema, rows)
    }

    #[test]
    fn vote_examples() {
        let leaf = |label| DecisionTree {
            nodes: vec![Node::Leaf {
                label,
                class_counts: [1, 1],
            }],
        };
        let schema = FeatureSchema::new(1).unwrap();
        let mut model = RandomForest {
            format_version: FORMAT_VERSION,
            schema,
            params: ForestParams {
                n_trees: 3,
                ..ForestParams::default()
            }
            .resolve(schema.width())
            .unwrap(),
            training_fingerprint: String::new(),
            trees: vec![leaf(Label::Easy), leaf(Label::Easy), leaf(Label::Hard)],
        };
        let x = vec![0.0; schema.width()];
        let p = model.predict_values(&x).unwrap();
        assert_eq!((p.label, p.votes), (Label::Easy, [2, 1]));
        model.trees.pop();
        model.trees[1] = leaf(Label::Hard);
        let p = model.predict_values(&x).unwrap();
        assert_eq!((p.label, p.votes), (Label::Hard, [1, 1]));
        assert!(model.predict_values(&[0.0]).is_err());
    }

    #[test]
    fn training_is_independent_of_execution() {
        let (schema, rows) = planted(120, 7);
        let params = ForestParams {
            n_trees: 9,
            rng_seed: 11,
            ..ForestParams::default()
        };
        let a = RandomForest::train(&rows, schema, &params, "fp", Execution::Sequential).unwrap();
        let b = RandomForest::train(&rows, schema, &params, "fp", Execution::Parallel { threads: 4 }).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.trees.len(), 9);
        assert_eq!(a.params.features_per_split, Some(4));
    }

    #[test]
    fn save_load_round_trip() {
        let (schema, rows) = planted(80, 3);
        let model = RandomForest::train(&rows, schema, &ForestParams::default(), "fp", Execution::Auto).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = RandomForest::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), model.to_json());

        let text = model.to_json();
        assert!(matches!(
            RandomForest::from_json(&text[..text.len() / 2]),
            Err(ForestError::Parse(_))
        ));
        let v2 = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(RandomForest::from_json(&v2), Err(ForestError::Version(2))));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let (schema, rows) = planted(40, 1);
        let model = RandomForest::train(&rows, schema, &ForestParams::default(), "", Execution::Auto).unwrap();
        let other = FeatureSchema::new(3).unwrap();
        let x = FeatureVector::new(other, vec![0.0; other.width()]).unwrap();
        assert!(matches!(model.predict(&x), Err(ForestError::SchemaMismatch { .. })));
    }

    #[test]
    fn bad_params_and_rows() {
        let (schema, rows) = planted(10, 1);
        let p = ForestParams {
            features_per_split: Some(99),
            ..ForestParams::default()
        };
        assert!(matches!(
            RandomForest::train(&rows, schema, &p, "", Execution::Auto),
            Err(ForestError::Params(_))
        ));
        assert!(matches!(
            RandomForest::train(&[], schema, &ForestParams::default(), "", Execution::Auto),
            Err(ForestError::Empty)
        ));
        let mut short = rows.clone();
        short[3].values.pop();
        assert!(matches!(
            RandomForest::train(&short, schema, &ForestParams::default(), "", Execution::Auto),
            Err(ForestError::Width { .. })
        ));
    }
}
