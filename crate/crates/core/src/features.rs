//! Function-level feature vectors.
//!
//! Layout for a schema with depth `D`:
//!
//! | slots          | meaning                                         |
//! |----------------|-------------------------------------------------|
//! | `0..D`         | known trip count of the loop at each depth      |
//! | `D..2D`        | 1 where the trip count at that depth is symbolic |
//! | `2D..2D+5`     | loop logical, arith, branches, arrays, scalars  |
//! | `2D+5..2D+10`  | the same five counts for code outside loops     |
//!
//! Loop slots of a function with several nests are the depth-weighted
//! average of the per-nest records; trip-count vectors shorter than `D`
//! are padded with zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::parser::{FunctionUnit, LoopNest, OpCounts, TripCount};

pub const LOOP_COUNT_NAMES: [&str; 5] = [
    "loop_num_logical_ops",
    "loop_num_arith_ops",
    "loop_num_branches",
    "loop_num_arrays",
    "loop_num_scalars",
];

pub const NONLOOP_COUNT_NAMES: [&str; 5] = [
    "num_logical_ops",
    "num_arith_ops",
    "num_branches",
    "num_arrays",
    "num_scalars",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("function `{function}` has a loop nest of depth {depth}, deeper than the schema's max_depth {max_depth}; rebuild the schema with a larger max_depth")]
    NestTooDeep {
        function: String,
        depth: usize,
        max_depth: usize,
    },
    #[error("no loop nests to reduce")]
    NoNests,
    #[error("schema mismatch: {0}")]
    Schema(String),
}

/// Fixed feature layout; `max_depth` is the deepest loop nest in the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SchemaDoc", try_from = "SchemaDoc")]
pub struct FeatureSchema {
    max_depth: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    max_depth: usize,
    width: usize,
    layout: Vec<String>,
}

impl From<FeatureSchema> for SchemaDoc {
    fn from(s: FeatureSchema) -> Self {
        SchemaDoc {
            max_depth: s.max_depth,
            width: s.width(),
            layout: s.layout(),
        }
    }
}

impl TryFrom<SchemaDoc> for FeatureSchema {
    type Error = String;

    fn try_from(doc: SchemaDoc) -> Result<Self, String> {
        let schema = FeatureSchema::new(doc.max_depth).map_err(|e| e.to_string())?;
        if doc.width != schema.width() {
            return Err(format!(
                "schema width {} does not match max_depth {} (expected {})",
                doc.width,
                doc.max_depth,
                schema.width()
            ));
        }
        if doc.layout != schema.layout() {
            return Err("schema layout does not match the feature layout".into());
        }
        Ok(schema)
    }
}

impl FeatureSchema {
    pub fn new(max_depth: usize) -> Result<Self, FeatureError> {
        if max_depth == 0 {
            return Err(FeatureError::Schema("max_depth must be positive".into()));
        }
        Ok(FeatureSchema { max_depth })
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn width(&self) -> usize {
        2 * self.max_depth + 10
    }

    pub fn loop_offset(&self) -> usize {
        2 * self.max_depth
    }

    pub fn nonloop_offset(&self) -> usize {
        2 * self.max_depth + 5
    }

    pub fn layout(&self) -> Vec<String> {
        let d = self.max_depth;
        (0..d)
            .map(|i| format!("niter_known[{i}]"))
            .chain((0..d).map(|i| format!("niter_symbolic[{i}]")))
            .chain(LOOP_COUNT_NAMES.iter().map(|s| s.to_string()))
            .chain(NONLOOP_COUNT_NAMES.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.layout().iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: FeatureSchema, values: Vec<f64>) -> Result<Self, FeatureError> {
        if values.len() != schema.width() {
            return Err(FeatureError::Schema(format!(
                "vector has {} values, schema width is {}",
                values.len(),
                schema.width()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(FeatureError::Schema(format!(
                "feature values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(FeatureVector { schema, values })
    }
}

/// Raw features of one loop nest.
#[derive(Debug, Clone, PartialEq)]
pub struct NestRecord {
    pub niter_known: Vec<f64>,
    pub niter_symbolic: Vec<f64>,
    pub counts: [f64; 5],
}

pub fn nest_features(nest: &LoopNest, max_depth: usize) -> Result<NestRecord, FeatureError> {
    if nest.depth > max_depth || nest.trip_counts.len() > max_depth {
        return Err(FeatureError::NestTooDeep {
            function: String::new(),
            depth: nest.depth,
            max_depth,
        });
    }
    let mut niter_known = vec![0.0; max_depth];
    let mut niter_symbolic = vec![0.0; max_depth];
    for (d, tc) in nest.trip_counts.iter().enumerate() {
        match tc {
            TripCount::Known(n) => niter_known[d] = *n as f64,
            TripCount::Symbolic => niter_symbolic[d] = 1.0,
        }
    }
    Ok(NestRecord {
        niter_known,
        niter_symbolic,
        counts: counts_as_f64(&nest.body_counts),
    })
}

fn counts_as_f64(c: &OpCounts) -> [f64; 5] {
    c.as_array().map(|v| v as f64)
}

/// Depth-weighted average of per-nest records.
pub fn reduce_nests(records: &[NestRecord], depths: &[usize]) -> Result<NestRecord, FeatureError> {
    if records.is_empty() {
        return Err(FeatureError::NoNests);
    }
    assert_eq!(records.len(), depths.len(), "one depth per record");
    let width = records[0].niter_known.len();
    let total: f64 = depths.iter().map(|&d| d as f64).sum();
    let mut out = NestRecord {
        niter_known: vec![0.0; width],
        niter_symbolic: vec![0.0; width],
        counts: [0.0; 5],
    };
    for (r, &d) in records.iter().zip(depths) {
        let w = d as f64;
        for (acc, v) in out.niter_known.iter_mut().zip(&r.niter_known) {
            *acc += w * v;
        }
        for (acc, v) in out.niter_symbolic.iter_mut().zip(&r.niter_symbolic) {
            *acc += w * v;
        }
        for (acc, v) in out.counts.iter_mut().zip(&r.counts) {
            *acc += w * v;
        }
    }
    out.niter_known.iter_mut().for_each(|v| *v /= total);
    out.niter_symbolic.iter_mut().for_each(|v| *v /= total);
    out.counts.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

pub fn extract(func: &FunctionUnit, schema: &FeatureSchema) -> Result<FeatureVector, FeatureError> {
    let d = schema.max_depth();
    let mut values = Vec::with_capacity(schema.width());
    if func.loop_nests.is_empty() {
        values.resize(schema.loop_offset() + 5, 0.0);
    } else {
        let records = func
            .loop_nests
            .iter()
            .map(|n| nest_features(n, d))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| match e {
                FeatureError::NestTooDeep {
                    depth, max_depth, ..
                } => FeatureError::NestTooDeep {
                    function: func.name().to_string(),
                    depth,
                    max_depth,
                },
                other => other,
            })?;
        let depths: Vec<usize> = func.loop_nests.iter().map(|n| n.depth).collect();
        let block = reduce_nests(&records, &depths)?;
        values.extend(block.niter_known);
        values.extend(block.niter_symbolic);
        values.extend(block.counts);
    }
    values.extend(counts_as_f64(&func.nonloop_counts));
    FeatureVector::new(*schema, values)
}

/// Extracts many functions; results are in input order.
pub fn extract_all(
    funcs: &[FunctionUnit],
    schema: &FeatureSchema,
    exec: Execution,
) -> Vec<Result<FeatureVector, FeatureError>> {
    exec.map(funcs, |f| extract(f, schema))
}

/// Deepest nest over the corpus, never less than 1.
pub fn compute_max_depth(corpus: &[FunctionUnit]) -> usize {
    corpus
        .iter()
        .map(FunctionUnit::max_nest_depth)
        .max()
        .unwrap_or(0)
        .max(1)
}
