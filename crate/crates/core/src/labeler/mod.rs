//! Ground-truth labels from measured run times.
//!
//! Each function is wrapped in a generated driver, compiled once with the
//! basic flags and once with the aggressive flags, and both binaries are
//! timed. A function is `Easy` when `t_aggr / t_basic > delta`, i.e. the
//! aggressive build is barely faster.

mod driver;
mod process;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::parser::FunctionUnit;

pub use driver::{synthesize_driver, DriverError};
pub use process::{
    compile_variant, measure, run_with_timeout, CompileError, CompiledPair, CompilerTiming, Measurement,
    MeasureError, RunError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Easy,
    Hard,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Easy => "easy",
            Label::Hard => "hard",
        }
    }

    /// Position in `(easy, hard)` count pairs.
    pub fn index(self) -> usize {
        match self {
            Label::Easy => 0,
            Label::Hard => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Easy
        } else {
            Label::Hard
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Label::Easy),
            "hard" => Ok(Label::Hard),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("run times must be positive (t_basic = {t_basic}, t_aggr = {t_aggr})")]
    NonPositiveTime { t_basic: f64, t_aggr: f64 },
    #[error("invalid labeler configuration: {0}")]
    Config(String),
    #[error("no functions to label")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    /// Easy iff `t_aggr / t_basic > delta`.
    pub delta: f64,
    /// Placeholders: `{source}`, `{output}`, and `{flags}` (expands to the flag list).
    pub compiler_cmd: String,
    pub flags_basic: Vec<String>,
    pub flags_aggr: Vec<String>,
    pub repetitions: usize,
    pub timeout_s: f64,
    pub min_runtime_s: f64,
    /// Extent of driver arrays; symbolic bounds and int parameters are bound to it.
    pub array_extent: usize,
    pub rng_seed: u64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            delta: 0.8,
            compiler_cmd: "cc {flags} -o {output} {source}".into(),
            flags_basic: vec!["-O1".into()],
            flags_aggr: vec!["-O3".into()],
            repetitions: 7,
            timeout_s: 60.0,
            min_runtime_s: 0.2,
            array_extent: 512,
            rng_seed: 1,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<(), LabelError> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(LabelError::Config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.repetitions == 0 || self.repetitions.is_multiple_of(2) {
            return Err(LabelError::Config(format!(
                "repetitions must be a positive odd number, got {}",
                self.repetitions
            )));
        }
        let timeout_ok = self.timeout_s.is_finite() && self.timeout_s > 0.0;
        let runtime_ok = self.min_runtime_s.is_finite() && self.min_runtime_s >= 0.0;
        if !(timeout_ok && runtime_ok) {
            return Err(LabelError::Config("timeout_s must be positive and min_runtime_s non-negative".into()));
        }
        if self.array_extent == 0 {
            return Err(LabelError::Config("array_extent must be positive".into()));
        }
        if self.compiler_cmd.split_whitespace().next().is_none() {
            return Err(LabelError::Config("compiler_cmd is empty".into()));
        }
        Ok(())
    }

    /// Digest of the canonical JSON rendering.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub t_basic: f64,
    pub t_aggr: f64,
    pub ratio: f64,
    pub samples_basic: Vec<f64>,
    pub samples_aggr: Vec<f64>,
}

impl TimingRecord {
    pub fn from_samples(samples_basic: Vec<f64>, samples_aggr: Vec<f64>) -> Result<Self, LabelError> {
        let (Some(t_basic), Some(t_aggr)) = (median(&samples_basic), median(&samples_aggr)) else {
            return Err(LabelError::NonPositiveTime {
                t_basic: f64::NAN,
                t_aggr: f64::NAN,
            });
        };
        if !(t_basic > 0.0 && t_aggr > 0.0) {
            return Err(LabelError::NonPositiveTime { t_basic, t_aggr });
        }
        Ok(TimingRecord {
            t_basic,
            t_aggr,
            ratio: t_aggr / t_basic,
            samples_basic,
            samples_aggr,
        })
    }
}

/// Median; the lower middle element for even lengths.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() || samples.iter().any(|s| s.is_nan()) {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[(v.len() - 1) / 2])
}

pub fn label_from_ratio(t_basic: f64, t_aggr: f64, delta: f64) -> Result<Label, LabelError> {
    if !(t_basic > 0.0 && t_aggr > 0.0) {
        return Err(LabelError::NonPositiveTime { t_basic, t_aggr });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(LabelError::Config(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(if t_aggr / t_basic > delta {
        Label::Easy
    } else {
        Label::Hard
    })
}

/// A function to be labeled.
#[derive(Debug, Clone)]
pub struct LabelItem {
    pub function_id: String,
    pub unit: Option<FunctionUnit>,
}

impl LabelItem {
    pub fn name(&self) -> &str {
        match &self.unit {
            Some(u) => u.name(),
            None => self
                .function_id
                .rsplit(':')
                .next()
                .unwrap_or(&self.function_id),
        }
    }
}

/// Source of per-run timings.
///
/// `prepare` may run concurrently for different functions; `measure` is
/// always called serially, in corpus order.
pub trait TimingSource: Sync {
    type Prepared: Send;

    fn prepare(&self, item: &LabelItem, cfg: &LabelerConfig) -> Result<Self::Prepared, String>;

    /// Returns `(samples_basic, samples_aggr)` in seconds.
    fn measure(&self, prepared: Self::Prepared, cfg: &LabelerConfig) -> Result<(Vec<f64>, Vec<f64>), String>;
}

/// Timings read from a table instead of measured.
#[derive(Debug, Clone, Default)]
pub struct FakeTimer {
    table: HashMap<String, (f64, f64)>,
}

impl FakeTimer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, function: impl Into<String>, t_basic: f64, t_aggr: f64) {
        self.table.insert(function.into(), (t_basic, t_aggr));
    }

    /// Reads `function,t_basic,t_aggr` records. `#` lines and a header row
    /// whose first field is `function` are skipped.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut t = FakeTimer::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let line = rec.position().map_or(n as u64 + 1, |p| p.line());
            if n == 0 && rec.get(0) == Some("function") {
                continue;
            }
            let [name, b, a] = [0, 1, 2].map(|i| rec.get(i));
            let (Some(name), Some(b), Some(a), 3) = (name, b, a, rec.len()) else {
                return Err(format!("line {line}: expected `function,t_basic,t_aggr`"));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| format!("line {line}: bad time `{s}`: {e}"))
            };
            t.insert(name, parse(b)?, parse(a)?);
        }
        Ok(t)
    }

    fn lookup(&self, item: &LabelItem) -> Option<(f64, f64)> {
        self.table
            .get(&item.function_id)
            .or_else(|| self.table.get(item.name()))
            .copied()
    }
}

impl TimingSource for FakeTimer {
    type Prepared = (f64, f64);

    fn prepare(&self, item: &LabelItem, _cfg: &LabelerConfig) -> Result<(f64, f64), String> {
        self.lookup(item)
            .ok_or_else(|| format!("no fake timing for `{}`", item.function_id))
    }

    fn measure(&self, (b, a): (f64, f64), _cfg: &LabelerConfig) -> Result<(Vec<f64>, Vec<f64>), String> {
        Ok((vec![b], vec![a]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelResult {
    pub function_id: String,
    /// `Err` holds the quarantine reason.
    pub outcome: Result<(TimingRecord, Label), String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelOutcome {
    /// Input order.
    pub results: Vec<LabelResult>,
}

impl LabelOutcome {
    pub fn labeled(&self) -> impl Iterator<Item = (&str, &TimingRecord, Label)> {
        self.results.iter().filter_map(|r| match &r.outcome {
            Ok((t, l)) => Some((r.function_id.as_str(), t, *l)),
            Err(_) => None,
        })
    }

    pub fn quarantined(&self) -> impl Iterator<Item = (&str, &str)> {
        self.results.iter().filter_map(|r| match &r.outcome {
            Err(reason) => Some((r.function_id.as_str(), reason.as_str())),
            Ok(_) => None,
        })
    }
}

/// Prepares every function (concurrently under `exec`), then measures them
/// one at a time in input order and applies the delta rule.
pub fn label_corpus<T: TimingSource>(
    items: &[LabelItem],
    cfg: &LabelerConfig,
    timing: &T,
    exec: Execution,
) -> Result<LabelOutcome, LabelError> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(LabelError::Empty);
    }
    let prepared = exec.map(items, |item| timing.prepare(item, cfg));
    let results = items
        .iter()
        .zip(prepared)
        .map(|(item, prep)| {
            let outcome = prep
                .and_then(|p| timing.measure(p, cfg))
                .and_then(|(b, a)| TimingRecord::from_samples(b, a).map_err(|e| e.to_string()))
                .and_then(|rec| {
                    let label = label_from_ratio(rec.t_basic, rec.t_aggr, cfg.delta)
                        .map_err(|e| e.to_string())?;
                    Ok((rec, label))
                });
            LabelResult {
                function_id: item.function_id.clone(),
                outcome,
            }
        })
        .collect();
    Ok(LabelOutcome { results })
}
