use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use agilecc_core::features::{compute_max_depth, extract_all, FeatureError};
use agilecc_core::forest::{
    cross_validate, evaluate, export_decision_code, ForestParams, RandomForest,
};
use agilecc_core::labeler::{
    label_corpus, CompilerTiming, FakeTimer, LabelItem, LabelOutcome, LabelerConfig,
};
use agilecc_core::manifest::{function_id, CorpusManifest, ManifestRow};
use agilecc_core::parser::{Diagnostic, ParseError};
use agilecc_core::synthgen::{self, CorpusIndex, CORPUS_INDEX};
use agilecc_core::{parse_unit, Execution, FeatureSchema, FunctionUnit, SourceUnit};
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use crate::config::Config;
use crate::report::ClassificationReport;

/// Outcome of a command that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some inputs were skipped or quarantined.
    Partial,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Partial => 2,
        }
    }

    fn partial_if(cond: bool) -> Status {
        if cond {
            Status::Partial
        } else {
            Status::Ok
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: Option<u64>,
    pub config: Config,
    pub out: Option<PathBuf>,
    pub strict: bool,
    pub exec: Execution,
}

impl Globals {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(&text)
    }

    fn forest_params(&self, o: &ForestOverrides) -> ForestParams {
        let mut p = self.config.forest.clone();
        if let Some(s) = self.seed {
            p.rng_seed = s;
        }
        if let Some(v) = o.trees {
            p.n_trees = v;
        }
        if let Some(v) = o.tree_depth {
            p.max_tree_depth = v;
        }
        if let Some(v) = o.min_samples_leaf {
            p.min_samples_leaf = v;
        }
        if let Some(v) = o.features_per_split {
            p.features_per_split = Some(v);
        }
        if let Some(v) = o.bootstrap_fraction {
            p.bootstrap_fraction = v;
        }
        p
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ForestOverrides {
    /// Number of trees.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum number of split levels per tree.
    #[arg(long)]
    pub tree_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub bootstrap_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, clap::Args)]
#[group(multiple = false)]
pub struct SchemaChoice {
    /// Size the schema to the deepest nest in the inputs (the default).
    #[arg(long)]
    pub fit_schema: bool,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Reuse the schema of a trained model.
    #[arg(long, value_name = "MODEL")]
    pub schema_from: Option<PathBuf>,
}

fn report_diagnostic(d: &Diagnostic) {
    eprintln!("{}", serde_json::to_string(d).expect("diagnostic serializes"));
}

/// Expands directories to their `.c` files, sorted by name.
fn collect_sources(paths: &[PathBuf]) -> Result<Vec<SourceUnit>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "c"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no source files given");
    }
    files
        .into_iter()
        .map(|f| {
            let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
            Ok(SourceUnit::new(f.to_string_lossy().into_owned(), text))
        })
        .collect()
}

struct Parsed {
    functions: Vec<(String, FunctionUnit)>,
    diagnostics: Vec<Diagnostic>,
}

fn parse_sources(units: &[SourceUnit], strict: bool, exec: Execution) -> Result<Parsed> {
    let results = exec.map(units, |u| parse_unit(u, strict));
    let mut parsed = Parsed {
        functions: Vec::new(),
        diagnostics: Vec::new(),
    };
    for (u, r) in units.iter().zip(results) {
        match r {
            Ok(out) => {
                parsed
                    .functions
                    .extend(out.functions.into_iter().map(|f| (u.path.clone(), f)));
                parsed.diagnostics.extend(out.diagnostics);
            }
            Err(ParseError::EmptySource(path)) => eprintln!("note: {path} is empty"),
            Err(ParseError::Rejected(d)) => {
                report_diagnostic(&d);
                bail!("{d}");
            }
        }
    }
    parsed.diagnostics.iter().for_each(report_diagnostic);
    Ok(parsed)
}

pub fn gen(g: &Globals, n: Option<usize>) -> Result<Status> {
    let mut cfg = g.config.gen.clone();
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        cfg.n_functions = n;
    }
    let dir = g.out.clone().ok_or_else(|| anyhow!("gen needs --out <dir>"))?;
    let units = synthgen::generate(&cfg, g.exec)?;
    let index = synthgen::write_corpus(&dir, &cfg, &units)?;
    eprintln!(
        "wrote {} functions to {} (config {})",
        index.files.len(),
        dir.display(),
        &index.config_hash[..12]
    );
    Ok(Status::Ok)
}

fn generator_hashes(sources: &[PathBuf]) -> Vec<String> {
    let mut out = Vec::new();
    for p in sources {
        let dir = if p.is_dir() { p.as_path() } else { p.parent().unwrap_or(Path::new(".")) };
        if let Ok(text) = std::fs::read_to_string(dir.join(CORPUS_INDEX)) {
            if let Ok(index) = serde_json::from_str::<CorpusIndex>(&text) {
                if !out.contains(&index.config_hash) {
                    out.push(index.config_hash);
                }
            }
        }
    }
    out
}

pub fn extract(g: &Globals, sources: &[PathBuf], choice: &SchemaChoice) -> Result<Status> {
    let units = collect_sources(sources)?;
    let parsed = parse_sources(&units, g.strict, g.exec)?;
    let funcs: Vec<FunctionUnit> = parsed.functions.iter().map(|(_, f)| f.clone()).collect();
    let schema = match (choice.max_depth, &choice.schema_from) {
        (Some(d), _) => FeatureSchema::new(d)?,
        (_, Some(model)) => RandomForest::load(model)?.schema,
        _ => FeatureSchema::new(compute_max_depth(&funcs))?,
    };
    let vectors = extract_all(&funcs, &schema, g.exec);
    let mut manifest = CorpusManifest::new(schema);
    for (k, hash) in generator_hashes(sources).into_iter().enumerate() {
        let key = if k == 0 { "generator".to_string() } else { format!("generator.{k}") };
        manifest.header.config_hashes.insert(key, hash);
    }
    for ((path, f), v) in parsed.functions.iter().zip(vectors) {
        let v = v.map_err(|e| match e {
            FeatureError::NestTooDeep { .. } => anyhow!("{path}: {e}"),
            other => anyhow!(other),
        })?;
        manifest.rows.push(ManifestRow {
            function_id: function_id(path, f.name()),
            source_path: path.clone(),
            function: f.name().to_string(),
            max_depth: f.max_nest_depth(),
            features: v.values,
            timing: None,
            label: None,
            quarantine_reason: None,
        });
    }
    g.emit(&manifest.to_jsonl())?;
    eprintln!(
        "extracted {} functions, schema max_depth {} (width {})",
        manifest.rows.len(),
        schema.max_depth(),
        schema.width()
    );
    Ok(Status::partial_if(!parsed.diagnostics.is_empty()))
}

fn apply_labels(manifest: &mut CorpusManifest, outcome: LabelOutcome) {
    for (row, res) in manifest.rows.iter_mut().zip(outcome.results) {
        debug_assert_eq!(row.function_id, res.function_id);
        match res.outcome {
            Ok((timing, label)) => {
                row.timing = Some(timing);
                row.label = Some(label);
                row.quarantine_reason = None;
            }
            Err(reason) => {
                row.timing = None;
                row.label = None;
                row.quarantine_reason = Some(reason);
            }
        }
    }
}

pub fn label(
    g: &Globals,
    manifest_path: &Path,
    fake_timer: Option<&Path>,
    delta: Option<f64>,
    keep_drivers: Option<PathBuf>,
) -> Result<Status> {
    let mut manifest = CorpusManifest::load(manifest_path)?;
    let mut cfg: LabelerConfig = g.config.labeler.clone();
    if let Some(d) = delta {
        cfg.delta = d;
    }
    cfg.validate()?;
    if manifest.rows.is_empty() {
        bail!("{} has no rows to label", manifest_path.display());
    }
    let outcome = match fake_timer {
        Some(table) => {
            let text = std::fs::read_to_string(table).with_context(|| format!("reading {}", table.display()))?;
            let timer = FakeTimer::from_csv(&text).map_err(|e| anyhow!("{}: {e}", table.display()))?;
            let items: Vec<LabelItem> = manifest
                .rows
                .iter()
                .map(|r| LabelItem {
                    function_id: r.function_id.clone(),
                    unit: None,
                })
                .collect();
            label_corpus(&items, &cfg, &timer, g.exec)?
        }
        None => {
            let mut cache: HashMap<String, Option<Vec<FunctionUnit>>> = HashMap::new();
            let items: Vec<LabelItem> = manifest
                .rows
                .iter()
                .map(|r| {
                    let funcs = cache.entry(r.source_path.clone()).or_insert_with(|| {
                        let text = std::fs::read_to_string(&r.source_path).ok()?;
                        parse_unit(&SourceUnit::new(r.source_path.clone(), text), false)
                            .ok()
                            .map(|o| o.functions)
                    });
                    let unit = funcs
                        .as_ref()
                        .and_then(|fs| fs.iter().find(|f| f.name() == r.function))
                        .cloned();
                    LabelItem {
                        function_id: r.function_id.clone(),
                        unit,
                    }
                })
                .collect();
            let timing = CompilerTiming {
                keep_dir: keep_drivers,
            };
            label_corpus(&items, &cfg, &timing, g.exec)?
        }
    };
    let quarantined = outcome.quarantined().count();
    for (id, reason) in outcome.quarantined() {
        eprintln!("quarantined {id}: {reason}");
    }
    apply_labels(&mut manifest, outcome);
    manifest.header.config_hashes.insert("labeler".into(), cfg.digest());
    manifest.header.labeler = Some(cfg);
    manifest.validate()?;
    g.emit(&manifest.to_jsonl())?;
    eprintln!(
        "labeled {} of {} functions",
        manifest.rows.len() - quarantined,
        manifest.rows.len()
    );
    Ok(Status::partial_if(quarantined > 0))
}

pub fn train(g: &Globals, manifest_path: &Path, o: &ForestOverrides) -> Result<Status> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let rows = manifest.examples();
    if rows.is_empty() {
        bail!("{} has no labeled rows", manifest_path.display());
    }
    let params = g.forest_params(o);
    let model = RandomForest::train(&rows, manifest.header.schema, &params, manifest.fingerprint(), g.exec)?;
    g.emit(&model.to_json())?;
    eprintln!("trained {} trees on {} rows", model.trees.len(), rows.len());
    Ok(Status::Ok)
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
enum EvalReport {
    Model {
        training_fingerprint: String,
        metrics: agilecc_core::forest::Metrics,
    },
    Cv(agilecc_core::forest::CvReport),
}

pub fn eval(
    g: &Globals,
    manifest_path: &Path,
    model: Option<&Path>,
    cv: Option<usize>,
    o: &ForestOverrides,
) -> Result<Status> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let rows = manifest.examples();
    if rows.is_empty() {
        bail!("{} has no labeled rows", manifest_path.display());
    }
    let report = match (model, cv) {
        (Some(path), None) => {
            let model = RandomForest::load(path)?;
            if model.schema != manifest.header.schema {
                bail!(
                    "schema mismatch: model has max_depth {}, manifest has max_depth {}",
                    model.schema.max_depth(),
                    manifest.header.schema.max_depth()
                );
            }
            let metrics = evaluate(&model, &rows)?;
            eprintln!("accuracy {:.4} on {} rows", metrics.accuracy, metrics.n);
            EvalReport::Model {
                training_fingerprint: model.training_fingerprint,
                metrics,
            }
        }
        (None, Some(k)) => {
            let params = g.forest_params(o);
            let cv = cross_validate(&rows, manifest.header.schema, &params, k, g.exec)?;
            for (i, m) in cv.folds.iter().enumerate() {
                eprintln!("fold {i}: accuracy {:.4} ({} rows)", m.accuracy, m.n);
            }
            eprintln!("mean accuracy {:.4}", cv.mean_accuracy);
            EvalReport::Cv(cv)
        }
        _ => bail!("eval needs exactly one of --model or --cv"),
    };
    g.emit_json(&report)?;
    Ok(Status::Ok)
}

pub fn classify(g: &Globals, sources: &[PathBuf], model_path: &Path) -> Result<Status> {
    let model = RandomForest::load(model_path)?;
    let units = collect_sources(sources)?;
    let parsed = parse_sources(&units, g.strict, g.exec)?;
    let labeler = &g.config.labeler;
    let mut report = ClassificationReport::new(
        model.training_fingerprint.clone(),
        labeler.flags_basic.clone(),
        labeler.flags_aggr.clone(),
    );
    let funcs: Vec<FunctionUnit> = parsed.functions.iter().map(|(_, f)| f.clone()).collect();
    let vectors = extract_all(&funcs, &model.schema, g.exec);
    for ((path, f), v) in parsed.functions.iter().zip(vectors) {
        let id = function_id(path, f.name());
        match v {
            Ok(v) => {
                let p = model.predict(&v)?;
                report.push_label(id, f.name().to_string(), p.label, p.votes);
            }
            Err(e) => report.push_quarantine(id, f.name().to_string(), e.to_string()),
        }
    }
    for d in &parsed.diagnostics {
        let name = d.function.clone().unwrap_or_default();
        let id = match &d.function {
            Some(n) => function_id(&d.path, n),
            None => format!("{}:{}:{}", d.path, d.line, d.column),
        };
        report.push_quarantine(id, name, d.to_string());
    }
    report.validate().map_err(|e| anyhow!(e))?;
    g.emit_json(&report)?;
    let s = report.summary;
    eprintln!("{} easy, {} hard, {} quarantined", s.easy, s.hard, s.quarantined);
    Ok(Status::partial_if(s.quarantined > 0))
}

pub fn export(g: &Globals, model_path: &Path) -> Result<Status> {
    let model = RandomForest::load(model_path)?;
    g.emit(&export_decision_code(&model))?;
    Ok(Status::Ok)
}
