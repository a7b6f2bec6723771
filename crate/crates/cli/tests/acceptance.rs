//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use agilecc_cli::ClassificationReport;
use agilecc_core::eval::{Arg, Array, Evaluator, Value};
use agilecc_core::features::{compute_max_depth, extract, FeatureSchema};
use agilecc_core::forest::{
    best_split, cross_validate, export_decision_code, Example, ForestParams, Node, RandomForest,
};
use agilecc_core::labeler::{compile_variant, label_from_ratio, measure, synthesize_driver, LabelerConfig};
use agilecc_core::manifest::CorpusManifest;
use agilecc_core::synthgen::{generate, GenConfig};
use agilecc_core::{parse_unit, Execution, Label, SourceUnit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const FLOYD: &str = include_str!("data/floyd_warshall.c");

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = fn() -> Result<Verdict, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// AC1
fn golden_example() -> Result<Verdict, String> {
    let out = parse_unit(&SourceUnit::new("fw.c", FLOYD), true).map_err(|e| e.to_string())?;
    ensure(out.functions.len() == 1, || "expected one function".into())?;
    let schema = FeatureSchema::new(3).unwrap();
    let v = extract(&out.functions[0], &schema).map_err(|e| e.to_string())?;
    let want: [f64; 16] = [
        0.0, 0.0, 0.0, // niter_known
        1.0, 1.0, 1.0, // niter_symbolic
        1.0, 1.0, 1.0, 1.0, 0.0, // logical, arith, branches, arrays, scalars
        0.0, 0.0, 0.0, 0.0, 0.0, // non-loop
    ];
    ensure(v.values == want, || format!("got {:?}", v.values))?;
    Ok(Verdict::Pass("16/16 slots exact".into()))
}

// AC2
fn delta_rule_table() -> Result<Verdict, String> {
    use Label::{Easy as E, Hard as H};
    // (t_basic, t_aggr, delta, expected): Easy iff t_aggr / t_basic > delta.
    let table: [(f64, f64, f64, Label); 20] = [
        (10.0, 9.0, 0.8, E),
        (10.0, 8.0, 0.8, H),
        (10.0, 5.0, 0.8, H),
        (10.0, 10.0, 0.8, E),
        (10.0, 12.0, 0.8, E),
        (1.0, 0.81, 0.8, E),
        (1.0, 0.79, 0.8, H),
        (4.0, 2.0, 0.5, H),
        (4.0, 2.5, 0.5, E),
        (4.0, 1.0, 0.5, H),
        (2.0, 2.0, 1.0, H),
        (2.0, 2.5, 1.0, E),
        (2.0, 1.0, 1.0, H),
        (8.0, 2.0, 0.25, H),
        (8.0, 3.0, 0.25, E),
        (0.5, 0.375, 0.75, H),
        (0.5, 0.4, 0.75, E),
        (100.0, 1.0, 0.01, H),
        (100.0, 2.0, 0.01, E),
        (3.0, 2.9, 0.9, E),
    ];
    for (b, a, d, want) in table {
        let got = label_from_ratio(b, a, d).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("({b}, {a}, {d}) -> {got}, expected {want}"))?;
    }
    Ok(Verdict::Pass("20/20 triples, 6 at the boundary".into()))
}

fn walk_votes(model: &RandomForest, x: &[f64]) -> [usize; 2] {
    let mut votes = [0; 2];
    for t in &model.trees {
        let mut i = 0;
        let label = loop {
            match t.nodes[i] {
                Node::Leaf { label, .. } => break label,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] > threshold { right } else { left },
            }
        };
        votes[if label == Label::Easy { 0 } else { 1 }] += 1;
    }
    votes
}

/// Exhaustive enumeration of (feature, midpoint) pairs scored in exact
/// rational arithmetic. Returns `(feature, threshold)`.
fn brute_force_split(x: &[Vec<f64>], y: &[Label], min_leaf: usize) -> Option<(usize, f64)> {
    let gini_num = |rows: &[usize]| -> (i128, i128) {
        // n * gini * n = n^2 - e^2 - h^2
        let n = rows.len() as i128;
        let e = rows.iter().filter(|&&i| y[i] == Label::Easy).count() as i128;
        (n * n - e * e - (n - e) * (n - e), n)
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let (pg, n) = gini_num(&all);
    let mut best: Option<(i128, i128, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][f] <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let ((lg, nl), (rg, nr)) = (gini_num(&l), gini_num(&r));
            // decrease * n^2 * nl * nr
            let num = pg * nl * nr - n * (lg * nr + rg * nl);
            let den = n * n * nl * nr;
            if num > 0 && best.is_none_or(|(bn, bd, _, _)| num * bd > bn * den) {
                best = Some((num, den, f, t));
            }
        }
    }
    best.map(|(_, _, f, t)| (f, t))
}

// AC3
fn forest_oracles() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let schema = FeatureSchema::new(2).unwrap();
    let w = schema.width();
    let rows: Vec<Example> = (0..120)
        .map(|i| {
            let values: Vec<f64> = (0..w).map(|_| rng.random_range(0..5) as f64).collect();
            let label = if values[5] + values[9] <= 4.0 { Label::Easy } else { Label::Hard };
            Example {
                id: format!("r{i}"),
                values,
                label,
            }
        })
        .collect();
    let model = RandomForest::train(&rows, schema, &ForestParams::default(), "", Execution::Auto)
        .map_err(|e| e.to_string())?;
    for k in 0..200 {
        let x: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..5.0)).collect();
        let votes = walk_votes(&model, &x);
        let want = if votes[0] > votes[1] { Label::Easy } else { Label::Hard };
        let p = model.predict_values(&x).map_err(|e| e.to_string())?;
        ensure(p.votes == votes && p.label == want, || {
            format!("vector {k}: predict {p:?}, recount {votes:?}")
        })?;
    }
    for k in 0..50 {
        let n = rng.random_range(2..=20);
        let width = rng.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..width).map(|_| rng.random_range(0..6) as f64 * 0.5).collect())
            .collect();
        let y: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.5) { Label::Easy } else { Label::Hard })
            .collect();
        let min_leaf = rng.random_range(1..=3);
        let sample: Vec<usize> = (0..n).collect();
        let candidates: Vec<usize> = (0..width).collect();
        let got = best_split(&x, &y, &sample, &candidates, min_leaf).map(|s| (s.feature, s.threshold));
        let want = brute_force_split(&x, &y, min_leaf);
        ensure(got == want, || format!("dataset {k}: best_split {got:?}, brute force {want:?}"))?;
    }
    Ok(Verdict::Pass("200/200 vote recounts, 50/50 split searches".into()))
}

// AC4
fn learnability() -> Result<Verdict, String> {
    let cfg = GenConfig {
        seed: 4,
        n_functions: 400,
        depth_range: [1, 3],
        ops_range: [1, 2],
        expr_ops_range: [0, 3],
        nests_range: [1, 2],
        ..GenConfig::default()
    };
    let units = generate(&cfg, Execution::Auto).map_err(|e| e.to_string())?;
    let funcs: Vec<_> = units
        .iter()
        .map(|u| parse_unit(u, true).map(|mut o| o.functions.remove(0)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let schema = FeatureSchema::new(compute_max_depth(&funcs)).unwrap();
    let slot = schema.slot("loop_num_arith_ops").unwrap();
    let rows: Vec<Example> = funcs
        .iter()
        .map(|f| {
            let v = extract(f, &schema).unwrap();
            let label = if v.values[slot] <= 2.0 { Label::Easy } else { Label::Hard };
            Example {
                id: f.name().to_string(),
                values: v.values,
                label,
            }
        })
        .collect();
    let easy = rows.iter().filter(|r| r.label == Label::Easy).count();
    let params = ForestParams {
        n_trees: 25,
        rng_seed: 4,
        ..ForestParams::default()
    };
    let cv = cross_validate(&rows, schema, &params, 5, Execution::Auto).map_err(|e| e.to_string())?;
    ensure(cv.mean_accuracy >= 0.95, || {
        format!("5-fold accuracy {:.4} < 0.95 ({easy}/400 easy)", cv.mean_accuracy)
    })?;
    Ok(Verdict::Pass(format!(
        "5-fold accuracy {:.4} >= 0.95 ({easy}/400 easy)",
        cv.mean_accuracy
    )))
}

fn agilecc(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_agilecc"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.code() == Some(0), || {
        format!(
            "`agilecc {}` exited with {:?}: {}",
            args.join(" "),
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        )
    })
}

/// Fake timings that make `loop_num_arith_ops <= 2` the Easy rule.
fn planted_timings(manifest: &Path) -> Result<String, String> {
    let m = CorpusManifest::load(manifest).map_err(|e| e.to_string())?;
    let slot = m.header.schema.slot("loop_num_arith_ops").unwrap();
    let mut table = String::from("function,t_basic,t_aggr\n");
    for r in &m.rows {
        let aggr = if r.features[slot] <= 2.0 { 0.9 } else { 0.5 };
        table.push_str(&format!("{},1.0,{aggr}\n", r.function_id));
    }
    Ok(table)
}

// AC5
fn determinism() -> Result<Verdict, String> {
    let d = TempDir::new().map_err(|e| e.to_string())?;
    let p = d.path();
    agilecc(p, &["gen", "--n", "60", "--seed", "8", "--out", "corpus"])?;
    agilecc(p, &["extract", "corpus", "--fit-schema", "--out", "f.jsonl"])?;
    std::fs::write(p.join("t.csv"), planted_timings(&p.join("f.jsonl"))?).map_err(|e| e.to_string())?;
    agilecc(p, &["label", "f.jsonl", "--fake-timer", "t.csv", "--out", "l.jsonl"])?;
    let runs = [("a.json", "1"), ("b.json", "1"), ("c.json", "4"), ("d.json", "4")];
    for (out, jobs) in runs {
        agilecc(p, &["train", "l.jsonl", "--seed", "17", "--jobs", jobs, "--out", out])?;
    }
    let first = std::fs::read(p.join("a.json")).map_err(|e| e.to_string())?;
    for (out, jobs) in &runs[1..] {
        let other = std::fs::read(p.join(out)).map_err(|e| e.to_string())?;
        ensure(other == first, || format!("{out} (jobs {jobs}) differs from a.json"))?;
    }
    Ok(Verdict::Pass(format!("4 model files byte-identical ({} bytes)", first.len())))
}

// AC6
fn export_fidelity() -> Result<Verdict, String> {
    let cfg = GenConfig {
        seed: 6,
        n_functions: 150,
        ..GenConfig::default()
    };
    let funcs: Vec<_> = generate(&cfg, Execution::Auto)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|u| parse_unit(u, true).map(|mut o| o.functions.remove(0)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let schema = FeatureSchema::new(compute_max_depth(&funcs)).unwrap();
    let slot = schema.slot("loop_num_arith_ops").unwrap();
    let rows: Vec<Example> = funcs
        .iter()
        .map(|f| {
            let v = extract(f, &schema).unwrap();
            let label = if v.values[slot] <= 2.0 { Label::Easy } else { Label::Hard };
            Example {
                id: f.name().into(),
                values: v.values,
                label,
            }
        })
        .collect();
    let model = RandomForest::train(&rows, schema, &ForestParams::default(), "", Execution::Auto)
        .map_err(|e| e.to_string())?;
    let code = export_decision_code(&model);
    let out = parse_unit(&SourceUnit::new("model.c", code), true).map_err(|e| e.to_string())?;
    let def = &out.functions[0].def;
    let w = schema.width();
    // Sample around the training data so most trees split both ways.
    let maxima: Vec<f64> = (0..w)
        .map(|j| rows.iter().map(|r| r.values[j]).fold(0.0, f64::max) + 1.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut easy = 0;
    for k in 0..1000 {
        let x: Vec<f64> = maxima.iter().map(|m| rng.random_range(0.0..*m)).collect();
        let mut args = [Arg::Array(Array::from_f64(vec![w], &x))];
        let got = Evaluator::new(10_000_000).call(def, &mut args).map_err(|e| e.to_string())?;
        let want = model.predict_values(&x).map_err(|e| e.to_string())?.label;
        easy += (want == Label::Easy) as usize;
        ensure(got == Some(Value::Int((want == Label::Easy) as i64)), || {
            format!("vector {k}: exported code returned {got:?}, predict says {want}")
        })?;
    }
    Ok(Verdict::Pass(format!("1000/1000 agree ({easy} easy)")))
}

// AC7
fn hermetic_pipeline() -> Result<Verdict, String> {
    let d = TempDir::new().map_err(|e| e.to_string())?;
    let p = d.path();
    agilecc(p, &["gen", "--n", "40", "--seed", "7", "--out", "corpus"])?;
    agilecc(p, &["extract", "corpus", "--fit-schema", "--out", "f.jsonl"])?;
    std::fs::write(p.join("t.csv"), planted_timings(&p.join("f.jsonl"))?).map_err(|e| e.to_string())?;
    agilecc(p, &["label", "f.jsonl", "--fake-timer", "t.csv", "--out", "l.jsonl"])?;
    agilecc(p, &["train", "l.jsonl", "--out", "model.json"])?;
    agilecc(p, &["eval", "l.jsonl", "--cv", "5", "--out", "cv.json"])?;
    agilecc(p, &["classify", "corpus", "--model", "model.json", "--out", "report.json"])?;
    let text = std::fs::read_to_string(p.join("report.json")).map_err(|e| e.to_string())?;
    let report: ClassificationReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    report.validate()?;
    let s = report.summary;
    ensure(report.rows.len() == 40 && s.quarantined == 0, || {
        format!("{} rows, {} quarantined", report.rows.len(), s.quarantined)
    })?;
    Ok(Verdict::Pass(format!("6 stages exit 0; report: {} easy, {} hard", s.easy, s.hard)))
}

fn have_compiler() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

// AC8
fn real_compiler() -> Result<Verdict, String> {
    if std::env::var_os("AGILECC_SKIP_CC").is_some() {
        return Ok(Verdict::Skip("AGILECC_SKIP_CC is set".into()));
    }
    if !have_compiler() {
        return Ok(Verdict::Skip("no `cc` on PATH".into()));
    }
    let f = parse_unit(&SourceUnit::new("fw.c", FLOYD), true)
        .map_err(|e| e.to_string())?
        .functions
        .remove(0);
    let cfg = LabelerConfig {
        array_extent: 512,
        repetitions: 3,
        min_runtime_s: 0.05,
        ..LabelerConfig::default()
    };
    let d = TempDir::new().map_err(|e| e.to_string())?;
    let src = d.path().join("driver.c");
    std::fs::write(&src, synthesize_driver(&f, &cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let basic = compile_variant(&src, &cfg.flags_basic, &cfg, &d.path().join("basic")).map_err(|e| e.to_string())?;
    let aggr = compile_variant(&src, &cfg.flags_aggr, &cfg, &d.path().join("aggr")).map_err(|e| e.to_string())?;
    let mb = measure(&basic, &cfg).map_err(|e| e.to_string())?;
    let ma = measure(&aggr, &cfg).map_err(|e| e.to_string())?;
    ensure(mb.checksum == ma.checksum, || {
        format!("checksums differ: {} vs {}", mb.checksum, ma.checksum)
    })?;
    let rec = agilecc_core::labeler::TimingRecord::from_samples(mb.samples, ma.samples).map_err(|e| e.to_string())?;
    ensure(rec.ratio.is_finite() && rec.ratio > 0.0, || format!("ratio {}", rec.ratio))?;
    let label = label_from_ratio(rec.t_basic, rec.t_aggr, cfg.delta).map_err(|e| e.to_string())?;
    Ok(Verdict::Pass(format!(
        "checksum {} at both levels, ratio {:.3} ({label}, not asserted)",
        mb.checksum, rec.ratio
    )))
}

fn main() {
    let criteria: [(&str, &str, Duration, Check); 8] = [
        ("AC1", "golden Floyd-Warshall features", Duration::from_secs(1), golden_example),
        ("AC2", "delta rule table", Duration::from_secs(1), delta_rule_table),
        ("AC3", "forest vote and split oracles", Duration::from_secs(10), forest_oracles),
        ("AC4", "learnability of a planted rule", Duration::from_secs(30), learnability),
        ("AC5", "training determinism across runs and jobs", Duration::from_secs(60), determinism),
        ("AC6", "exported decision code fidelity", Duration::from_secs(30), export_fidelity),
        ("AC7", "hermetic pipeline", Duration::from_secs(60), hermetic_pipeline),
        ("AC8", "real compiler labeling", Duration::from_secs(120), real_compiler),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let took = start.elapsed();
        let timing = format!("{:.2}s, limit {}s", took.as_secs_f64(), limit.as_secs());
        match result {
            Ok(_) if took > limit => {
                failed += 1;
                println!("FAIL {id} {name}: over time ({timing})");
            }
            Ok(Verdict::Pass(detail)) => println!("PASS {id} {name}: {detail} ({timing})"),
            Ok(Verdict::Skip(why)) => println!("SKIP {id} {name}: {why}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {id} {name}: {e} ({timing})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}
