use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agilecc_cli::ClassificationReport;
use agilecc_core::forest::{ForestParams, RandomForest};
use agilecc_core::manifest::CorpusManifest;
use agilecc_core::{Execution, Label};
use tempfile::TempDir;

const FLOYD: &str = include_str!("data/floyd_warshall.c");

fn agilecc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agilecc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// `gen -> extract -> label --fake-timer` in `dir`; labels follow `easy`.
fn labeled_corpus(dir: &Path, n: usize, easy: impl Fn(usize) -> bool) {
    assert_eq!(code(&agilecc(dir, &["gen", "--n", &n.to_string(), "--seed", "5", "--out", "corpus"])), 0);
    assert_eq!(code(&agilecc(dir, &["extract", "corpus", "--out", "features.jsonl"])), 0);
    let mut table = String::from("function,t_basic,t_aggr\n");
    for i in 0..n {
        let aggr = if easy(i) { 0.95 } else { 0.4 };
        table.push_str(&format!("kernel_{i:05},1.0,{aggr}\n"));
    }
    write(dir, "times.csv", &table);
    let o = agilecc(dir, &["label", "features.jsonl", "--fake-timer", "times.csv", "--out", "labeled.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn gen_writes_files_and_index() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&agilecc(d.path(), &["gen", "--n", "10", "--out", "a"])), 0);
    assert_eq!(code(&agilecc(d.path(), &["gen", "--n", "10", "--out", "b"])), 0);
    let files: Vec<_> = std::fs::read_dir(d.path().join("a"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "c"))
        .collect();
    assert_eq!(files.len(), 10);
    assert_eq!(read(d.path(), "a/corpus.json"), read(d.path(), "b/corpus.json"));
    assert_eq!(read(d.path(), "a/kernel_00007.c"), read(d.path(), "b/kernel_00007.c"));
}

#[test]
fn gen_rejects_bad_config() {
    let d = TempDir::new().unwrap();
    write(d.path(), "bad.toml", "[gen]\nops_range = [0, 0]\np_branch = 1.0\n");
    let o = agilecc(d.path(), &["--config", "bad.toml", "gen", "--out", "c"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("p_branch"), "{}", stderr(&o));
    write(d.path(), "typo.toml", "[gen]\nseeed = 1\n");
    assert_eq!(code(&agilecc(d.path(), &["--config", "typo.toml", "gen", "--out", "c"])), 1);
}

#[test]
fn extract_floyd_warshall_golden_vector() {
    let d = TempDir::new().unwrap();
    write(d.path(), "fw.c", FLOYD);
    assert_eq!(code(&agilecc(d.path(), &["extract", "fw.c", "--max-depth", "3", "--out", "f.jsonl"])), 0);
    let m = CorpusManifest::load(&d.path().join("f.jsonl")).unwrap();
    assert_eq!(m.rows.len(), 1);
    assert_eq!(m.rows[0].function_id, "fw.c:floyd_warshall");
    let want = [
        0.0, 0.0, 0.0, // niter_known
        1.0, 1.0, 1.0, // niter_symbolic
        1.0, 1.0, 1.0, 1.0, 0.0, // loop counts
        0.0, 0.0, 0.0, 0.0, 0.0, // non-loop counts
    ];
    assert_eq!(m.rows[0].features, want);
}

#[test]
fn extract_empty_function_and_too_deep_nest() {
    let d = TempDir::new().unwrap();
    write(d.path(), "e.c", "void nothing() {}\n");
    assert_eq!(code(&agilecc(d.path(), &["extract", "e.c", "--out", "e.jsonl"])), 0);
    let m = CorpusManifest::load(&d.path().join("e.jsonl")).unwrap();
    assert_eq!(m.header.schema.max_depth(), 1);
    assert!(m.rows[0].features.iter().all(|v| *v == 0.0));

    write(d.path(), "fw.c", FLOYD);
    let o = agilecc(d.path(), &["extract", "fw.c", "--max-depth", "2"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("floyd_warshall"), "{}", stderr(&o));
}

#[test]
fn extract_reports_diagnostics() {
    let d = TempDir::new().unwrap();
    write(d.path(), "m.c", "void ok(float a[4]) { a[0] = 1.0; }\nvoid bad(float *p) { }\n");
    let o = agilecc(d.path(), &["extract", "m.c", "--out", "m.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"kind\":\"unsupported\""), "{}", stderr(&o));
    assert_eq!(CorpusManifest::load(&d.path().join("m.jsonl")).unwrap().rows.len(), 1);
    assert_eq!(code(&agilecc(d.path(), &["--strict", "extract", "m.c"])), 1);
}

#[test]
fn label_with_fake_timer() {
    let d = TempDir::new().unwrap();
    write(d.path(), "fw.c", FLOYD);
    assert_eq!(code(&agilecc(d.path(), &["extract", "fw.c", "--out", "f.jsonl"])), 0);
    write(d.path(), "t.csv", "floyd_warshall,10,9\n");
    let o = agilecc(d.path(), &["label", "f.jsonl", "--fake-timer", "t.csv", "--delta", "0.7", "--out", "l.jsonl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = CorpusManifest::load(&d.path().join("l.jsonl")).unwrap();
    assert_eq!(m.rows[0].label, Some(Label::Easy));
    assert_eq!(m.rows[0].timing.as_ref().unwrap().ratio, 0.9);
    assert_eq!(m.header.labeler.as_ref().unwrap().delta, 0.7);
    assert!(m.header.config_hashes.contains_key("labeler"));

    // 10 -> 7.5 is Hard at 0.8 and Easy at 0.7.
    write(d.path(), "t2.csv", "floyd_warshall,10,7.5\n");
    assert_eq!(code(&agilecc(d.path(), &["label", "f.jsonl", "--fake-timer", "t2.csv", "--out", "a.jsonl"])), 0);
    assert_eq!(CorpusManifest::load(&d.path().join("a.jsonl")).unwrap().rows[0].label, Some(Label::Hard));
}

#[test]
fn label_quarantines_missing_timings_and_failed_builds() {
    let d = TempDir::new().unwrap();
    write(d.path(), "fw.c", FLOYD);
    assert_eq!(code(&agilecc(d.path(), &["extract", "fw.c", "--out", "f.jsonl"])), 0);
    write(d.path(), "t.csv", "other,1,1\n");
    let o = agilecc(d.path(), &["label", "f.jsonl", "--fake-timer", "t.csv", "--out", "q.jsonl"]);
    assert_eq!(code(&o), 2);
    let m = CorpusManifest::load(&d.path().join("q.jsonl")).unwrap();
    assert!(m.rows[0].quarantine_reason.is_some());
    assert_eq!(m.rows[0].label, None);

    write(
        d.path(),
        "cc.toml",
        "[labeler]\ncompiler_cmd = \"/nonexistent/cc {flags} -o {output} {source}\"\n",
    );
    let o = agilecc(d.path(), &["--config", "cc.toml", "label", "f.jsonl", "--out", "c.jsonl"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let m = CorpusManifest::load(&d.path().join("c.jsonl")).unwrap();
    assert!(m.rows[0].quarantine_reason.as_deref().unwrap().contains("basic build"));
}

#[test]
fn train_is_byte_identical_and_matches_in_process() {
    let d = TempDir::new().unwrap();
    labeled_corpus(d.path(), 30, |i| i % 3 == 0);
    for (out, jobs) in [("m1.json", "1"), ("m2.json", "4"), ("m3.json", "0")] {
        let o = agilecc(d.path(), &["train", "labeled.jsonl", "--seed", "9", "--jobs", jobs, "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let m1 = read(d.path(), "m1.json");
    assert_eq!(m1, read(d.path(), "m2.json"));
    assert_eq!(m1, read(d.path(), "m3.json"));

    // Files between commands carry everything the in-process pipeline uses.
    let manifest = CorpusManifest::load(&d.path().join("labeled.jsonl")).unwrap();
    let params = ForestParams {
        rng_seed: 9,
        ..ForestParams::default()
    };
    let model = RandomForest::train(
        &manifest.examples(),
        manifest.header.schema,
        &params,
        manifest.fingerprint(),
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(model.to_json(), m1);
}

#[test]
fn eval_cross_validation_and_schema_mismatch() {
    let d = TempDir::new().unwrap();
    labeled_corpus(d.path(), 50, |i| i % 2 == 0);
    let o = agilecc(d.path(), &["eval", "labeled.jsonl", "--cv", "5", "--out", "cv.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cv: serde_json::Value = serde_json::from_str(&read(d.path(), "cv.json")).unwrap();
    assert_eq!(cv["mode"], "cv");
    assert_eq!(cv["folds"].as_array().unwrap().len(), 5);
    assert!(cv["mean_accuracy"].is_f64());

    write(d.path(), "fw.c", FLOYD);
    assert_eq!(code(&agilecc(d.path(), &["extract", "fw.c", "--max-depth", "7", "--out", "wide.jsonl"])), 0);
    write(d.path(), "t.csv", "floyd_warshall,1,1\n");
    assert_eq!(
        code(&agilecc(d.path(), &["label", "wide.jsonl", "--fake-timer", "t.csv", "--out", "wl.jsonl"])),
        0
    );
    assert_eq!(code(&agilecc(d.path(), &["train", "labeled.jsonl", "--out", "m.json"])), 0);
    let o = agilecc(d.path(), &["eval", "wl.jsonl", "--model", "m.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("schema mismatch"), "{}", stderr(&o));
    let o = agilecc(d.path(), &["eval", "labeled.jsonl", "--model", "m.json", "--out", "e.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn classify_reports_every_function() {
    let d = TempDir::new().unwrap();
    labeled_corpus(d.path(), 30, |i| i % 2 == 0);
    assert_eq!(code(&agilecc(d.path(), &["train", "labeled.jsonl", "--out", "m.json"])), 0);
    write(
        d.path(),
        "three.c",
        &format!("{FLOYD}\nvoid b(float a[N][N]) {{ int i; for (i = 0; i < 8; i++) a[i][i] = a[i][i] * 2.0; }}\nfloat c(float x) {{ return x + 1.0; }}\n"),
    );
    let o = agilecc(d.path(), &["classify", "three.c", "--model", "m.json", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: ClassificationReport = serde_json::from_str(&read(d.path(), "r.json")).unwrap();
    r.validate().unwrap();
    assert_eq!(r.rows.len(), 3);
    for row in &r.rows {
        let votes = row.votes.unwrap();
        assert_eq!(votes[0] + votes[1], 25);
        let want = if row.label == Some(Label::Easy) { &r.flags_basic } else { &r.flags_aggr };
        assert_eq!(row.recommended_flags.as_ref(), Some(want));
    }

    write(d.path(), "broken.c", "void fine() {}\nvoid nope(int x) { while (x) x = x - 1; }\n");
    let o = agilecc(d.path(), &["classify", "broken.c", "--model", "m.json", "--out", "b.json"]);
    assert_eq!(code(&o), 2);
    let r: ClassificationReport = serde_json::from_str(&read(d.path(), "b.json")).unwrap();
    assert_eq!(r.summary.quarantined, 1);
    let q = r.rows.iter().find(|row| row.quarantine_reason.is_some()).unwrap();
    assert_eq!(q.function_id, "broken.c:nope");
}

#[test]
fn export_is_deterministic() {
    let d = TempDir::new().unwrap();
    labeled_corpus(d.path(), 20, |i| i % 4 == 0);
    assert_eq!(code(&agilecc(d.path(), &["train", "labeled.jsonl", "--trees", "5", "--out", "m.json"])), 0);
    let a = agilecc(d.path(), &["export", "--model", "m.json"]);
    let b = agilecc(d.path(), &["export", "--model", "m.json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("int classify_region(float x["));
}

#[test]
fn fatal_errors_exit_one() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&agilecc(d.path(), &["train", "missing.jsonl"])), 1);
    write(d.path(), "junk.json", "{\"format_version\": 1, \"sch");
    let o = agilecc(d.path(), &["export", "--model", "junk.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("model file"), "{}", stderr(&o));
}
