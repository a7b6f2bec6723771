//! Compiling and running drivers.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use tempfile::TempDir;
use thiserror::Error;

use super::{synthesize_driver, LabelItem, LabelerConfig, TimingSource};

/// Measured runs never overlap, even across `CompilerTiming` instances.
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Error)]
pub enum RunError {
    #[error("failed to start `{program}`: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("`{program}` timed out after {seconds} s")]
    Timeout { program: String, seconds: f64 },
    #[error("`{program}` exited with {status}: {stderr}")]
    Failed {
        program: String,
        status: String,
        stderr: String,
    },
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("bad compiler command: {0}")]
    Template(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("driver output lacks `{0}`")]
    Output(&'static str),
    #[error("checksum changed between runs ({first} vs {other})")]
    UnstableChecksum { first: String, other: String },
}

/// Runs `cmd` to completion and returns its stdout, killing it after `timeout`.
pub fn run_with_timeout(mut cmd: Command, timeout: Duration) -> Result<String, RunError> {
    let program = cmd.get_program().to_string_lossy().into_owned();
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| RunError::Spawn {
            program: program.clone(),
            source,
        })?;
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped stdout")));
    let err = drain(Box::new(child.stderr.take().expect("piped stderr")));

    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunError::Timeout {
                    program,
                    seconds: timeout.as_secs_f64(),
                });
            }
            Ok(None) => thread::sleep(Duration::from_millis(2)),
            Err(source) => return Err(RunError::Spawn { program, source }),
        }
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    if !status.success() {
        return Err(RunError::Failed {
            program,
            status: status.to_string(),
            stderr: stderr.trim().chars().take(2000).collect(),
        });
    }
    Ok(stdout)
}

/// Compiles `source` with `flags` into `output`.
pub fn compile_variant(
    source: &Path,
    flags: &[String],
    cfg: &LabelerConfig,
    output: &Path,
) -> Result<PathBuf, CompileError> {
    let mut argv: Vec<String> = Vec::new();
    for tok in cfg.compiler_cmd.split_whitespace() {
        match tok {
            "{flags}" => argv.extend(flags.iter().cloned()),
            _ => argv.push(
                tok.replace("{source}", &source.to_string_lossy())
                    .replace("{output}", &output.to_string_lossy()),
            ),
        }
    }
    if !cfg.compiler_cmd.contains("{source}") || !cfg.compiler_cmd.contains("{output}") {
        return Err(CompileError::Template(
            "compiler_cmd must mention {source} and {output}".into(),
        ));
    }
    let Some((prog, args)) = argv.split_first() else {
        return Err(CompileError::Template("compiler_cmd is empty".into()));
    };
    let mut cmd = Command::new(prog);
    cmd.args(args);
    run_with_timeout(cmd, Duration::from_secs_f64(cfg.timeout_s))?;
    Ok(output.to_path_buf())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Seconds per call, one per repetition.
    pub samples: Vec<f64>,
    pub checksum: String,
}

fn field<'a>(stdout: &'a str, key: &'static str) -> Result<&'a str, MeasureError> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
        .map(str::trim)
        .ok_or(MeasureError::Output(key))
}

/// One warm-up run, then `cfg.repetitions` timed runs of `binary`.
pub fn measure(binary: &Path, cfg: &LabelerConfig) -> Result<Measurement, MeasureError> {
    let timeout = Duration::from_secs_f64(cfg.timeout_s);
    let run = || -> Result<(String, f64), MeasureError> {
        let stdout = run_with_timeout(Command::new(binary), timeout)?;
        let checksum = field(&stdout, "checksum")?.to_string();
        let t = field(&stdout, "time_per_call")?
            .parse::<f64>()
            .map_err(|_| MeasureError::Output("time_per_call"))?;
        Ok((checksum, t))
    };
    let (checksum, _) = run()?;
    let mut samples = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let (c, t) = run()?;
        if c != checksum {
            return Err(MeasureError::UnstableChecksum {
                first: checksum,
                other: c,
            });
        }
        samples.push(t);
    }
    Ok(Measurement { samples, checksum })
}

/// Both builds of one driver.
pub struct CompiledPair {
    _dir: TempDir,
    basic: PathBuf,
    aggr: PathBuf,
}

/// Times drivers built with a real compiler.
#[derive(Debug, Clone, Default)]
pub struct CompilerTiming {
    /// Kept for inspection when set.
    pub keep_dir: Option<PathBuf>,
}

impl CompilerTiming {
    pub fn new() -> Self {
        Self::default()
    }
}

impl TimingSource for CompilerTiming {
    type Prepared = CompiledPair;

    fn prepare(&self, item: &LabelItem, cfg: &LabelerConfig) -> Result<CompiledPair, String> {
        let unit = item
            .unit
            .as_ref()
            .ok_or_else(|| format!("no source for `{}`", item.function_id))?;
        let driver = synthesize_driver(unit, cfg).map_err(|e| e.to_string())?;
        let dir = tempfile::Builder::new()
            .prefix("agilecc-")
            .tempdir()
            .map_err(|e| format!("temp dir: {e}"))?;
        let source = dir.path().join("driver.c");
        std::fs::write(&source, &driver).map_err(|e| format!("write driver: {e}"))?;
        if let Some(keep) = &self.keep_dir {
            let name = item.function_id.replace(['/', ':', '\\'], "_");
            let _ = std::fs::create_dir_all(keep);
            let _ = std::fs::write(keep.join(format!("{name}.c")), &driver);
        }
        let basic = compile_variant(&source, &cfg.flags_basic, cfg, &dir.path().join("basic"))
            .map_err(|e| format!("basic build: {e}"))?;
        let aggr = compile_variant(&source, &cfg.flags_aggr, cfg, &dir.path().join("aggr"))
            .map_err(|e| format!("aggressive build: {e}"))?;
        Ok(CompiledPair {
            _dir: dir,
            basic,
            aggr,
        })
    }

    fn measure(&self, pair: CompiledPair, cfg: &LabelerConfig) -> Result<(Vec<f64>, Vec<f64>), String> {
        let _guard = MEASURE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let b = measure(&pair.basic, cfg).map_err(|e| format!("basic run: {e}"))?;
        let a = measure(&pair.aggr, cfg).map_err(|e| format!("aggressive run: {e}"))?;
        if b.checksum != a.checksum {
            return Err(format!(
                "checksum mismatch between builds ({} vs {})",
                b.checksum, a.checksum
            ));
        }
        Ok((b.samples, a.samples))
    }
}
