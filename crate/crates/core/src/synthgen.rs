//! Random training kernels in the supported grammar.
//!
//! Every function takes `float` arrays of shape `[N][N]` and `float` scalars,
//! and consists of perfect loop nests over counters `i0, i1, ...` starting at
//! 0 with stride 1 and a bound that is either `N` or a literal no larger than
//! `niter_range[1]`. Subscripts are bare loop counters, so accesses stay in
//! bounds whenever the driver's extent is at least `niter_range[1]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::features::{compute_max_depth, extract, FeatureError, FeatureSchema};
use crate::parser::ast::*;
use crate::parser::print::function_to_string;
use crate::parser::{parse_unit, FunctionUnit, ParseError, SourceUnit};

/// Symbolic bound used by generated loops and array extents.
pub const EXTENT_NAME: &str = "N";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("`{path}` does not hold exactly one function")]
    NotOneFunction { path: String },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_functions: usize,
    /// Loop nest depth, inclusive.
    pub depth_range: [usize; 2],
    /// Literal trip counts, inclusive.
    pub niter_range: [u64; 2],
    /// Probability that a loop is bounded by `N`.
    pub p_symbolic: f64,
    /// Statements per innermost loop body.
    pub ops_range: [usize; 2],
    /// Probability that a statement is a conditional expression.
    pub p_branch: f64,
    pub n_arrays_range: [usize; 2],
    pub n_scalars_range: [usize; 2],
    pub nests_range: [usize; 2],
    /// Statements outside every loop.
    pub nonloop_range: [usize; 2],
    /// Binary operators per right-hand side.
    pub expr_ops_range: [usize; 2],
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_functions: 100,
            depth_range: [1, 3],
            niter_range: [4, 64],
            p_symbolic: 0.5,
            ops_range: [1, 4],
            p_branch: 0.2,
            n_arrays_range: [1, 3],
            n_scalars_range: [0, 2],
            nests_range: [1, 2],
            nonloop_range: [0, 2],
            expr_ops_range: [0, 4],
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Config(m));
        let ranges: [(&str, [u64; 2]); 8] = [
            ("depth_range", self.depth_range.map(|v| v as u64)),
            ("niter_range", self.niter_range),
            ("ops_range", self.ops_range.map(|v| v as u64)),
            ("n_arrays_range", self.n_arrays_range.map(|v| v as u64)),
            ("n_scalars_range", self.n_scalars_range.map(|v| v as u64)),
            ("nests_range", self.nests_range.map(|v| v as u64)),
            ("nonloop_range", self.nonloop_range.map(|v| v as u64)),
            ("expr_ops_range", self.expr_ops_range.map(|v| v as u64)),
        ];
        for (name, [lo, hi]) in ranges {
            if lo > hi {
                return bad(format!("{name} is empty ([{lo}, {hi}])"));
            }
        }
        for (name, p) in [("p_symbolic", self.p_symbolic), ("p_branch", self.p_branch)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n_functions == 0 {
            return bad("n_functions must be positive".into());
        }
        if self.depth_range[0] == 0 {
            return bad("depth_range must start at 1 or more".into());
        }
        if self.niter_range[0] == 0 {
            return bad("niter_range must start at 1 or more".into());
        }
        if self.n_arrays_range[0] == 0 {
            return bad("every function needs at least one array".into());
        }
        if self.ops_range[1] == 0 && self.p_branch > 0.0 {
            return bad("p_branch > 0 needs room for statements (ops_range max is 0)".into());
        }
        if self.depth_range[1] > 16 || self.n_arrays_range[1] > 64 || self.n_scalars_range[1] > 64 {
            return bad("depth, array and scalar budgets are capped at 16, 64 and 64".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON rendering.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

struct Kernel<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    arrays: Vec<String>,
    scalars: Vec<String>,
}

const LITERALS: [&str; 6] = ["0.5", "1.5", "2.0", "0.25", "3.0", "0.75"];

impl Kernel<'_> {
    fn pick<T: Clone>(&mut self, items: &[T]) -> T {
        items[self.rng.random_range(0..items.len())].clone()
    }

    fn in_range(&mut self, r: [usize; 2]) -> usize {
        self.rng.random_range(r[0]..=r[1])
    }

    fn access(&mut self, counters: &[String]) -> Expr {
        let array = self.pick(&self.arrays.clone());
        let indices = if counters.is_empty() {
            vec![Expr::Int(0), Expr::Int(0)]
        } else {
            (0..2).map(|_| Expr::var(self.pick(counters))).collect()
        };
        Expr::Index { array, indices }
    }

    fn leaf(&mut self, counters: &[String]) -> Expr {
        match self.rng.random_range(0..10) {
            0..=5 => self.access(counters),
            6..=7 if !self.scalars.is_empty() => Expr::var(self.pick(&self.scalars.clone())),
            _ => Expr::Float(self.pick(&LITERALS).to_string()),
        }
    }

    fn expr(&mut self, counters: &[String], ops: usize) -> Expr {
        if ops == 0 {
            return self.leaf(counters);
        }
        let left_ops = self.rng.random_range(0..ops);
        let lhs = self.expr(counters, left_ops);
        let op = self.pick(&[BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]);
        if op == BinaryOp::Div {
            // Divisors are at least 1: (d * d + 1.0).
            let d = self.leaf(counters);
            let divisor = Expr::binary(
                BinaryOp::Add,
                Expr::binary(BinaryOp::Mul, d.clone(), d),
                Expr::Float("1.0".into()),
            );
            return Expr::binary(op, lhs, divisor);
        }
        let rhs = self.expr(counters, ops - 1 - left_ops);
        Expr::binary(op, lhs, rhs)
    }

    fn statement(&mut self, counters: &[String]) -> Stmt {
        let target = self.access(counters);
        let ops = self.in_range(self.cfg.expr_ops_range);
        let value = if self.rng.random_bool(self.cfg.p_branch) {
            let rel = self.pick(&[BinaryOp::Lt, BinaryOp::Gt, BinaryOp::Le]);
            let cond = Expr::binary(rel, self.leaf(counters), self.leaf(counters));
            Expr::Ternary {
                cond: Box::new(cond),
                then: Box::new(self.expr(counters, ops)),
                otherwise: Box::new(self.leaf(counters)),
            }
        } else {
            self.expr(counters, ops)
        };
        let op = if self.rng.random_bool(0.25) {
            AssignOp::Compound(BinaryOp::Add)
        } else {
            AssignOp::Set
        };
        Stmt::Expr(Expr::Assign {
            op,
            target: Box::new(target),
            value: Box::new(value),
        })
    }

    fn nest(&mut self, depth: usize) -> Stmt {
        let counters: Vec<String> = (0..depth).map(|d| format!("i{d}")).collect();
        let n_stmts = self.in_range(self.cfg.ops_range);
        let body: Vec<Stmt> = (0..n_stmts).map(|_| self.statement(&counters)).collect();
        let mut stmt = Stmt::Block(body);
        for c in counters.iter().rev() {
            let bound = if self.rng.random_bool(self.cfg.p_symbolic) {
                Expr::var(EXTENT_NAME)
            } else {
                Expr::Int(self.rng.random_range(self.cfg.niter_range[0]..=self.cfg.niter_range[1]))
            };
            stmt = Stmt::For {
                init: Some(ForInit::Expr(Expr::assign(Expr::var(c), Expr::Int(0)))),
                cond: Some(Expr::binary(BinaryOp::Lt, Expr::var(c), bound)),
                step: Some(Expr::Step {
                    increment: true,
                    prefix: false,
                    target: Box::new(Expr::var(c)),
                }),
                body: Box::new(stmt),
            };
        }
        stmt
    }

    fn function(&mut self, name: String) -> FunctionDef {
        let n_arrays = self.in_range(self.cfg.n_arrays_range);
        let n_scalars = self.in_range(self.cfg.n_scalars_range);
        self.arrays = (0..n_arrays).map(|k| format!("a{k}")).collect();
        self.scalars = (0..n_scalars).map(|k| format!("s{k}")).collect();
        let mut params: Vec<Param> = self
            .arrays
            .iter()
            .map(|a| Param {
                name: a.clone(),
                elem: ScalarType::Float,
                dims: vec![Dim::Symbol(EXTENT_NAME.into()); 2],
            })
            .collect();
        params.extend(self.scalars.iter().map(|s| Param {
            name: s.clone(),
            elem: ScalarType::Float,
            dims: Vec::new(),
        }));

        let n_nests = self.in_range(self.cfg.nests_range);
        let depths: Vec<usize> = (0..n_nests).map(|_| self.in_range(self.cfg.depth_range)).collect();
        let mut body = Vec::new();
        if let Some(&deepest) = depths.iter().max() {
            body.push(Stmt::Decl(Decl {
                ty: ScalarType::Int,
                vars: (0..deepest)
                    .map(|d| Declarator {
                        name: format!("i{d}"),
                        dims: Vec::new(),
                        init: None,
                    })
                    .collect(),
            }));
        }
        let n_nonloop = self.in_range(self.cfg.nonloop_range);
        // Straight-line statements go before, between, or after the nests.
        let mut slots: Vec<usize> = (0..n_nonloop).map(|_| self.rng.random_range(0..=n_nests)).collect();
        slots.sort_unstable();
        let mut next = slots.into_iter().peekable();
        for (k, depth) in depths.iter().enumerate() {
            while next.next_if(|s| *s == k).is_some() {
                body.push(self.statement(&[]));
            }
            body.push(self.nest(*depth));
        }
        for _ in next {
            body.push(self.statement(&[]));
        }
        FunctionDef {
            ret: ReturnType::Void,
            name,
            params,
            body,
        }
    }
}

/// File name of generated function `index`.
pub fn file_name(index: usize) -> String {
    format!("kernel_{index:05}.c")
}

/// Generates one function per unit. Function `i` draws from stream `i` of
/// the seed, so the output does not depend on `exec`.
pub fn generate(cfg: &GenConfig, exec: Execution) -> Result<Vec<SourceUnit>, GenError> {
    cfg.validate()?;
    Ok(exec.map_indexed(cfg.n_functions, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mut k = Kernel {
            cfg,
            rng,
            arrays: Vec::new(),
            scalars: Vec::new(),
        };
        let def = k.function(format!("kernel_{i:05}"));
        SourceUnit::new(file_name(i), function_to_string(&def))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub function: String,
    pub seed: u64,
    pub stream: u64,
}

/// Index written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub config_hash: String,
    pub config: GenConfig,
    pub files: Vec<CorpusEntry>,
}

pub const CORPUS_INDEX: &str = "corpus.json";

/// Writes each unit to `dir` plus a `corpus.json` index.
pub fn write_corpus(dir: &Path, cfg: &GenConfig, units: &[SourceUnit]) -> Result<CorpusIndex, GenError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        std::fs::write(dir.join(&u.path), &u.text)?;
        files.push(CorpusEntry {
            file: u.path.clone(),
            function: format!("kernel_{i:05}"),
            seed: cfg.seed,
            stream: i as u64,
        });
    }
    let index = CorpusIndex {
        config_hash: cfg.digest(),
        config: cfg.clone(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
    text.push('\n');
    std::fs::write(dir.join(CORPUS_INDEX), text)?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub name: String,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub schema: FeatureSchema,
    pub rows: usize,
    pub slots: Vec<SlotStats>,
}

/// Per-slot min/mean/max over a corpus of one-function units.
pub fn feature_census(corpus: &[SourceUnit], exec: Execution) -> Result<Census, GenError> {
    let parsed = exec.map(corpus, |u| -> Result<FunctionUnit, GenError> {
        let mut out = parse_unit(u, true)?;
        if out.functions.len() != 1 {
            return Err(GenError::NotOneFunction { path: u.path.clone() });
        }
        Ok(out.functions.remove(0))
    });
    let funcs = parsed.into_iter().collect::<Result<Vec<_>, _>>()?;
    let schema = FeatureSchema::new(compute_max_depth(&funcs))?;
    let vectors = funcs
        .iter()
        .map(|f| extract(f, &schema))
        .collect::<Result<Vec<_>, _>>()?;
    let slots = schema
        .layout()
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let col = vectors.iter().map(|v| v.values[j]);
            let n = vectors.len().max(1) as f64;
            SlotStats {
                name,
                min: col.clone().fold(f64::INFINITY, f64::min),
                mean: col.clone().sum::<f64>() / n,
                max: col.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(Census {
        schema,
        rows: vectors.len(),
        slots,
    })
}
