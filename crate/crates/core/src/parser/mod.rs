//! Front end for the supported C subset.
//!
//! The grammar covers function definitions over `int`/`float` scalars and
//! one- or two-dimensional arrays, `for` loops, `if`/`else`, the ternary
//! operator, assignments and arithmetic/relational/logical expressions.
//! Pointers, calls, `while`/`do`, `goto`, `switch` and bitwise operators are
//! reported as unsupported constructs. Preprocessor lines are ignored, so
//! macro names behave as symbolic constants.

pub mod analysis;
pub mod ast;
mod grammar;
pub mod lexer;
pub mod print;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{classify_operator, LoopNest, OpClass, OpCounts, TripCount};
pub use ast::{FunctionDef, Param, ParamTag, ReturnType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown operator `{0}`")]
pub struct UnknownOperator(pub String);

/// A source file fed to the front end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceUnit {
            path: path.into(),
            text: text.into(),
        }
    }
}

/// One parsed function together with its loop structure.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionUnit {
    pub def: FunctionDef,
    /// Source order.
    pub loop_nests: Vec<LoopNest>,
    /// Counts for statements outside every loop.
    pub nonloop_counts: OpCounts,
}

impl FunctionUnit {
    pub fn from_def(def: FunctionDef) -> Self {
        let (loop_nests, nonloop_counts) = analysis::analyze(&def);
        FunctionUnit {
            def,
            loop_nests,
            nonloop_counts,
        }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn params(&self) -> &[Param] {
        &self.def.params
    }

    pub fn max_nest_depth(&self) -> usize {
        self.loop_nests.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Source text that reparses to a structurally identical unit.
    pub fn to_source(&self) -> String {
        print::function_to_string(&self.def)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticKind {
    Lexical,
    Syntax,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub line: u32,
    pub column: u32,
    pub severity: Severity,
    pub kind: DiagnosticKind,
    /// Function the problem was found in, when its name was reached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: ", self.path, self.line, self.column)?;
        match self.severity {
            Severity::Error => write!(f, "error: ")?,
            Severity::Warning => write!(f, "warning: ")?,
        }
        write!(f, "{}", self.message)?;
        if let Some(func) = &self.function {
            write!(f, " (in `{func}`)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{0}: empty source")]
    EmptySource(String),
    #[error("{0}")]
    Rejected(Diagnostic),
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub functions: Vec<FunctionUnit>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses every function in `src`.
///
/// With `strict` the first problem aborts parsing; otherwise the offending
/// function is skipped, a diagnostic recorded, and parsing resumes after it.
pub fn parse_unit(src: &SourceUnit, strict: bool) -> Result<ParseOutput, ParseError> {
    if src.text.trim().is_empty() {
        return Err(ParseError::EmptySource(src.path.clone()));
    }
    let toks = lexer::tokenize(&src.text);
    let mut p = grammar::Parser::new(&toks);
    let mut out = ParseOutput::default();
    while !p.at_eof() {
        let start = p.position();
        let mut name = None;
        match p.function(&mut name) {
            Ok(def) => out.functions.push(FunctionUnit::from_def(def)),
            Err(e) => {
                let diag = Diagnostic {
                    path: src.path.clone(),
                    line: e.pos.line,
                    column: e.pos.column,
                    severity: Severity::Error,
                    kind: e.kind,
                    function: name,
                    message: e.message,
                };
                if strict {
                    return Err(ParseError::Rejected(diag));
                }
                out.diagnostics.push(diag);
                p.recover_from(start);
            }
        }
    }
    Ok(out)
}

/// Parses a single expression; used by tests and the evaluator.
pub fn parse_expr(text: &str) -> Result<ast::Expr, String> {
    let toks = lexer::tokenize(text);
    let mut p = grammar::Parser::new(&toks);
    let e = p
        .expr()
        .map_err(|e| format!("{}:{}: {}", e.pos.line, e.pos.column, e.message))?;
    if !p.at_eof() {
        return Err("trailing input after expression".into());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FLOYD_WARSHALL: &str = r#"void floyd_warshall(int n, float path[N][N]) {
  int i, j, k;
  for (k = 0; k < N; k++)
    {
      for(i = 0; i < N; i++) {
        for (j = 0; j < N; j++) {
          path[i][j] = path[i][j] < path[i][k] + path[k][j] ? path[i][j]
          : path[i][k] + path[k][j];
     }
    }
  }
}
"#;

    fn parse_one(text: &str) -> FunctionUnit {
        let out = parse_unit(&SourceUnit::new("t.c", text), true).unwrap();
        assert_eq!(out.functions.len(), 1);
        out.functions.into_iter().next().unwrap()
    }

    fn counts(l: u64, a: u64, b: u64, arr: u64, s: u64) -> OpCounts {
        OpCounts {
            logical_ops: l,
            arith_ops: a,
            branches: b,
            arrays: arr,
            scalars: s,
        }
    }

    #[test]
    fn floyd_warshall_structure() {
        let f = parse_one(FLOYD_WARSHALL);
        assert_eq!(f.name(), "floyd_warshall");
        assert_eq!(f.params()[0].tag(), ParamTag::ScalarInt);
        assert_eq!(f.params()[1].tag(), ParamTag::Array2d);
        assert_eq!(f.loop_nests.len(), 1);
        let nest = &f.loop_nests[0];
        assert_eq!(nest.depth, 3);
        assert_eq!(nest.trip_counts, vec![TripCount::Symbolic; 3]);
        assert_eq!(nest.body_counts, counts(1, 1, 1, 1, 0));
        assert_eq!(f.nonloop_counts, OpCounts::default());
    }

    #[test]
    fn empty_function() {
        let f = parse_one("void f(){}");
        assert!(f.loop_nests.is_empty());
        assert_eq!(f.nonloop_counts, OpCounts::default());
    }

    #[test]
    fn loop_and_straight_line_counts() {
        let f = parse_one(
            "void g(int n, float a[N]){ for(i=0;i<10;i++) a[i]=a[i]+1.0; s = s*2; }",
        );
        assert_eq!(f.loop_nests.len(), 1);
        let nest = &f.loop_nests[0];
        assert_eq!(nest.depth, 1);
        assert_eq!(nest.trip_counts, vec![TripCount::Known(10)]);
        assert_eq!(nest.body_counts, counts(0, 1, 0, 1, 0));
        assert_eq!(f.nonloop_counts, counts(0, 1, 0, 0, 1));
    }

    #[test]
    fn distinct_array_names() {
        let f = parse_one(
            "void f(float path[N][N]) { for (i = 0; i < N; i++) { path[i][0] = path[0][i]; path[i][1] = path[1][i]; path[i][i] = 0.0; } }",
        );
        assert_eq!(f.loop_nests[0].body_counts.arrays, 1);
    }

    #[test]
    fn headers_contribute_nothing() {
        let f = parse_one(
            "void f(int n, int m) { for (i = n * 2 + m; i < n * m - 3 && i != 7; i += m * 2) ; }",
        );
        assert_eq!(f.loop_nests[0].body_counts, OpCounts::default());
        assert_eq!(f.loop_nests[0].trip_counts, vec![TripCount::Symbolic]);
    }

    #[test]
    fn duplicate_subexpressions_within_a_statement_count_once() {
        let f = parse_one("void f(float a, float b) { a = (a + b) * (a + b); b = a + b; b = a + b; }");
        // statement 1: `*` and one `a + b`; statements 2 and 3: one `+` each
        assert_eq!(f.nonloop_counts.arith_ops, 4);
    }

    #[test]
    fn sibling_loops_use_deepest_path() {
        let f = parse_one(
            "void f(float a[N][N]) { for (i = 0; i < 4; i++) { for (j = 0; j < 8; j++) a[i][j] = 0.0; for (j = 0; j < N; j++) for (k = 0; k < 2; k++) a[j][k] = 1.0; } for (i = 0; i < 3; i++) a[i][i] = 2.0; }",
        );
        assert_eq!(f.loop_nests.len(), 2);
        assert_eq!(f.loop_nests[0].depth, 3);
        assert_eq!(
            f.loop_nests[0].trip_counts,
            vec![TripCount::Known(4), TripCount::Symbolic, TripCount::Known(2)]
        );
        assert_eq!(f.loop_nests[1].trip_counts, vec![TripCount::Known(3)]);
    }

    #[test]
    fn if_counts_branch_and_condition() {
        let f = parse_one("void f(float x, float y) { if (x < y && y > 0.0) x = y; else y = -x; }");
        assert_eq!(f.nonloop_counts, counts(3, 1, 1, 0, 2));
    }

    #[test]
    fn loop_inside_if_is_its_own_nest() {
        let f = parse_one("void f(float a[8], int n) { if (n > 0) for (i = 0; i < 8; i++) a[i] = n; }");
        assert_eq!(f.loop_nests.len(), 1);
        assert_eq!(f.loop_nests[0].body_counts, counts(0, 0, 0, 1, 1));
        assert_eq!(f.nonloop_counts, counts(1, 0, 1, 0, 1));
    }

    #[test]
    fn unsupported_constructs_are_diagnosed_and_skipped() {
        let src = "void ok1() { x = 1; }\nvoid bad(int n) { while (n) n = n - 1; }\nvoid ok2() { y = 2; }\nvoid callee() { f(1); }\nvoid ptr(int *p) { }";
        let out = parse_unit(&SourceUnit::new("m.c", src), false).unwrap();
        let names: Vec<_> = out.functions.iter().map(|f| f.name().to_string()).collect();
        assert_eq!(names, ["ok1", "ok2"]);
        assert_eq!(out.diagnostics.len(), 3);
        assert!(out.diagnostics.iter().all(|d| d.kind == DiagnosticKind::Unsupported));
        assert_eq!(out.diagnostics[0].function.as_deref(), Some("bad"));
        assert_eq!(out.diagnostics[0].line, 2);
        assert!(out.diagnostics[0].message.contains("while"));
    }

    #[test]
    fn strict_mode_aborts() {
        let src = "void a() { goto x; }\nvoid b() {}";
        let err = parse_unit(&SourceUnit::new("s.c", src), true).unwrap_err();
        match err {
            ParseError::Rejected(d) => {
                assert_eq!(d.kind, DiagnosticKind::Unsupported);
                assert_eq!((d.line, d.column), (1, 12));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_and_lexical_errors_carry_positions() {
        let out = parse_unit(&SourceUnit::new("e.c", "void f() {\n  x = ;\n}"), false).unwrap();
        let d = &out.diagnostics[0];
        assert_eq!((d.kind, d.line, d.column), (DiagnosticKind::Syntax, 2, 7));
        let out = parse_unit(&SourceUnit::new("e.c", "void f() { x = 1 @ 2; }"), false).unwrap();
        assert_eq!(out.diagnostics[0].kind, DiagnosticKind::Lexical);
    }

    #[test]
    fn empty_source_rejected() {
        assert!(matches!(
            parse_unit(&SourceUnit::new("e.c", "  \n"), false),
            Err(ParseError::EmptySource(_))
        ));
    }

    #[test]
    fn printed_floyd_warshall_reparses_identically() {
        let f = parse_one(FLOYD_WARSHALL);
        let again = parse_one(&f.to_source());
        assert_eq!(f, again);
    }
}
