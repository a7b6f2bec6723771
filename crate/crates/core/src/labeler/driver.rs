//! Standalone C drivers that time one function.
//!
//! The driver fills every array argument with a seeded pseudo-random
//! sequence, calls the function once on fresh data to compute a checksum of
//! everything it writes, then times batches of calls (doubling the batch
//! until it runs for at least `min_runtime_s`) and prints the per-call time.
//! The checksum keeps the aggressive build from discarding the kernel and
//! lets the two builds be compared for semantic agreement.

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use super::LabelerConfig;
use crate::parser::ast::*;
use crate::parser::FunctionUnit;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriverError {
    #[error("function `{function}` cannot be driven: {reason}")]
    Undrivable { function: String, reason: String },
}

/// Identifiers the driver itself or the headers it includes declare.
const RESERVED: &[&str] = &[
    "main", "printf", "fprintf", "puts", "stdout", "stderr", "FILE", "time", "clock",
    "clock_gettime", "timespec", "CLOCK_MONOTONIC", "NULL", "size_t", "uint64_t", "int64_t",
    "asm", "__asm__",
];

const MAX_ELEMENTS: u64 = 1 << 26;

#[derive(Default)]
struct Usage {
    declared: BTreeSet<String>,
    written: BTreeSet<String>,
    written_arrays: BTreeSet<String>,
    integral: BTreeSet<String>,
    all: BTreeSet<String>,
}

impl Usage {
    fn expr(&mut self, e: &Expr, integral_ctx: bool) {
        match e {
            Expr::Int(_) | Expr::Float(_) => {}
            Expr::Var(v) => {
                self.all.insert(v.clone());
                if integral_ctx {
                    self.integral.insert(v.clone());
                }
            }
            Expr::Index { array, indices } => {
                self.all.insert(array.clone());
                indices.iter().for_each(|i| self.expr(i, true));
            }
            Expr::Unary { operand, .. } => self.expr(operand, integral_ctx),
            Expr::Binary { op, lhs, rhs } => {
                let int_op = integral_ctx || *op == BinaryOp::Rem;
                self.expr(lhs, int_op);
                self.expr(rhs, int_op);
            }
            Expr::Ternary {
                cond,
                then,
                otherwise,
            } => {
                self.expr(cond, false);
                self.expr(then, integral_ctx);
                self.expr(otherwise, integral_ctx);
            }
            Expr::Assign { op, target, value } => {
                self.target(target);
                let rem = matches!(op, AssignOp::Compound(BinaryOp::Rem));
                self.expr(target, integral_ctx || rem);
                self.expr(value, integral_ctx || rem);
            }
            Expr::Step { target, .. } => {
                self.target(target);
                self.expr(target, integral_ctx);
            }
            Expr::Comma(items) => items.iter().for_each(|i| self.expr(i, integral_ctx)),
        }
    }

    fn target(&mut self, t: &Expr) {
        match t {
            Expr::Var(v) => {
                self.written.insert(v.clone());
            }
            Expr::Index { array, .. } => {
                self.written_arrays.insert(array.clone());
            }
            _ => {}
        }
    }

    fn dims(&mut self, dims: &[Dim]) {
        for d in dims {
            if let Dim::Symbol(s) = d {
                self.all.insert(s.clone());
            }
        }
    }

    fn decl(&mut self, d: &Decl) {
        for v in &d.vars {
            self.declared.insert(v.name.clone());
            self.dims(&v.dims);
            if let Some(init) = &v.init {
                self.expr(init, false);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Decl(d) => self.decl(d),
            Stmt::Expr(e) => self.expr(e, false),
            Stmt::Return(Some(e)) => self.expr(e, false),
            Stmt::Return(None) | Stmt::Empty => {}
            Stmt::Block(b) => b.iter().for_each(|s| self.stmt(s)),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                self.expr(cond, false);
                self.stmt(then);
                if let Some(o) = otherwise {
                    self.stmt(o);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                // Header variables are loop counters and must be integral.
                match init {
                    Some(ForInit::Decl(d)) => self.decl(d),
                    Some(ForInit::Expr(e)) => self.expr(e, true),
                    None => {}
                }
                if let Some(c) = cond {
                    self.expr(c, true);
                }
                if let Some(st) = step {
                    self.expr(st, true);
                }
                self.stmt(body);
            }
        }
    }
}

fn c_float(v: f64) -> String {
    format!("{v:.17e}")
}

/// Builds a complete C program that checksums and times `func`.
pub fn synthesize_driver(func: &FunctionUnit, cfg: &LabelerConfig) -> Result<String, DriverError> {
    let def = &func.def;
    let undrivable = |reason: String| DriverError::Undrivable {
        function: def.name.clone(),
        reason,
    };
    let mut usage = Usage::default();
    for p in &def.params {
        usage.dims(&p.dims);
    }
    def.body.iter().for_each(|s| usage.stmt(s));

    let mut names: BTreeSet<&String> = usage.all.iter().collect();
    names.insert(&def.name);
    names.extend(def.params.iter().map(|p| &p.name));
    if let Some(bad) = names
        .iter()
        .find(|n| n.starts_with("drv_") || RESERVED.contains(&n.as_str()))
    {
        return Err(undrivable(format!("identifier `{bad}` clashes with the driver")));
    }

    let params: BTreeSet<&String> = def.params.iter().map(|p| &p.name).collect();
    let free: Vec<&String> = usage
        .all
        .iter()
        .filter(|n| !params.contains(n) && !usage.declared.contains(*n))
        .collect();

    let extent = cfg.array_extent as u64;
    let mut src = String::new();
    writeln!(src, "/* measurement driver for `{}` */", def.name).unwrap();
    src.push_str("#include <stdint.h>\n#include <stdio.h>\n#include <time.h>\n\n");

    // Free names: never-written ones are symbolic constants bound to the
    // extent; written ones become globals that join the checksum.
    let mut free_globals = Vec::new();
    for name in &free {
        if usage.written.contains(*name) {
            let ty = if usage.integral.contains(*name) { "long" } else { "double" };
            writeln!(src, "static {ty} {name};").unwrap();
            free_globals.push((name.as_str(), ty));
        } else {
            writeln!(src, "#define {name} {extent}").unwrap();
        }
    }
    if !free.is_empty() {
        src.push('\n');
    }

    // Array extents after binding symbols.
    let mut arrays = Vec::new();
    for p in def.params.iter().filter(|p| p.is_array()) {
        let mut dims = Vec::new();
        for d in &p.dims {
            let n = match d {
                Dim::Literal(v) => *v,
                Dim::Symbol(s) => {
                    if let Some(q) = def.params.iter().find(|q| &q.name == s) {
                        if q.elem != ScalarType::Int || q.is_array() {
                            return Err(undrivable(format!(
                                "extent `{s}` of `{}` is not an int parameter",
                                p.name
                            )));
                        }
                        let pos_q = def.params.iter().position(|x| x.name == *s).unwrap();
                        let pos_p = def.params.iter().position(|x| x.name == p.name).unwrap();
                        if pos_q > pos_p {
                            return Err(undrivable(format!(
                                "extent `{s}` of `{}` is declared after it",
                                p.name
                            )));
                        }
                    } else if usage.written.contains(s) {
                        return Err(undrivable(format!("extent `{s}` is assigned in the body")));
                    }
                    extent
                }
            };
            if n == 0 {
                return Err(undrivable(format!("array `{}` has a zero extent", p.name)));
            }
            dims.push(n);
        }
        if dims.iter().product::<u64>() > MAX_ELEMENTS {
            return Err(undrivable(format!("array `{}` is too large", p.name)));
        }
        arrays.push((p, dims));
    }

    src.push_str("__attribute__((noinline)) ");
    src.push_str(&func.to_source());
    src.push('\n');

    for (i, p) in def.params.iter().enumerate() {
        let ty = p.elem.keyword();
        if let Some((_, dims)) = arrays.iter().find(|(q, _)| q.name == p.name) {
            let dims: String = dims.iter().map(|d| format!("[{d}]")).collect();
            writeln!(src, "static {ty} drv_arg{i}{dims};").unwrap();
        } else {
            writeln!(src, "static {ty} drv_arg{i};").unwrap();
        }
    }
    src.push_str(
        "static uint64_t drv_state;\n\n\
         static double drv_uniform(void) {\n\
         \x20   drv_state ^= drv_state << 13;\n\
         \x20   drv_state ^= drv_state >> 7;\n\
         \x20   drv_state ^= drv_state << 17;\n\
         \x20   return (double)(drv_state >> 11) / 9007199254740992.0;\n\
         }\n\n\
         static double drv_now(void) {\n\
         \x20   struct timespec t;\n\
         \x20   clock_gettime(CLOCK_MONOTONIC, &t);\n\
         \x20   return (double)t.tv_sec + (double)t.tv_nsec * 1e-9;\n\
         }\n\n",
    );

    src.push_str("static void drv_init(void) {\n");
    writeln!(
        src,
        "    drv_state = {}ULL;",
        cfg.rng_seed ^ 0x9E37_79B9_7F4A_7C15
    )
    .unwrap();
    src.push_str("    if (drv_state == 0) drv_state = 1;\n");
    for (i, p) in def.params.iter().enumerate() {
        let fill = match p.elem {
            ScalarType::Int => "(int)(drv_uniform() * 16.0)",
            ScalarType::Float => "(float)drv_uniform()",
        };
        if let Some((_, dims)) = arrays.iter().find(|(q, _)| q.name == p.name) {
            let count: u64 = dims.iter().product();
            writeln!(
                src,
                "    for (long drv_k = 0; drv_k < {count}L; drv_k++) (({ty} *)drv_arg{i})[drv_k] = {fill};",
                ty = p.elem.keyword()
            )
            .unwrap();
        } else if p.elem == ScalarType::Int {
            writeln!(src, "    drv_arg{i} = {extent};").unwrap();
        } else {
            writeln!(src, "    drv_arg{i} = {fill};").unwrap();
        }
    }
    for (name, ty) in &free_globals {
        if *ty == "long" {
            writeln!(src, "    {name} = 0;").unwrap();
        } else {
            writeln!(src, "    {name} = drv_uniform();").unwrap();
        }
    }
    src.push_str("}\n\n");

    src.push_str("static double drv_checksum(void) {\n    double drv_sum = 0.0;\n");
    for (i, p) in def.params.iter().enumerate() {
        if !usage.written_arrays.contains(&p.name) {
            continue;
        }
        if let Some((_, dims)) = arrays.iter().find(|(q, _)| q.name == p.name) {
            let count: u64 = dims.iter().product();
            writeln!(
                src,
                "    for (long drv_k = 0; drv_k < {count}L; drv_k++) drv_sum += (double)(({ty} *)drv_arg{i})[drv_k];",
                ty = p.elem.keyword()
            )
            .unwrap();
        }
    }
    for (name, _) in &free_globals {
        writeln!(src, "    drv_sum += (double){name};").unwrap();
    }
    src.push_str("    return drv_sum;\n}\n\n");

    let args: Vec<String> = (0..def.params.len()).map(|i| format!("drv_arg{i}")).collect();
    let call = format!("{}({})", def.name, args.join(", "));
    src.push_str("int main(void) {\n    drv_init();\n");
    if def.ret == ReturnType::Void {
        writeln!(src, "    {call};\n    double drv_ret = 0.0;").unwrap();
    } else {
        writeln!(src, "    double drv_ret = (double){call};").unwrap();
    }
    writeln!(
        src,
        "    printf(\"checksum=%.17g\\n\", drv_checksum() + drv_ret);\n\
         \x20   long drv_calls = 1;\n\
         \x20   for (;;) {{\n\
         \x20       drv_init();\n\
         \x20       double drv_t0 = drv_now();\n\
         \x20       for (long drv_c = 0; drv_c < drv_calls; drv_c++) {{\n\
         \x20           {call};\n\
         \x20           __asm__ volatile(\"\" ::: \"memory\");\n\
         \x20       }}\n\
         \x20       double drv_elapsed = drv_now() - drv_t0;\n\
         \x20       if (drv_elapsed >= {min} || drv_calls >= (1L << 40)) {{\n\
         \x20           printf(\"calls=%ld\\n\", drv_calls);\n\
         \x20           printf(\"time_per_call=%.9e\\n\", drv_elapsed / (double)drv_calls);\n\
         \x20           return 0;\n\
         \x20       }}\n\
         \x20       drv_calls *= 2;\n\
         \x20   }}\n\
         }}",
        min = c_float(cfg.min_runtime_s)
    )
    .unwrap();
    Ok(src)
}
