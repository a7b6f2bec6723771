//! Loop-nest discovery, trip counts and operator/identifier counting.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::print::expr_to_string;
use super::UnknownOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripCount {
    Known(u64),
    Symbolic,
}

/// Operation and identifier counts for a region of code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub logical_ops: u64,
    pub arith_ops: u64,
    pub branches: u64,
    /// Distinct array names.
    pub arrays: u64,
    /// Distinct scalar names.
    pub scalars: u64,
}

impl OpCounts {
    pub fn as_array(&self) -> [u64; 5] {
        [
            self.logical_ops,
            self.arith_ops,
            self.branches,
            self.arrays,
            self.scalars,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNest {
    /// Loops on the deepest path.
    pub depth: usize,
    /// Outermost first, along the first deepest path in source order.
    pub trip_counts: Vec<TripCount>,
    pub body_counts: OpCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    Logical,
    Arith,
    Branch,
    Neither,
}

/// Classifies an operator token or control keyword.
///
/// Compound assignments and `++`/`--` perform an arithmetic operation and
/// are classified as arithmetic; plain `=` is not.
pub fn classify_operator(token: &str) -> Result<OpClass, UnknownOperator> {
    Ok(match token {
        "<" | "<=" | ">" | ">=" | "==" | "!=" | "&&" | "||" | "!" => OpClass::Logical,
        "+" | "-" | "*" | "/" | "%" | "+=" | "-=" | "*=" | "/=" | "%=" | "++" | "--" => {
            OpClass::Arith
        }
        "if" | "?:" | "?" => OpClass::Branch,
        "=" | "," | "[]" | "[" | "]" | "for" | "else" | "return" | "(" | ")" => OpClass::Neither,
        other => return Err(UnknownOperator(other.to_string())),
    })
}

fn class_of(token: &str) -> OpClass {
    classify_operator(token).expect("grammar operators are all classified")
}

#[derive(Default)]
struct Tally {
    logical: u64,
    arith: u64,
    branches: u64,
    arrays: BTreeSet<String>,
    scalars: BTreeSet<String>,
}

impl Tally {
    fn bump(&mut self, class: OpClass) {
        match class {
            OpClass::Logical => self.logical += 1,
            OpClass::Arith => self.arith += 1,
            OpClass::Branch => self.branches += 1,
            OpClass::Neither => {}
        }
    }

    fn finish(self, known_arrays: &BTreeSet<String>, exclude: &BTreeSet<String>) -> OpCounts {
        let arrays: BTreeSet<&String> = self.arrays.iter().collect();
        let scalars = self
            .scalars
            .iter()
            .filter(|s| !arrays.contains(s) && !known_arrays.contains(*s) && !exclude.contains(*s))
            .count();
        // A name seen bare but declared as an array still counts as an array.
        let bare_arrays = self
            .scalars
            .iter()
            .filter(|s| known_arrays.contains(*s) && !arrays.contains(s))
            .count();
        OpCounts {
            logical_ops: self.logical,
            arith_ops: self.arith,
            branches: self.branches,
            arrays: (arrays.len() + bare_arrays) as u64,
            scalars: scalars as u64,
        }
    }
}

/// Counts operators in one statement, counting each distinct operator
/// subexpression text once.
struct StatementScope<'a> {
    tally: &'a mut Tally,
    seen: HashSet<String>,
}

impl StatementScope<'_> {
    fn count_once(&mut self, e: &Expr, class: OpClass) {
        if self.seen.insert(expr_to_string(e)) {
            self.tally.bump(class);
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Int(_) | Expr::Float(_) => {}
            Expr::Var(v) => {
                self.tally.scalars.insert(v.clone());
            }
            Expr::Index { array, indices } => {
                self.tally.arrays.insert(array.clone());
                indices.iter().for_each(|i| self.expr(i));
            }
            Expr::Unary { op, operand } => {
                self.count_once(e, class_of(op.symbol()));
                self.expr(operand);
            }
            Expr::Binary { op, lhs, rhs } => {
                self.count_once(e, class_of(op.symbol()));
                self.expr(lhs);
                self.expr(rhs);
            }
            Expr::Ternary {
                cond,
                then,
                otherwise,
            } => {
                self.count_once(e, class_of("?:"));
                self.expr(cond);
                self.expr(then);
                self.expr(otherwise);
            }
            Expr::Assign { op, target, value } => {
                self.count_once(e, class_of(op.symbol()));
                self.expr(target);
                self.expr(value);
            }
            Expr::Step {
                increment, target, ..
            } => {
                self.count_once(e, class_of(if *increment { "++" } else { "--" }));
                self.expr(target);
            }
            Expr::Comma(items) => items.iter().for_each(|i| self.expr(i)),
        }
    }
}

fn count_expr(tally: &mut Tally, e: &Expr) {
    StatementScope {
        tally,
        seen: HashSet::new(),
    }
    .expr(e);
}

fn count_decl(tally: &mut Tally, d: &Decl) {
    let mut scope = StatementScope {
        tally,
        seen: HashSet::new(),
    };
    for v in &d.vars {
        if let Some(init) = &v.init {
            // An initialized declaration writes its variable.
            if v.dims.is_empty() {
                scope.tally.scalars.insert(v.name.clone());
            } else {
                scope.tally.arrays.insert(v.name.clone());
            }
            scope.expr(init);
        }
    }
}

struct LoopTree {
    trip: TripCount,
    children: Vec<LoopTree>,
}

impl LoopTree {
    fn depth(&self) -> usize {
        1 + self.children.iter().map(LoopTree::depth).max().unwrap_or(0)
    }

    fn deepest_path(&self, out: &mut Vec<TripCount>) {
        out.push(self.trip);
        let d = self.depth();
        if let Some(child) = self.children.iter().find(|c| c.depth() + 1 == d) {
            child.deepest_path(out);
        }
    }
}

/// Induction variable named by a `for` header, if any.
fn induction_var(init: &Option<ForInit>, step: &Option<Expr>) -> Option<String> {
    match init {
        Some(ForInit::Decl(d)) if d.vars.len() == 1 => return Some(d.vars[0].name.clone()),
        Some(ForInit::Expr(Expr::Assign { target, .. })) => {
            if let Expr::Var(v) = &**target {
                return Some(v.clone());
            }
        }
        _ => {}
    }
    match step {
        Some(Expr::Step { target, .. }) | Some(Expr::Assign { target, .. }) => match &**target {
            Expr::Var(v) => Some(v.clone()),
            _ => None,
        },
        _ => None,
    }
}

fn literal(e: &Expr) -> Option<i128> {
    match e {
        Expr::Int(v) => Some(*v as i128),
        Expr::Unary {
            op: UnaryOp::Neg,
            operand,
        } => match &**operand {
            Expr::Int(v) => Some(-(*v as i128)),
            _ => None,
        },
        _ => None,
    }
}

/// Trip count of `for (v = L; v <op> U; v += S)` with literal L, U, S.
pub fn trip_count(init: &Option<ForInit>, cond: &Option<Expr>, step: &Option<Expr>) -> TripCount {
    let (var, start) = match init {
        Some(ForInit::Decl(d)) if d.vars.len() == 1 && d.vars[0].dims.is_empty() => {
            match d.vars[0].init.as_ref().and_then(literal) {
                Some(l) => (d.vars[0].name.as_str(), l),
                None => return TripCount::Symbolic,
            }
        }
        Some(ForInit::Expr(Expr::Assign {
            op: AssignOp::Set,
            target,
            value,
        })) => match (&**target, literal(value)) {
            (Expr::Var(v), Some(l)) => (v.as_str(), l),
            _ => return TripCount::Symbolic,
        },
        _ => return TripCount::Symbolic,
    };
    let (op, bound) = match cond {
        Some(Expr::Binary { op, lhs, rhs }) => match (&**lhs, literal(rhs)) {
            (Expr::Var(v), Some(u)) if v == var => (*op, u),
            _ => return TripCount::Symbolic,
        },
        _ => return TripCount::Symbolic,
    };
    let stride: i128 = match step {
        Some(Expr::Step {
            increment, target, ..
        }) if matches!(&**target, Expr::Var(v) if v == var) => {
            if *increment {
                1
            } else {
                -1
            }
        }
        Some(Expr::Assign { op, target, value }) if matches!(&**target, Expr::Var(v) if v == var) => {
            match (op, &**value) {
                (AssignOp::Compound(BinaryOp::Add), v) => match literal(v) {
                    Some(s) => s,
                    None => return TripCount::Symbolic,
                },
                (AssignOp::Compound(BinaryOp::Sub), v) => match literal(v) {
                    Some(s) => -s,
                    None => return TripCount::Symbolic,
                },
                (AssignOp::Set, Expr::Binary { op, lhs, rhs })
                    if matches!(&**lhs, Expr::Var(v) if v == var) =>
                {
                    match (op, literal(rhs)) {
                        (BinaryOp::Add, Some(s)) => s,
                        (BinaryOp::Sub, Some(s)) => -s,
                        _ => return TripCount::Symbolic,
                    }
                }
                _ => return TripCount::Symbolic,
            }
        }
        _ => return TripCount::Symbolic,
    };
    let count = match op {
        BinaryOp::Lt if stride > 0 => ceil_div((bound - start).max(0), stride),
        BinaryOp::Le if stride > 0 => ceil_div((bound - start + 1).max(0), stride),
        BinaryOp::Gt if stride < 0 => ceil_div((start - bound).max(0), -stride),
        BinaryOp::Ge if stride < 0 => ceil_div((start - bound + 1).max(0), -stride),
        _ => return TripCount::Symbolic,
    };
    match u64::try_from(count) {
        Ok(c) => TripCount::Known(c),
        Err(_) => TripCount::Symbolic,
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    (a + b - 1) / b
}

struct NestBuilder {
    tally: Tally,
    loop_vars: BTreeSet<String>,
}

impl NestBuilder {
    fn build_loop(
        &mut self,
        init: &Option<ForInit>,
        cond: &Option<Expr>,
        step: &Option<Expr>,
        body: &Stmt,
    ) -> LoopTree {
        if let Some(v) = induction_var(init, step) {
            self.loop_vars.insert(v);
        }
        let mut node = LoopTree {
            trip: trip_count(init, cond, step),
            children: Vec::new(),
        };
        self.walk(body, &mut node.children);
        node
    }

    fn walk(&mut self, s: &Stmt, children: &mut Vec<LoopTree>) {
        match s {
            Stmt::Decl(d) => count_decl(&mut self.tally, d),
            Stmt::Expr(e) => count_expr(&mut self.tally, e),
            Stmt::Return(Some(e)) => count_expr(&mut self.tally, e),
            Stmt::Return(None) | Stmt::Empty => {}
            Stmt::Block(stmts) => stmts.iter().for_each(|s| self.walk(s, children)),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                self.tally.bump(class_of("if"));
                count_expr(&mut self.tally, cond);
                self.walk(then, children);
                if let Some(o) = otherwise {
                    self.walk(o, children);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                let child = self.build_loop(init, cond, step, body);
                children.push(child);
            }
        }
    }
}

struct FunctionWalker<'a> {
    known_arrays: &'a BTreeSet<String>,
    nonloop: Tally,
    nests: Vec<LoopNest>,
}

impl FunctionWalker<'_> {
    fn walk(&mut self, s: &Stmt) {
        match s {
            Stmt::Decl(d) => count_decl(&mut self.nonloop, d),
            Stmt::Expr(e) => count_expr(&mut self.nonloop, e),
            Stmt::Return(Some(e)) => count_expr(&mut self.nonloop, e),
            Stmt::Return(None) | Stmt::Empty => {}
            Stmt::Block(stmts) => stmts.iter().for_each(|s| self.walk(s)),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                self.nonloop.bump(class_of("if"));
                count_expr(&mut self.nonloop, cond);
                self.walk(then);
                if let Some(o) = otherwise {
                    self.walk(o);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                let mut builder = NestBuilder {
                    tally: Tally::default(),
                    loop_vars: BTreeSet::new(),
                };
                let tree = builder.build_loop(init, cond, step, body);
                let mut trip_counts = Vec::new();
                tree.deepest_path(&mut trip_counts);
                self.nests.push(LoopNest {
                    depth: tree.depth(),
                    trip_counts,
                    body_counts: builder.tally.finish(self.known_arrays, &builder.loop_vars),
                });
            }
        }
    }
}

fn collect_arrays(stmts: &[Stmt], out: &mut BTreeSet<String>) {
    let decl = |d: &Decl, out: &mut BTreeSet<String>| {
        for v in &d.vars {
            if !v.dims.is_empty() {
                out.insert(v.name.clone());
            }
        }
    };
    for s in stmts {
        match s {
            Stmt::Decl(d) => decl(d, out),
            Stmt::Block(b) => collect_arrays(b, out),
            Stmt::If {
                then, otherwise, ..
            } => {
                collect_arrays(std::slice::from_ref(then), out);
                if let Some(o) = otherwise {
                    collect_arrays(std::slice::from_ref(o), out);
                }
            }
            Stmt::For { init, body, .. } => {
                if let Some(ForInit::Decl(d)) = init {
                    decl(d, out);
                }
                collect_arrays(std::slice::from_ref(body), out);
            }
            _ => {}
        }
    }
}

/// Loop nests in source order and counts for code outside every loop.
pub fn analyze(def: &FunctionDef) -> (Vec<LoopNest>, OpCounts) {
    let mut known_arrays: BTreeSet<String> = def
        .params
        .iter()
        .filter(|p| p.is_array())
        .map(|p| p.name.clone())
        .collect();
    collect_arrays(&def.body, &mut known_arrays);
    let mut walker = FunctionWalker {
        known_arrays: &known_arrays,
        nonloop: Tally::default(),
        nests: Vec::new(),
    };
    def.body.iter().for_each(|s| walker.walk(s));
    let nonloop = walker.nonloop.finish(&known_arrays, &BTreeSet::new());
    (walker.nests, nonloop)
}
