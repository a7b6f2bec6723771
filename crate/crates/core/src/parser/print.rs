//! Pretty-printer producing source that reparses to the same tree.

use std::fmt::Write;

use super::ast::*;

const PREC_COMMA: u8 = 1;
const PREC_ASSIGN: u8 = 2;
const PREC_TERNARY: u8 = 3;
const PREC_UNARY: u8 = 10;
const PREC_POSTFIX: u8 = 11;
const PREC_PRIMARY: u8 = 12;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Comma(_) => PREC_COMMA,
        Expr::Assign { .. } => PREC_ASSIGN,
        Expr::Ternary { .. } => PREC_TERNARY,
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { .. } | Expr::Step { prefix: true, .. } => PREC_UNARY,
        Expr::Step { prefix: false, .. } | Expr::Index { .. } => PREC_POSTFIX,
        Expr::Int(_) | Expr::Float(_) | Expr::Var(_) => PREC_PRIMARY,
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, PREC_COMMA);
    s
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    if precedence(e) < min_prec {
        out.push('(');
        write_expr(out, e, PREC_COMMA);
        out.push(')');
        return;
    }
    match e {
        Expr::Int(v) => write!(out, "{v}").unwrap(),
        Expr::Float(s) => out.push_str(s),
        Expr::Var(v) => out.push_str(v),
        Expr::Index { array, indices } => {
            out.push_str(array);
            for ix in indices {
                out.push('[');
                write_expr(out, ix, PREC_COMMA);
                out.push(']');
            }
        }
        Expr::Unary { op, operand } => {
            out.push_str(op.symbol());
            let mut inner = String::new();
            write_expr(&mut inner, operand, PREC_UNARY);
            // `- -x` must not collapse into `--x`.
            if matches!(op, UnaryOp::Neg | UnaryOp::Plus) && inner.starts_with(['-', '+']) {
                out.push(' ');
            }
            out.push_str(&inner);
        }
        Expr::Binary { op, lhs, rhs } => {
            write_expr(out, lhs, op.precedence());
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, rhs, op.precedence() + 1);
        }
        Expr::Ternary {
            cond,
            then,
            otherwise,
        } => {
            write_expr(out, cond, PREC_TERNARY + 1);
            out.push_str(" ? ");
            write_expr(out, then, PREC_COMMA);
            out.push_str(" : ");
            write_expr(out, otherwise, PREC_TERNARY);
        }
        Expr::Assign { op, target, value } => {
            write_expr(out, target, PREC_UNARY);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, value, PREC_ASSIGN);
        }
        Expr::Step {
            increment,
            prefix,
            target,
        } => {
            let sym = if *increment { "++" } else { "--" };
            if *prefix {
                out.push_str(sym);
                write_expr(out, target, PREC_UNARY);
            } else {
                write_expr(out, target, PREC_POSTFIX);
                out.push_str(sym);
            }
        }
        Expr::Comma(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, item, PREC_ASSIGN);
            }
        }
    }
}

fn write_dims(out: &mut String, dims: &[Dim]) {
    for d in dims {
        match d {
            Dim::Literal(v) => write!(out, "[{v}]").unwrap(),
            Dim::Symbol(s) => write!(out, "[{s}]").unwrap(),
        }
    }
}

fn decl_to_string(d: &Decl) -> String {
    let mut s = String::from(d.ty.keyword());
    for (i, v) in d.vars.iter().enumerate() {
        s.push_str(if i == 0 { " " } else { ", " });
        s.push_str(&v.name);
        write_dims(&mut s, &v.dims);
        if let Some(init) = &v.init {
            s.push_str(" = ");
            write_expr(&mut s, init, PREC_ASSIGN);
        }
    }
    s
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn write_body(out: &mut String, body: &Stmt, level: usize) {
    if let Stmt::Block(stmts) = body {
        out.push_str(" {\n");
        for s in stmts {
            write_stmt(out, s, level + 1);
        }
        indent(out, level);
        out.push('}');
    } else {
        out.push('\n');
        write_stmt(out, body, level + 1);
        // write_stmt ends with a newline; strip it so callers control layout.
        out.pop();
    }
}

fn write_stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    match s {
        Stmt::Decl(d) => {
            out.push_str(&decl_to_string(d));
            out.push(';');
        }
        Stmt::Expr(e) => {
            write_expr(out, e, PREC_COMMA);
            out.push(';');
        }
        Stmt::Return(None) => out.push_str("return;"),
        Stmt::Return(Some(e)) => {
            out.push_str("return ");
            write_expr(out, e, PREC_COMMA);
            out.push(';');
        }
        Stmt::Empty => out.push(';'),
        Stmt::Block(stmts) => {
            out.push_str("{\n");
            for s in stmts {
                write_stmt(out, s, level + 1);
            }
            indent(out, level);
            out.push('}');
        }
        Stmt::If {
            cond,
            then,
            otherwise,
        } => {
            out.push_str("if (");
            write_expr(out, cond, PREC_COMMA);
            out.push(')');
            write_body(out, then, level);
            if let Some(other) = otherwise {
                if matches!(**then, Stmt::Block(_)) {
                    out.push(' ');
                } else {
                    out.push('\n');
                    indent(out, level);
                }
                out.push_str("else");
                if matches!(**other, Stmt::If { .. }) {
                    out.push(' ');
                    let mut nested = String::new();
                    write_stmt(&mut nested, other, level);
                    out.push_str(nested.trim_start());
                    out.pop();
                } else {
                    write_body(out, other, level);
                }
            }
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
        } => {
            out.push_str("for (");
            match init {
                Some(ForInit::Decl(d)) => out.push_str(&decl_to_string(d)),
                Some(ForInit::Expr(e)) => write_expr(out, e, PREC_COMMA),
                None => {}
            }
            out.push(';');
            if let Some(c) = cond {
                out.push(' ');
                write_expr(out, c, PREC_COMMA);
            }
            out.push(';');
            if let Some(st) = step {
                out.push(' ');
                write_expr(out, st, PREC_COMMA);
            }
            out.push(')');
            write_body(out, body, level);
        }
    }
    out.push('\n');
}

pub fn function_to_string(f: &FunctionDef) -> String {
    let mut out = String::new();
    write!(out, "{} {}(", f.ret.keyword(), f.name).unwrap();
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{} {}", p.elem.keyword(), p.name).unwrap();
        write_dims(&mut out, &p.dims);
    }
    out.push_str(") {\n");
    for s in &f.body {
        write_stmt(&mut out, s, 1);
    }
    out.push_str("}\n");
    out
}
