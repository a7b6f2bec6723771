//! Tree-walking evaluator for the supported C subset.
//!
//! `float` values are evaluated in double precision. Signed integer
//! arithmetic wraps; integer division by zero and out-of-bounds subscripts
//! are errors. Every statement and loop iteration consumes one unit of
//! fuel, so evaluation always terminates.

use std::collections::HashMap;

use thiserror::Error;

use crate::parser::ast::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("undefined variable `{0}`")]
    Undefined(String),
    #[error("`{0}` is not an array")]
    NotArray(String),
    #[error("`{0}` is an array and cannot be used as a scalar")]
    NotScalar(String),
    #[error("subscript {index} out of bounds for `{array}` (extent {extent})")]
    OutOfBounds {
        array: String,
        index: i64,
        extent: usize,
    },
    #[error("`{array}` expects {expected} subscripts, got {got}")]
    Subscripts {
        array: String,
        expected: usize,
        got: usize,
    },
    #[error("array subscript is not an integer")]
    NonIntegerIndex,
    #[error("integer division by zero")]
    DivisionByZero,
    #[error("`%` applied to a float operand")]
    FloatRemainder,
    #[error("argument mismatch: {0}")]
    Arguments(String),
    #[error("fuel exhausted")]
    OutOfFuel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(i) => i as f64,
            Value::Float(f) => f,
        }
    }

    fn truthy(self) -> bool {
        match self {
            Value::Int(i) => i != 0,
            Value::Float(f) => f != 0.0,
        }
    }

    fn convert(self, ty: ScalarType) -> Value {
        match (self, ty) {
            (Value::Float(f), ScalarType::Int) => Value::Int(f as i64),
            (Value::Int(i), ScalarType::Float) => Value::Float(i as f64),
            (v, _) => v,
        }
    }

    fn zero(ty: ScalarType) -> Value {
        match ty {
            ScalarType::Int => Value::Int(0),
            ScalarType::Float => Value::Float(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub elem: ScalarType,
    pub dims: Vec<usize>,
    pub data: Vec<Value>,
}

impl Array {
    pub fn zeros(elem: ScalarType, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Array {
            elem,
            dims,
            data: vec![Value::zero(elem); len],
        }
    }

    pub fn from_f64(dims: Vec<usize>, values: &[f64]) -> Self {
        assert_eq!(dims.iter().product::<usize>(), values.len());
        Array {
            elem: ScalarType::Float,
            dims,
            data: values.iter().map(|&v| Value::Float(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Scalar(Value),
    Array(Array),
}

#[derive(Debug, Clone)]
enum Slot {
    Scalar(ScalarType, Value),
    /// Index into the call's array arguments.
    ParamArray(usize),
    LocalArray(Array),
}

enum Flow {
    Normal,
    Return(Option<Value>),
}

/// Evaluates functions with a fuel budget and a table of free names.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub fuel: u64,
    /// Values for names not declared in the function (symbolic constants,
    /// free variables). Writes to these names update the table.
    pub globals: HashMap<String, Value>,
}

impl Evaluator {
    pub fn new(fuel: u64) -> Self {
        Evaluator {
            fuel,
            globals: HashMap::new(),
        }
    }

    pub fn with_global(mut self, name: &str, value: Value) -> Self {
        self.globals.insert(name.to_string(), value);
        self
    }

    /// Calls `def`; array arguments are updated in place.
    pub fn call(&mut self, def: &FunctionDef, args: &mut [Arg]) -> Result<Option<Value>, EvalError> {
        if args.len() != def.params.len() {
            return Err(EvalError::Arguments(format!(
                "`{}` takes {} arguments, {} given",
                def.name,
                def.params.len(),
                args.len()
            )));
        }
        let mut frame = Frame {
            ev: self,
            args,
            scopes: vec![Vec::new()],
        };
        for (i, p) in def.params.iter().enumerate() {
            let slot = match (&frame.args[i], p.is_array()) {
                (Arg::Scalar(v), false) => Slot::Scalar(p.elem, v.convert(p.elem)),
                (Arg::Array(a), true) if a.dims.len() == p.dims.len() => Slot::ParamArray(i),
                _ => {
                    return Err(EvalError::Arguments(format!(
                        "argument {i} does not match parameter `{}`",
                        p.name
                    )))
                }
            };
            frame.scopes[0].push((p.name.clone(), slot));
        }
        let flow = frame.block(&def.body)?;
        Ok(match (flow, def.ret) {
            (Flow::Return(Some(v)), ReturnType::Int) => Some(v.convert(ScalarType::Int)),
            (Flow::Return(Some(v)), ReturnType::Float) => Some(v.convert(ScalarType::Float)),
            _ => None,
        })
    }
}

struct Frame<'a> {
    ev: &'a mut Evaluator,
    args: &'a mut [Arg],
    scopes: Vec<Vec<(String, Slot)>>,
}

enum Place {
    Local(usize, usize),
    Global(String),
}

impl Frame<'_> {
    fn tick(&mut self) -> Result<(), EvalError> {
        if self.ev.fuel == 0 {
            return Err(EvalError::OutOfFuel);
        }
        self.ev.fuel -= 1;
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<(usize, usize)> {
        for (si, scope) in self.scopes.iter().enumerate().rev() {
            if let Some(vi) = scope.iter().rposition(|(n, _)| n == name) {
                return Some((si, vi));
            }
        }
        None
    }

    fn resolve_dim(&self, d: &Dim) -> Result<usize, EvalError> {
        match d {
            Dim::Literal(v) => Ok(*v as usize),
            Dim::Symbol(s) => match self.read_var(s)? {
                Value::Int(v) if v >= 0 => Ok(v as usize),
                _ => Err(EvalError::Arguments(format!("array extent `{s}` is not a nonnegative int"))),
            },
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, EvalError> {
        self.scopes.push(Vec::new());
        let mut result = Ok(Flow::Normal);
        for s in stmts {
            match self.stmt(s) {
                Ok(Flow::Normal) => {}
                other => {
                    result = other;
                    break;
                }
            }
        }
        self.scopes.pop();
        result
    }

    fn declare(&mut self, d: &Decl) -> Result<(), EvalError> {
        for v in &d.vars {
            let slot = if v.dims.is_empty() {
                let value = match &v.init {
                    Some(e) => self.expr(e)?.convert(d.ty),
                    None => Value::zero(d.ty),
                };
                Slot::Scalar(d.ty, value)
            } else {
                let dims = v
                    .dims
                    .iter()
                    .map(|x| self.resolve_dim(x))
                    .collect::<Result<Vec<_>, _>>()?;
                Slot::LocalArray(Array::zeros(d.ty, dims))
            };
            self.scopes.last_mut().unwrap().push((v.name.clone(), slot));
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, EvalError> {
        self.tick()?;
        match s {
            Stmt::Decl(d) => {
                self.declare(d)?;
                Ok(Flow::Normal)
            }
            Stmt::Expr(e) => {
                self.expr(e)?;
                Ok(Flow::Normal)
            }
            Stmt::Empty => Ok(Flow::Normal),
            Stmt::Return(e) => {
                let v = e.as_ref().map(|e| self.expr(e)).transpose()?;
                Ok(Flow::Return(v))
            }
            Stmt::Block(stmts) => self.block(stmts),
            Stmt::If {
                cond,
                then,
                otherwise,
            } => {
                if self.expr(cond)?.truthy() {
                    self.stmt(then)
                } else if let Some(o) = otherwise {
                    self.stmt(o)
                } else {
                    Ok(Flow::Normal)
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                self.scopes.push(Vec::new());
                let result = self.run_for(init, cond, step, body);
                self.scopes.pop();
                result
            }
        }
    }

    fn run_for(
        &mut self,
        init: &Option<ForInit>,
        cond: &Option<Expr>,
        step: &Option<Expr>,
        body: &Stmt,
    ) -> Result<Flow, EvalError> {
        match init {
            Some(ForInit::Decl(d)) => self.declare(d)?,
            Some(ForInit::Expr(e)) => {
                self.expr(e)?;
            }
            None => {}
        }
        loop {
            self.tick()?;
            if let Some(c) = cond {
                if !self.expr(c)?.truthy() {
                    return Ok(Flow::Normal);
                }
            }
            if let Flow::Return(v) = self.stmt(body)? {
                return Ok(Flow::Return(v));
            }
            if let Some(st) = step {
                self.expr(st)?;
            }
        }
    }

    fn read_var(&self, name: &str) -> Result<Value, EvalError> {
        match self.lookup(name) {
            Some((si, vi)) => match &self.scopes[si][vi].1 {
                Slot::Scalar(_, v) => Ok(*v),
                _ => Err(EvalError::NotScalar(name.to_string())),
            },
            None => self
                .ev
                .globals
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::Undefined(name.to_string())),
        }
    }

    fn array_mut(&mut self, name: &str) -> Result<&mut Array, EvalError> {
        let Some((si, vi)) = self.lookup(name) else {
            return Err(EvalError::Undefined(name.to_string()));
        };
        match &mut self.scopes[si][vi].1 {
            Slot::ParamArray(i) => match &mut self.args[*i] {
                Arg::Array(a) => Ok(a),
                Arg::Scalar(_) => Err(EvalError::NotArray(name.to_string())),
            },
            Slot::LocalArray(a) => Ok(a),
            Slot::Scalar(..) => Err(EvalError::NotArray(name.to_string())),
        }
    }

    fn element_offset(&mut self, array: &str, indices: &[Expr]) -> Result<usize, EvalError> {
        let idx = indices
            .iter()
            .map(|e| match self.expr(e)? {
                Value::Int(i) => Ok(i),
                Value::Float(_) => Err(EvalError::NonIntegerIndex),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let a = self.array_mut(array)?;
        if idx.len() != a.dims.len() {
            return Err(EvalError::Subscripts {
                array: array.to_string(),
                expected: a.dims.len(),
                got: idx.len(),
            });
        }
        let mut offset = 0usize;
        for (&i, &extent) in idx.iter().zip(&a.dims) {
            if i < 0 || i as usize >= extent {
                return Err(EvalError::OutOfBounds {
                    array: array.to_string(),
                    index: i,
                    extent,
                });
            }
            offset = offset * extent + i as usize;
        }
        Ok(offset)
    }

    fn read(&mut self, target: &Expr) -> Result<Value, EvalError> {
        match target {
            Expr::Var(name) => self.read_var(name),
            Expr::Index { array, indices } => {
                let off = self.element_offset(array, indices)?;
                Ok(self.array_mut(array)?.data[off])
            }
            _ => unreachable!("parser only admits lvalues here"),
        }
    }

    fn write(&mut self, target: &Expr, value: Value) -> Result<Value, EvalError> {
        match target {
            Expr::Var(name) => {
                let place = match self.lookup(name) {
                    Some((si, vi)) => Place::Local(si, vi),
                    None => Place::Global(name.clone()),
                };
                match place {
                    Place::Local(si, vi) => match &mut self.scopes[si][vi].1 {
                        Slot::Scalar(ty, v) => {
                            *v = value.convert(*ty);
                            Ok(*v)
                        }
                        _ => Err(EvalError::NotScalar(name.clone())),
                    },
                    Place::Global(name) => {
                        let slot = self
                            .ev
                            .globals
                            .get_mut(&name)
                            .ok_or_else(|| EvalError::Undefined(name.clone()))?;
                        *slot = match *slot {
                            Value::Int(_) => value.convert(ScalarType::Int),
                            Value::Float(_) => value.convert(ScalarType::Float),
                        };
                        Ok(*slot)
                    }
                }
            }
            Expr::Index { array, indices } => {
                let off = self.element_offset(array, indices)?;
                let a = self.array_mut(array)?;
                let v = value.convert(a.elem);
                a.data[off] = v;
                Ok(v)
            }
            _ => unreachable!("parser only admits lvalues here"),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, EvalError> {
        match e {
            Expr::Int(v) => Ok(Value::Int(*v as i64)),
            Expr::Float(s) => Ok(Value::Float(s.parse().unwrap_or(f64::NAN))),
            Expr::Var(_) | Expr::Index { .. } => self.read(e),
            Expr::Unary { op, operand } => {
                let v = self.expr(operand)?;
                Ok(match (op, v) {
                    (UnaryOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                    (UnaryOp::Neg, Value::Float(f)) => Value::Float(-f),
                    (UnaryOp::Plus, v) => v,
                    (UnaryOp::Not, v) => Value::Int(!v.truthy() as i64),
                })
            }
            Expr::Binary { op, lhs, rhs } => match op {
                BinaryOp::And => {
                    let l = self.expr(lhs)?.truthy();
                    Ok(Value::Int((l && self.expr(rhs)?.truthy()) as i64))
                }
                BinaryOp::Or => {
                    let l = self.expr(lhs)?.truthy();
                    Ok(Value::Int((l || self.expr(rhs)?.truthy()) as i64))
                }
                _ => {
                    let l = self.expr(lhs)?;
                    let r = self.expr(rhs)?;
                    binary(*op, l, r)
                }
            },
            Expr::Ternary {
                cond,
                then,
                otherwise,
            } => {
                if self.expr(cond)?.truthy() {
                    self.expr(then)
                } else {
                    self.expr(otherwise)
                }
            }
            Expr::Assign { op, target, value } => {
                let v = self.expr(value)?;
                let v = match op {
                    AssignOp::Set => v,
                    AssignOp::Compound(bop) => {
                        let cur = self.read(target)?;
                        binary(*bop, cur, v)?
                    }
                };
                self.write(target, v)
            }
            Expr::Step {
                increment,
                prefix,
                target,
            } => {
                let cur = self.read(target)?;
                let next = binary(
                    if *increment { BinaryOp::Add } else { BinaryOp::Sub },
                    cur,
                    Value::Int(1),
                )?;
                let stored = self.write(target, next)?;
                Ok(if *prefix { stored } else { cur })
            }
            Expr::Comma(items) => {
                let mut last = Value::Int(0);
                for item in items {
                    last = self.expr(item)?;
                }
                Ok(last)
            }
        }
    }
}

fn binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use BinaryOp::*;
    if let (Value::Int(a), Value::Int(b)) = (l, r) {
        return Ok(Value::Int(match op {
            Add => a.wrapping_add(b),
            Sub => a.wrapping_sub(b),
            Mul => a.wrapping_mul(b),
            Div => {
                if b == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.wrapping_div(b)
            }
            Rem => {
                if b == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.wrapping_rem(b)
            }
            Lt => (a < b) as i64,
            Le => (a <= b) as i64,
            Gt => (a > b) as i64,
            Ge => (a >= b) as i64,
            Eq => (a == b) as i64,
            Ne => (a != b) as i64,
            And => (a != 0 && b != 0) as i64,
            Or => (a != 0 || b != 0) as i64,
        }));
    }
    let (a, b) = (l.as_f64(), r.as_f64());
    Ok(match op {
        Add => Value::Float(a + b),
        Sub => Value::Float(a - b),
        Mul => Value::Float(a * b),
        Div => Value::Float(a / b),
        Rem => return Err(EvalError::FloatRemainder),
        Lt => Value::Int((a < b) as i64),
        Le => Value::Int((a <= b) as i64),
        Gt => Value::Int((a > b) as i64),
        Ge => Value::Int((a >= b) as i64),
        Eq => Value::Int((a == b) as i64),
        Ne => Value::Int((a != b) as i64),
        And => Value::Int((a != 0.0 && b != 0.0) as i64),
        Or => Value::Int((a != 0.0 || b != 0.0) as i64),
    })
}
