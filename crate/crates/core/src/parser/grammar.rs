//! Recursive-descent parser over the token stream.

use super::ast::*;
use super::lexer::{Pos, Token, TokenKind};
use super::DiagnosticKind;

#[derive(Debug, Clone)]
pub(crate) struct SyntaxError {
    pub pos: Pos,
    pub kind: DiagnosticKind,
    pub message: String,
}

type PResult<T> = Result<T, SyntaxError>;

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "while", "do", "goto", "switch", "case", "default", "break", "continue", "struct", "union",
    "enum", "typedef", "sizeof", "char", "double", "long", "short", "unsigned", "signed", "const",
    "static", "extern", "volatile", "register", "inline", "auto", "restrict",
];

const KEYWORDS: &[&str] = &["int", "float", "void", "for", "if", "else", "return"];

pub(crate) struct Parser<'t> {
    toks: &'t [Token],
    at: usize,
}

impl<'t> Parser<'t> {
    pub fn new(toks: &'t [Token]) -> Self {
        Parser { toks, at: 0 }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), TokenKind::Eof)
    }

    pub fn position(&self) -> usize {
        self.at
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn peek(&self) -> &TokenKind {
        &self.toks[self.at].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let i = (self.at + n).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn bump(&mut self) -> &Token {
        let t = &self.toks[self.at];
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), TokenKind::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), TokenKind::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(self.error_here(message))
    }

    fn error_here(&self, message: impl Into<String>) -> SyntaxError {
        let kind = match self.peek() {
            TokenKind::Invalid(_) => DiagnosticKind::Lexical,
            _ => DiagnosticKind::Syntax,
        };
        let message = match self.peek() {
            TokenKind::Invalid(s) => format!("lexical error: invalid input `{s}`"),
            _ => message.into(),
        };
        SyntaxError {
            pos: self.pos(),
            kind,
            message,
        }
    }

    fn unsupported<T>(&self, what: impl Into<String>) -> PResult<T> {
        Err(SyntaxError {
            pos: self.pos(),
            kind: DiagnosticKind::Unsupported,
            message: format!("unsupported construct: {}", what.into()),
        })
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.check_unsupported_token()?;
            self.error(format!("expected `{p}`, found {}", self.peek()))
        }
    }

    /// Turns tokens that belong to excluded C features into unsupported-construct errors.
    fn check_unsupported_token(&self) -> PResult<()> {
        match self.peek() {
            TokenKind::Ident(s) if UNSUPPORTED_KEYWORDS.contains(&s.as_str()) => {
                self.unsupported(format!("`{s}`"))
            }
            TokenKind::Punct(p)
                if matches!(
                    *p,
                    "->" | "." | "<<" | ">>" | "&" | "|" | "^" | "~" | "<<=" | ">>=" | "&="
                        | "|=" | "^=" | "..."
                ) =>
            {
                self.unsupported(format!("operator `{p}`"))
            }
            _ => Ok(()),
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        self.check_unsupported_token()?;
        match self.peek().clone() {
            TokenKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected {what}, found {other}")),
        }
    }

    fn scalar_type(&mut self) -> Option<ScalarType> {
        let ty = if self.is_keyword("int") {
            ScalarType::Int
        } else if self.is_keyword("float") {
            ScalarType::Float
        } else {
            return None;
        };
        self.bump();
        Some(ty)
    }

    /// Returns the function name as soon as it is known, for diagnostics.
    pub fn function(&mut self, name_out: &mut Option<String>) -> PResult<FunctionDef> {
        self.check_unsupported_token()?;
        let ret = if self.is_keyword("void") {
            self.bump();
            ReturnType::Void
        } else {
            match self.scalar_type() {
                Some(ScalarType::Int) => ReturnType::Int,
                Some(ScalarType::Float) => ReturnType::Float,
                None => return self.error(format!("expected function definition, found {}", self.peek())),
            }
        };
        if self.is_punct("*") {
            return self.unsupported("pointer return type");
        }
        let name = self.ident("function name")?;
        *name_out = Some(name.clone());
        if !self.is_punct("(") {
            return self.unsupported("global variable declaration");
        }
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if self.is_keyword("void") && matches!(self.peek_at(1), TokenKind::Punct(")")) {
            self.bump();
        } else if !self.is_punct(")") {
            loop {
                params.push(self.param()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        if self.is_punct(";") {
            return self.unsupported("function declaration without a body");
        }
        if !self.is_punct("{") {
            self.check_unsupported_token()?;
            return self.error(format!("expected `{{`, found {}", self.peek()));
        }
        let body = self.block()?;
        Ok(FunctionDef {
            ret,
            name,
            params,
            body,
        })
    }

    fn param(&mut self) -> PResult<Param> {
        self.check_unsupported_token()?;
        let Some(elem) = self.scalar_type() else {
            return self.error(format!("expected parameter type, found {}", self.peek()));
        };
        if self.is_punct("*") {
            return self.unsupported("pointer parameter");
        }
        if self.is_punct("(") {
            return self.unsupported("function pointer parameter");
        }
        let name = self.ident("parameter name")?;
        let dims = self.dims()?;
        Ok(Param { name, elem, dims })
    }

    fn dims(&mut self) -> PResult<Vec<Dim>> {
        let mut dims = Vec::new();
        while self.eat_punct("[") {
            let dim = match self.peek().clone() {
                TokenKind::Int(v) => {
                    self.bump();
                    Dim::Literal(v)
                }
                TokenKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                    self.bump();
                    Dim::Symbol(s)
                }
                TokenKind::Punct("]") => return self.unsupported("array without extent"),
                other => return self.error(format!("expected array extent, found {other}")),
            };
            self.expect_punct("]")?;
            dims.push(dim);
            if dims.len() > 2 {
                return self.unsupported("arrays with more than two dimensions");
            }
        }
        Ok(dims)
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("unterminated block: expected `}`");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn decl(&mut self, ty: ScalarType) -> PResult<Decl> {
        let mut vars = Vec::new();
        loop {
            if self.is_punct("*") {
                return self.unsupported("pointer declaration");
            }
            let name = self.ident("variable name")?;
            let dims = self.dims()?;
            let init = if self.eat_punct("=") {
                if self.is_punct("{") {
                    return self.unsupported("aggregate initializer");
                }
                Some(self.assign()?)
            } else {
                None
            };
            vars.push(Declarator { name, dims, init });
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(Decl { ty, vars })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        self.check_unsupported_token()?;
        if self.is_punct("{") {
            return Ok(Stmt::Block(self.block()?));
        }
        if self.eat_punct(";") {
            return Ok(Stmt::Empty);
        }
        if let Some(ty) = self.scalar_type() {
            let d = self.decl(ty)?;
            self.expect_punct(";")?;
            return Ok(Stmt::Decl(d));
        }
        if self.is_keyword("void") {
            return self.unsupported("nested function or void declaration");
        }
        if self.is_keyword("for") {
            self.bump();
            self.expect_punct("(")?;
            let init = if self.is_punct(";") {
                None
            } else if let Some(ty) = self.scalar_type() {
                Some(ForInit::Decl(self.decl(ty)?))
            } else {
                Some(ForInit::Expr(self.expr()?))
            };
            self.expect_punct(";")?;
            let cond = if self.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            let step = if self.is_punct(")") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::For {
                init,
                cond,
                step,
                body,
            });
        }
        if self.is_keyword("if") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.stmt()?);
            let otherwise = if self.is_keyword("else") {
                self.bump();
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If {
                cond,
                then,
                otherwise,
            });
        }
        if self.is_keyword("else") {
            return self.error("`else` without a matching `if`");
        }
        if self.is_keyword("return") {
            self.bump();
            let value = if self.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            return Ok(Stmt::Return(value));
        }
        let e = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Expr(e))
    }

    /// Comma-level expression.
    pub fn expr(&mut self) -> PResult<Expr> {
        let first = self.assign()?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_punct(",") {
            items.push(self.assign()?);
        }
        Ok(Expr::Comma(items))
    }

    fn assign(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let lhs = self.ternary()?;
        let op = match self.peek() {
            TokenKind::Punct("=") => AssignOp::Set,
            TokenKind::Punct("+=") => AssignOp::Compound(BinaryOp::Add),
            TokenKind::Punct("-=") => AssignOp::Compound(BinaryOp::Sub),
            TokenKind::Punct("*=") => AssignOp::Compound(BinaryOp::Mul),
            TokenKind::Punct("/=") => AssignOp::Compound(BinaryOp::Div),
            TokenKind::Punct("%=") => AssignOp::Compound(BinaryOp::Rem),
            _ => {
                self.check_unsupported_token()?;
                return Ok(lhs);
            }
        };
        if !lhs.is_lvalue() {
            return Err(SyntaxError {
                pos,
                kind: DiagnosticKind::Syntax,
                message: "assignment target is not a variable or array element".into(),
            });
        }
        self.bump();
        let value = self.assign()?;
        Ok(Expr::Assign {
            op,
            target: Box::new(lhs),
            value: Box::new(value),
        })
    }

    fn ternary(&mut self) -> PResult<Expr> {
        let cond = self.binary(0)?;
        if !self.eat_punct("?") {
            return Ok(cond);
        }
        let then = self.expr()?;
        self.expect_punct(":")?;
        let otherwise = self.ternary()?;
        Ok(Expr::Ternary {
            cond: Box::new(cond),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        })
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let TokenKind::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "&&" => BinaryOp::And,
            "||" => BinaryOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing over left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.check_unsupported_token()?;
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            TokenKind::Punct("-") => Some(UnaryOp::Neg),
            TokenKind::Punct("+") => Some(UnaryOp::Plus),
            TokenKind::Punct("!") => Some(UnaryOp::Not),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.unary()?;
            return Ok(Expr::Unary {
                op,
                operand: Box::new(operand),
            });
        }
        if self.is_punct("++") || self.is_punct("--") {
            let increment = self.is_punct("++");
            self.bump();
            let pos = self.pos();
            let target = self.unary()?;
            if !target.is_lvalue() {
                return Err(SyntaxError {
                    pos,
                    kind: DiagnosticKind::Syntax,
                    message: "increment/decrement target is not a variable or array element".into(),
                });
            }
            return Ok(Expr::Step {
                increment,
                prefix: true,
                target: Box::new(target),
            });
        }
        if self.is_punct("*") || self.is_punct("&") {
            return self.unsupported("pointer dereference or address-of");
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        if let Expr::Var(name) = &e {
            if self.is_punct("(") {
                return self.unsupported(format!("call to `{name}`"));
            }
            if self.is_punct("[") {
                let array = name.clone();
                let mut indices = Vec::new();
                while self.eat_punct("[") {
                    indices.push(self.expr()?);
                    self.expect_punct("]")?;
                }
                if indices.len() > 2 {
                    return self.unsupported("arrays with more than two dimensions");
                }
                e = Expr::Index { array, indices };
            }
        } else if self.is_punct("[") {
            return self.error("only named arrays can be subscripted");
        }
        if self.is_punct("++") || self.is_punct("--") {
            let increment = self.is_punct("++");
            if !e.is_lvalue() {
                return self.error("increment/decrement target is not a variable or array element");
            }
            self.bump();
            e = Expr::Step {
                increment,
                prefix: false,
                target: Box::new(e),
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        self.check_unsupported_token()?;
        match self.peek().clone() {
            TokenKind::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            TokenKind::Float(s) => {
                self.bump();
                Ok(Expr::Float(s))
            }
            TokenKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            TokenKind::Punct("(") => {
                self.bump();
                if self.is_keyword("int") || self.is_keyword("float") {
                    return self.unsupported("type cast");
                }
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            other => self.error(format!("expected expression, found {other}")),
        }
    }

    /// Skips past the function that failed to parse: to the `}` closing the
    /// first top-level brace at or after `start`, or to the next `;`.
    pub fn recover_from(&mut self, start: usize) {
        self.at = start;
        while !self.at_eof() {
            if self.is_punct(";") {
                self.bump();
                return;
            }
            if self.is_punct("{") {
                let mut depth = 0usize;
                while !self.at_eof() {
                    if self.is_punct("{") {
                        depth += 1;
                    } else if self.is_punct("}") {
                        depth -= 1;
                        if depth == 0 {
                            self.bump();
                            return;
                        }
                    }
                    self.bump();
                }
                return;
            }
            self.bump();
        }
    }
}
