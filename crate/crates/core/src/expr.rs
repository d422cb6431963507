//! Closed-form coordinate expressions: a small recursive-descent parser, a
//! printer whose output re-parses to the same tree, and jet evaluation.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | atom ("^" ["-"] int)?
//! atom   := number | ident | func "(" expr ")" | "(" expr ")"
//! func   := sin | cos | tan | sinh | cosh | exp | sqrt
//! ```
//!
//! Identifiers are coordinates `x1..xn` or declared parameter names.

pub mod metric_file;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::jets::{Jet, JetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Exp,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply_f64(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Expression tree. `Var(i)` is the 0-based coordinate `x{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Const(f64),
    Var(usize),
    Param(String),
    Neg(Box<ExprAst>),
    Call(Func, Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, i32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("unexpected {found} at offset {offset}")]
    Unexpected { offset: usize, found: String },
    #[error("unbalanced parenthesis at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("exponent at offset {offset} is not an integer")]
    NonIntegerExponent { offset: usize },
    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),
    #[error("variable x{index} not supplied (environment has {available})")]
    MissingVariable { index: usize, available: usize },
    #[error("{0}")]
    Jet(#[from] JetError),
    #[error("{op} of {value:e} is not defined")]
    Domain { op: &'static str, value: f64 },
}

impl ExprError {
    /// Byte offset of a parse error, if any.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ExprError::Unexpected { offset, .. }
            | ExprError::Unbalanced { offset }
            | ExprError::UnknownIdentifier { offset, .. }
            | ExprError::NonIntegerExponent { offset } => Some(*offset),
            ExprError::Empty => Some(0),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Next token and its starting offset.
    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let bytes = rest.as_bytes();
            let mut end = 0;
            let mut integral = true;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end < bytes.len() && bytes[end] == b'.' {
                integral = false;
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut probe = end + 1;
                if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
                    probe += 1;
                }
                if probe < bytes.len() && bytes[probe].is_ascii_digit() {
                    integral = false;
                    end = probe;
                    while end < bytes.len() && bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                }
            }
            let text = &rest[..end];
            let value: f64 = text.parse().map_err(|_| ExprError::Unexpected {
                offset: start,
                found: format!("malformed number `{text}`"),
            })?;
            self.pos += end;
            return Ok((Tok::Num(value, integral), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let end = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += end;
            return Ok((Tok::Ident(rest[..end].to_string()), start));
        }
        self.pos += c.len_utf8();
        match c {
            '+' | '-' | '*' | '/' | '^' => Ok((Tok::Op(c), start)),
            '(' => Ok((Tok::LParen, start)),
            ')' => Ok((Tok::RParen, start)),
            other => Err(ExprError::Unexpected {
                offset: start,
                found: format!("character `{other}`"),
            }),
        }
    }
}

// ---------------------------------------------------------------- parsing

/// Names are resolved after the syntax pass, so syntax errors win over
/// unknown identifiers.
enum Raw {
    Num(f64),
    Ident(String, usize),
    Neg(Box<Raw>),
    Call(Func, Box<Raw>),
    Binary(BinOp, Box<Raw>, Box<Raw>),
    Pow(Box<Raw>, i32),
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    depth: Vec<usize>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ExprError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, at) = lexer.next()?;
        Ok(Parser {
            lexer,
            tok,
            at,
            depth: Vec::new(),
        })
    }

    fn bump(&mut self) -> Result<(), ExprError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn unexpected(&self) -> ExprError {
        let found = match &self.tok {
            Tok::End => "end of input".to_string(),
            Tok::Num(v, _) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => {
                if self.depth.is_empty() {
                    return ExprError::Unbalanced { offset: self.at };
                }
                "`)`".to_string()
            }
        };
        ExprError::Unexpected {
            offset: self.at,
            found,
        }
    }

    fn expr(&mut self) -> Result<Raw, ExprError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = self.tok {
            self.bump()?;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Raw::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Raw, ExprError> {
        let mut lhs = self.factor()?;
        while let Tok::Op(c @ ('*' | '/')) = self.tok {
            self.bump()?;
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Raw::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Raw, ExprError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            return Ok(Raw::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.tok != Tok::Op('^') {
            return Ok(base);
        }
        self.bump()?;
        let negative = if self.tok == Tok::Op('-') {
            self.bump()?;
            true
        } else {
            false
        };
        match self.tok {
            Tok::Num(v, true) if v <= i32::MAX as f64 => {
                self.bump()?;
                let e = v as i32;
                Ok(Raw::Pow(Box::new(base), if negative { -e } else { e }))
            }
            Tok::Num(..) | Tok::Ident(_) | Tok::LParen => {
                Err(ExprError::NonIntegerExponent { offset: self.at })
            }
            _ => Err(self.unexpected()),
        }
    }

    fn atom(&mut self) -> Result<Raw, ExprError> {
        match self.tok.clone() {
            Tok::Num(v, _) => {
                self.bump()?;
                Ok(Raw::Num(v))
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::LParen {
                        return Err(self.unexpected());
                    }
                    let arg = self.parenthesized()?;
                    return Ok(Raw::Call(func, Box::new(arg)));
                }
                Ok(Raw::Ident(name, at))
            }
            Tok::LParen => self.parenthesized(),
            _ => Err(self.unexpected()),
        }
    }

    fn parenthesized(&mut self) -> Result<Raw, ExprError> {
        let open = self.at;
        self.depth.push(open);
        self.bump()?;
        let inner = self.expr()?;
        if self.tok != Tok::RParen {
            if self.tok == Tok::End {
                return Err(ExprError::Unbalanced { offset: self.at });
            }
            return Err(self.unexpected());
        }
        self.depth.pop();
        self.bump()?;
        Ok(inner)
    }
}

fn resolve(raw: Raw, n: usize, params: &BTreeSet<String>) -> Result<ExprAst, ExprError> {
    Ok(match raw {
        Raw::Num(v) => ExprAst::Const(v),
        Raw::Ident(name, offset) => {
            if let Some(idx) = coordinate_index(&name, n) {
                ExprAst::Var(idx)
            } else if params.contains(&name) {
                ExprAst::Param(name)
            } else {
                return Err(ExprError::UnknownIdentifier { offset, name });
            }
        }
        Raw::Neg(a) => ExprAst::Neg(Box::new(resolve(*a, n, params)?)),
        Raw::Call(f, a) => ExprAst::Call(f, Box::new(resolve(*a, n, params)?)),
        Raw::Binary(op, a, b) => ExprAst::Binary(
            op,
            Box::new(resolve(*a, n, params)?),
            Box::new(resolve(*b, n, params)?),
        ),
        Raw::Pow(a, e) => ExprAst::Pow(Box::new(resolve(*a, n, params)?), e),
    })
}

fn coordinate_index(name: &str, n: usize) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    (1..=n).contains(&k).then(|| k - 1)
}

/// Parse `source` over coordinates `x1..xn` and the given parameter names.
pub fn parse(source: &str, n: usize, params: &BTreeSet<String>) -> Result<ExprAst, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Empty);
    }
    let mut parser = Parser::new(source)?;
    let raw = parser.expr()?;
    if parser.tok != Tok::End {
        return Err(parser.unexpected());
    }
    resolve(raw, n, params)
}

/// Parse with no parameters.
pub fn parse_plain(source: &str, n: usize) -> Result<ExprAst, ExprError> {
    parse(source, n, &BTreeSet::new())
}

// ---------------------------------------------------------------- evaluation

/// Coordinate jets and parameter values for [`ExprAst::evaluate`].
pub struct EvalEnv<'a> {
    pub vars: &'a [Jet],
    pub params: &'a BTreeMap<String, f64>,
}

impl ExprAst {
    pub fn constant(v: f64) -> ExprAst {
        ExprAst::Const(v)
    }

    pub fn var(i: usize) -> ExprAst {
        ExprAst::Var(i)
    }

    pub fn evaluate(&self, env: &EvalEnv<'_>) -> Result<Jet, ExprError> {
        let space = env
            .vars
            .first()
            .map(|j| j.space().clone())
            .ok_or(ExprError::MissingVariable {
                index: 1,
                available: 0,
            })?;
        self.eval_jet(env, &space)
    }

    fn eval_jet(
        &self,
        env: &EvalEnv<'_>,
        space: &std::sync::Arc<crate::jets::JetSpace>,
    ) -> Result<Jet, ExprError> {
        Ok(match self {
            ExprAst::Const(v) => Jet::constant(space, *v),
            ExprAst::Var(i) => env
                .vars
                .get(*i)
                .cloned()
                .ok_or(ExprError::MissingVariable {
                    index: i + 1,
                    available: env.vars.len(),
                })?,
            ExprAst::Param(name) => Jet::constant(
                space,
                *env
                    .params
                    .get(name)
                    .ok_or_else(|| ExprError::MissingParameter(name.clone()))?,
            ),
            ExprAst::Neg(a) => a.eval_jet(env, space)?.scale(-1.0),
            ExprAst::Call(f, a) => {
                let u = a.eval_jet(env, space)?;
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Tan => u.tan()?,
                    Func::Sinh => u.sinh(),
                    Func::Cosh => u.cosh(),
                    Func::Exp => u.exp(),
                    Func::Sqrt => u.sqrt()?,
                }
            }
            ExprAst::Binary(op, a, b) => {
                let u = a.eval_jet(env, space)?;
                // constant right operands skip a full jet product
                if let ExprAst::Const(c) = **b {
                    return Ok(match op {
                        BinOp::Add => u.add_scalar(c),
                        BinOp::Sub => u.add_scalar(-c),
                        BinOp::Mul => u.scale(c),
                        BinOp::Div => {
                            if c.abs() <= crate::jets::SINGULAR_THRESHOLD {
                                return Err(JetError::Singular {
                                    op: "division",
                                    value: c,
                                }
                                .into());
                            }
                            u.scale(1.0 / c)
                        }
                    });
                }
                let v = b.eval_jet(env, space)?;
                match op {
                    BinOp::Add => &u + &v,
                    BinOp::Sub => &u - &v,
                    BinOp::Mul => &u * &v,
                    BinOp::Div => u.div_jet(&v)?,
                }
            }
            ExprAst::Pow(a, e) => a.eval_jet(env, space)?.powi(*e)?,
        })
    }

    /// Plain value at a point.
    pub fn eval_f64(&self, point: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, ExprError> {
        Ok(match self {
            ExprAst::Const(v) => *v,
            ExprAst::Var(i) => *point.get(*i).ok_or(ExprError::MissingVariable {
                index: i + 1,
                available: point.len(),
            })?,
            ExprAst::Param(name) => *params
                .get(name)
                .ok_or_else(|| ExprError::MissingParameter(name.clone()))?,
            ExprAst::Neg(a) => -a.eval_f64(point, params)?,
            ExprAst::Call(f, a) => {
                let u = a.eval_f64(point, params)?;
                if *f == Func::Sqrt && u < 0.0 {
                    return Err(ExprError::Domain { op: "sqrt", value: u });
                }
                f.apply_f64(u)
            }
            ExprAst::Binary(op, a, b) => {
                let u = a.eval_f64(point, params)?;
                let v = b.eval_f64(point, params)?;
                match op {
                    BinOp::Add => u + v,
                    BinOp::Sub => u - v,
                    BinOp::Mul => u * v,
                    BinOp::Div => {
                        if v.abs() <= crate::jets::SINGULAR_THRESHOLD {
                            return Err(ExprError::Domain { op: "division", value: v });
                        }
                        u / v
                    }
                }
            }
            ExprAst::Pow(a, e) => {
                let u = a.eval_f64(point, params)?;
                if *e < 0 && u.abs() <= crate::jets::SINGULAR_THRESHOLD {
                    return Err(ExprError::Domain { op: "division", value: u });
                }
                u.powi(*e)
            }
        })
    }

    // ------------------------------------------------------------ algebra

    pub fn is_const(&self, v: f64) -> bool {
        matches!(self, ExprAst::Const(c) if *c == v)
    }

    /// Sum with trivial zero elimination.
    pub fn add(a: ExprAst, b: ExprAst) -> ExprAst {
        if a.is_const(0.0) {
            b
        } else if b.is_const(0.0) {
            a
        } else {
            ExprAst::Binary(BinOp::Add, Box::new(a), Box::new(b))
        }
    }

    pub fn sub(a: ExprAst, b: ExprAst) -> ExprAst {
        if b.is_const(0.0) {
            a
        } else if a.is_const(0.0) {
            ExprAst::neg(b)
        } else {
            ExprAst::Binary(BinOp::Sub, Box::new(a), Box::new(b))
        }
    }

    pub fn mul(a: ExprAst, b: ExprAst) -> ExprAst {
        if a.is_const(0.0) || b.is_const(0.0) {
            ExprAst::Const(0.0)
        } else if a.is_const(1.0) {
            b
        } else if b.is_const(1.0) {
            a
        } else {
            ExprAst::Binary(BinOp::Mul, Box::new(a), Box::new(b))
        }
    }

    pub fn div(a: ExprAst, b: ExprAst) -> ExprAst {
        if a.is_const(0.0) {
            ExprAst::Const(0.0)
        } else if b.is_const(1.0) {
            a
        } else {
            ExprAst::Binary(BinOp::Div, Box::new(a), Box::new(b))
        }
    }

    pub fn neg(a: ExprAst) -> ExprAst {
        match a {
            ExprAst::Const(c) if c == 0.0 => ExprAst::Const(0.0),
            ExprAst::Neg(inner) => *inner,
            other => ExprAst::Neg(Box::new(other)),
        }
    }

    pub fn pow(a: ExprAst, e: i32) -> ExprAst {
        match e {
            0 => ExprAst::Const(1.0),
            1 => a,
            _ => ExprAst::Pow(Box::new(a), e),
        }
    }

    pub fn call(f: Func, a: ExprAst) -> ExprAst {
        ExprAst::Call(f, Box::new(a))
    }

    /// Symbolic partial derivative with respect to coordinate `var` (0-based).
    pub fn diff(&self, var: usize) -> ExprAst {
        use ExprAst as E;
        match self {
            E::Const(_) | E::Param(_) => E::Const(0.0),
            E::Var(i) => E::Const(if *i == var { 1.0 } else { 0.0 }),
            E::Neg(a) => E::neg(a.diff(var)),
            E::Call(f, a) => {
                let da = a.diff(var);
                if da.is_const(0.0) {
                    return E::Const(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => E::call(Func::Cos, inner),
                    Func::Cos => E::neg(E::call(Func::Sin, inner)),
                    Func::Tan => E::pow(E::call(Func::Cos, inner), -2),
                    Func::Sinh => E::call(Func::Cosh, inner),
                    Func::Cosh => E::call(Func::Sinh, inner),
                    Func::Exp => self.clone(),
                    Func::Sqrt => E::div(E::Const(0.5), self.clone()),
                };
                E::mul(outer, da)
            }
            E::Binary(op, a, b) => {
                let (da, db) = (a.diff(var), b.diff(var));
                match op {
                    BinOp::Add => E::add(da, db),
                    BinOp::Sub => E::sub(da, db),
                    BinOp::Mul => E::add(
                        E::mul(da, (**b).clone()),
                        E::mul((**a).clone(), db),
                    ),
                    BinOp::Div => {
                        // (a/b)' = a'/b - a b' / b^2
                        E::sub(
                            E::div(da, (**b).clone()),
                            E::div(E::mul((**a).clone(), db), E::pow((**b).clone(), 2)),
                        )
                    }
                }
            }
            E::Pow(a, e) => {
                let da = a.diff(var);
                if da.is_const(0.0) {
                    return E::Const(0.0);
                }
                E::mul(
                    E::mul(E::Const(*e as f64), E::pow((**a).clone(), e - 1)),
                    da,
                )
            }
        }
    }

    /// Replace `Var(i)` by `Var(map(i))`.
    pub fn remap_vars(&self, map: &dyn Fn(usize) -> usize) -> ExprAst {
        use ExprAst as E;
        match self {
            E::Var(i) => E::Var(map(*i)),
            E::Const(_) | E::Param(_) => self.clone(),
            E::Neg(a) => E::Neg(Box::new(a.remap_vars(map))),
            E::Call(f, a) => E::Call(*f, Box::new(a.remap_vars(map))),
            E::Binary(op, a, b) => {
                E::Binary(*op, Box::new(a.remap_vars(map)), Box::new(b.remap_vars(map)))
            }
            E::Pow(a, e) => E::Pow(Box::new(a.remap_vars(map)), *e),
        }
    }

    /// Coordinates referenced by the expression (0-based).
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.walk(&mut |node| {
            if let ExprAst::Var(i) = node {
                out.insert(*i);
            }
        });
        out
    }

    pub fn parameters(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |node| {
            if let ExprAst::Param(p) = node {
                out.insert(p.clone());
            }
        });
        out
    }

    fn walk(&self, visit: &mut dyn FnMut(&ExprAst)) {
        visit(self);
        match self {
            ExprAst::Neg(a) | ExprAst::Call(_, a) | ExprAst::Pow(a, _) => a.walk(visit),
            ExprAst::Binary(_, a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            _ => {}
        }
    }

    /// Evaluate every variable-free, parameter-free subtree.
    pub fn fold_constants(&self) -> ExprAst {
        use ExprAst as E;
        let folded = match self {
            E::Const(_) | E::Var(_) | E::Param(_) => return self.clone(),
            E::Neg(a) => E::Neg(Box::new(a.fold_constants())),
            E::Call(f, a) => E::Call(*f, Box::new(a.fold_constants())),
            E::Binary(op, a, b) => {
                E::Binary(*op, Box::new(a.fold_constants()), Box::new(b.fold_constants()))
            }
            E::Pow(a, e) => E::Pow(Box::new(a.fold_constants()), *e),
        };
        let closed = match &folded {
            E::Neg(a) | E::Call(_, a) | E::Pow(a, _) => matches!(**a, E::Const(_)),
            E::Binary(_, a, b) => matches!(**a, E::Const(_)) && matches!(**b, E::Const(_)),
            _ => false,
        };
        if closed {
            if let Ok(v) = folded.eval_f64(&[], &BTreeMap::new()) {
                if v.is_finite() {
                    return E::Const(v);
                }
            }
        }
        folded
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Binary(op, ..) => op.precedence(),
            ExprAst::Neg(_) => 3,
            ExprAst::Pow(..) => 4,
            ExprAst::Const(v) if *v < 0.0 || v.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn fmt_const(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let magnitude = v.abs();
    let text = if magnitude != 0.0 && !(1e-5..1e16).contains(&magnitude) {
        format!("{magnitude:e}")
    } else {
        format!("{magnitude}")
    };
    if v.is_sign_negative() {
        write!(f, "-{text}")
    } else {
        f.write_str(&text)
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Const(v) => fmt_const(*v, f),
            ExprAst::Var(i) => write!(f, "x{}", i + 1),
            ExprAst::Param(p) => f.write_str(p),
            ExprAst::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            ExprAst::Call(func, a) => write!(f, "{}({a})", func.name()),
            ExprAst::Binary(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            ExprAst::Pow(a, e) => {
                if a.precedence() < 5 {
                    write!(f, "({a})^{e}")
                } else {
                    write!(f, "{a}^{e}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::seed_jets;

    fn params(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_power_of_call() {
        let ast = parse("cosh(x1)^2", 4, &params(&[])).unwrap();
        assert_eq!(
            ast,
            ExprAst::Pow(Box::new(ExprAst::Call(Func::Cosh, Box::new(ExprAst::Var(0)))), 2)
        );
    }

    #[test]
    fn parses_taub_nut_potential() {
        let ast = parse("1 + m/x1", 4, &params(&["m"])).unwrap();
        assert_eq!(
            ast,
            ExprAst::Binary(
                BinOp::Add,
                Box::new(ExprAst::Const(1.0)),
                Box::new(ExprAst::Binary(
                    BinOp::Div,
                    Box::new(ExprAst::Param("m".into())),
                    Box::new(ExprAst::Var(0))
                ))
            )
        );
    }

    #[test]
    fn truncated_input_reports_end_offset() {
        let err = parse("x^2*(", 4, &params(&[])).unwrap_err();
        assert_eq!(err.offset(), Some(5), "{err}");
    }

    #[test]
    fn error_kinds() {
        let p = params(&[]);
        assert!(matches!(parse("(x1 + 1", 2, &p), Err(ExprError::Unbalanced { .. })));
        assert!(matches!(parse("x1 + 1)", 2, &p), Err(ExprError::Unbalanced { offset: 6 })));
        assert!(matches!(
            parse("x3 + 1", 2, &p),
            Err(ExprError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(parse("x1^1.5", 2, &p), Err(ExprError::NonIntegerExponent { offset: 3 })));
        assert!(matches!(parse("   ", 2, &p), Err(ExprError::Empty)));
        assert!(matches!(parse("sin x1", 2, &p), Err(ExprError::Unexpected { .. })));
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let ast = parse_plain("-x1^2", 1).unwrap();
        assert_eq!(ast.eval_f64(&[3.0], &BTreeMap::new()).unwrap(), -9.0);
        let ast = parse_plain("2*-x1", 1).unwrap();
        assert_eq!(ast.eval_f64(&[3.0], &BTreeMap::new()).unwrap(), -6.0);
        let ast = parse_plain("(1 + x1)^-2", 1).unwrap();
        assert_eq!(ast.eval_f64(&[1.0], &BTreeMap::new()).unwrap(), 0.25);
    }

    #[test]
    fn evaluates_sum_of_squares() {
        let ast = parse_plain("x1^2 + x2^2", 2).unwrap();
        let vars = seed_jets(&[3.0, 4.0], 1).unwrap();
        let none = BTreeMap::new();
        let j = ast.evaluate(&EvalEnv { vars: &vars, params: &none }).unwrap();
        assert_eq!(j.value(), 25.0);
        assert_eq!(j.gradient(), vec![6.0, 8.0]);
    }

    #[test]
    fn evaluates_pp_wave_exponential() {
        let ast = parse_plain("exp(-sqrt(2)*x1)", 1).unwrap();
        let vars = seed_jets(&[0.0], 2).unwrap();
        let none = BTreeMap::new();
        let j = ast.evaluate(&EvalEnv { vars: &vars, params: &none }).unwrap();
        assert!((j.value() - 1.0).abs() < 1e-15);
        assert!((j.partial(&[1]).unwrap() + 2f64.sqrt()).abs() < 1e-15);
        assert!((j.partial(&[2]).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn evaluates_fubini_study_component() {
        let ast = parse_plain("1/2*cos(x1)^2*sin(x1)^2", 1).unwrap();
        let v = ast
            .eval_f64(&[std::f64::consts::FRAC_PI_4], &BTreeMap::new())
            .unwrap();
        assert!((v - 0.125).abs() < 1e-15);
    }

    #[test]
    fn missing_parameter_is_reported() {
        let ast = parse("m*x1", 1, &params(&["m"])).unwrap();
        let vars = seed_jets(&[1.0], 1).unwrap();
        let none = BTreeMap::new();
        assert!(matches!(
            ast.evaluate(&EvalEnv { vars: &vars, params: &none }),
            Err(ExprError::MissingParameter(_))
        ));
    }

    #[test]
    fn singular_division_during_evaluation() {
        let ast = parse_plain("1/x1", 1).unwrap();
        let vars = seed_jets(&[0.0], 1).unwrap();
        let none = BTreeMap::new();
        assert!(matches!(
            ast.evaluate(&EvalEnv { vars: &vars, params: &none }),
            Err(ExprError::Jet(JetError::Singular { .. }))
        ));
    }

    #[test]
    fn printing_reparses_to_same_tree() {
        for src in [
            "x1 - (x2 - x3)",
            "x1 / (x2 * x3)",
            "-(x1 + x2)^3",
            "(-x1)^2",
            "exp(-sqrt(2)*x1)*(x2^2)",
            "1/2*cos(x1)^2*(sin(x1)^2*(1 - sin(x3)^2) + 0.000001)",
            "(x1 + x2)^-1",
        ] {
            let a = parse_plain(src, 3).unwrap();
            let b = parse_plain(&a.to_string(), 3).unwrap();
            assert_eq!(a, b, "{src} -> {a}");
        }
    }

    #[test]
    fn symbolic_derivative_matches_jets() {
        let ast = parse_plain("sin(x1*x2)/(1 + x2^2) + sqrt(x1)*exp(-x2) - tan(x1)*cosh(x2)", 2)
            .unwrap();
        let point = [0.7, -0.4];
        let vars = seed_jets(&point, 2).unwrap();
        let none = BTreeMap::new();
        let j = ast.evaluate(&EvalEnv { vars: &vars, params: &none }).unwrap();
        for v in 0..2 {
            let d = ast.diff(v).eval_f64(&point, &none).unwrap();
            assert!((d - j.first(v)).abs() < 1e-13);
        }
    }

    #[test]
    fn folding_constants() {
        let ast = parse_plain("sqrt(2)*x1 + 2^3", 1).unwrap();
        let folded = ast.fold_constants();
        assert_eq!(
            folded,
            ExprAst::Binary(
                BinOp::Add,
                Box::new(ExprAst::Binary(
                    BinOp::Mul,
                    Box::new(ExprAst::Const(2f64.sqrt())),
                    Box::new(ExprAst::Var(0))
                )),
                Box::new(ExprAst::Const(8.0))
            )
        );
    }
}
