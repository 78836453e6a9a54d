//! Arithmetic expression language used for user-supplied metric components,
//! potentials, wave profiles and bounding functions.
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            right-associative
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-x1^2` is `-(x1^2)`.
//! Free variables are `t`, `u`, `v` and `x1`..`x8`; `pi` and `e` are constants.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Number of variable slots: `t, u, v, x1..x8`.
pub const NVARS: usize = 11;

pub const SLOT_T: usize = 0;
pub const SLOT_U: usize = 1;
pub const SLOT_V: usize = 2;

pub fn slot_x(i: usize) -> usize {
    debug_assert!((1..=8).contains(&i));
    2 + i
}

fn variable_slot(name: &str) -> Option<usize> {
    match name {
        "t" => Some(SLOT_T),
        "u" => Some(SLOT_U),
        "v" => Some(SLOT_V),
        _ => {
            let rest = name.strip_prefix('x')?;
            let i: usize = rest.parse().ok()?;
            if (1..=8).contains(&i) && rest == i.to_string() {
                Some(slot_x(i))
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Parsed syntax tree. Identifiers are not resolved until [`Expr::bind`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesised form; re-parsing it yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Ident(name) => f.write_str(name),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                expected: vec!["number".into()],
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^(),".contains(&c) {
            out.push((i, Tok::Sym(c as char)));
            i += 1;
        } else {
            return Err(Error::Parse {
                offset: i,
                expected: vec!["number".into(), "identifier".into(), "operator".into()],
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T> {
        Err(Error::Parse {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(x) => {
                self.pos += 1;
                Ok(Expr::Num(x))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.eat('(') {
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return self.fail(&[",", ")"]);
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return self.fail(&[")"]);
                }
                Ok(inner)
            }
            _ => self.fail(&["number", "identifier", "(", "-"]),
        }
    }
}

/// Parses `src` into an unresolved syntax tree.
pub fn parse_expression(src: &str) -> Result<Expr> {
    if src.trim().is_empty() {
        return Err(Error::Parse {
            offset: 0,
            expected: vec!["expression".into()],
        });
    }
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let expected = ["+", "-", "*", "/", "^", "end of input"];
        return p.fail(&expected);
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func1 {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func2 {
    Min,
    Max,
    Pow,
}

fn builtin1(name: &str) -> Option<Func1> {
    Some(match name {
        "sin" => Func1::Sin,
        "cos" => Func1::Cos,
        "tan" => Func1::Tan,
        "exp" => Func1::Exp,
        "log" => Func1::Log,
        "sqrt" => Func1::Sqrt,
        "sinh" => Func1::Sinh,
        "cosh" => Func1::Cosh,
        "tanh" => Func1::Tanh,
        "abs" => Func1::Abs,
        _ => return None,
    })
}

fn builtin2(name: &str) -> Option<Func2> {
    Some(match name {
        "min" => Func2::Min,
        "max" => Func2::Max,
        "pow" => Func2::Pow,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    F1(Func1, Box<Node>),
    F2(Func2, Box<Node>, Box<Node>),
}

/// Named helper functions (e.g. wave profiles `a(u)`) that expressions may call.
#[derive(Debug, Clone, Default)]
pub struct FunctionTable {
    defs: BTreeMap<String, (Vec<String>, Expr)>,
}

impl FunctionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(&mut self, name: &str, params: &[&str], body: &str) -> Result<()> {
        let body = parse_expression(body)?;
        self.defs.insert(
            name.to_string(),
            (params.iter().map(|s| s.to_string()).collect(), body),
        );
        Ok(())
    }

    pub fn with(mut self, name: &str, params: &[&str], body: &str) -> Result<Self> {
        self.define(name, params, body)?;
        Ok(self)
    }
}

const MAX_INLINE_DEPTH: usize = 32;

fn bind_node(
    e: &Expr,
    table: &FunctionTable,
    locals: &BTreeMap<String, Node>,
    depth: usize,
) -> Result<Node> {
    Ok(match e {
        Expr::Num(x) => Node::Const(*x),
        Expr::Ident(name) => {
            if let Some(n) = locals.get(name) {
                n.clone()
            } else if let Some(slot) = variable_slot(name) {
                Node::Var(slot)
            } else if name == "pi" {
                Node::Const(std::f64::consts::PI)
            } else if name == "e" {
                Node::Const(std::f64::consts::E)
            } else {
                return Err(Error::UnknownIdentifier(name.clone()));
            }
        }
        Expr::Neg(a) => Node::Neg(Box::new(bind_node(a, table, locals, depth)?)),
        Expr::Bin(op, a, b) => Node::Bin(
            *op,
            Box::new(bind_node(a, table, locals, depth)?),
            Box::new(bind_node(b, table, locals, depth)?),
        ),
        Expr::Call(name, args) => {
            let bound: Vec<Node> = args
                .iter()
                .map(|a| bind_node(a, table, locals, depth))
                .collect::<Result<_>>()?;
            let arity = |n: usize| -> Result<()> {
                if bound.len() == n {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "{name} takes {n} argument(s), got {}",
                        bound.len()
                    )))
                }
            };
            if let Some(f) = builtin1(name) {
                arity(1)?;
                Node::F1(f, Box::new(bound.into_iter().next().unwrap()))
            } else if let Some(f) = builtin2(name) {
                arity(2)?;
                let mut it = bound.into_iter();
                Node::F2(f, Box::new(it.next().unwrap()), Box::new(it.next().unwrap()))
            } else if let Some((params, body)) = table.defs.get(name) {
                arity(params.len())?;
                if depth >= MAX_INLINE_DEPTH {
                    return Err(Error::InvalidArgument(format!(
                        "function {name} nests too deeply"
                    )));
                }
                let inner: BTreeMap<String, Node> =
                    params.iter().cloned().zip(bound).collect();
                bind_node(body, table, &inner, depth + 1)?
            } else {
                return Err(Error::UnknownIdentifier(name.clone()));
            }
        }
    })
}

impl Expr {
    /// Renames every free identifier `from` to `to`.
    pub fn rename(&self, from: &str, to: &str) -> Expr {
        match self {
            Expr::Num(x) => Expr::Num(*x),
            Expr::Ident(n) if n == from => Expr::Ident(to.to_string()),
            Expr::Ident(n) => Expr::Ident(n.clone()),
            Expr::Neg(a) => Expr::Neg(Box::new(a.rename(from, to))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.rename(from, to)), Box::new(b.rename(from, to))),
            Expr::Call(name, args) => Expr::Call(name.clone(), args.iter().map(|a| a.rename(from, to)).collect()),
        }
    }

    /// Resolves identifiers to variable slots, constants and functions.
    pub fn bind(&self, table: &FunctionTable) -> Result<BoundExpr> {
        let root = bind_node(self, table, &BTreeMap::new(), 0)?;
        Ok(BoundExpr {
            source: self.to_string(),
            root,
        })
    }
}

/// An expression ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundExpr {
    source: String,
    root: Node,
}

fn eval_node(n: &Node, vars: &[f64; NVARS]) -> Result<f64> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var(s) => vars[*s],
        Node::Neg(a) => -eval_node(a, vars)?,
        Node::Bin(op, a, b) => {
            let x = eval_node(a, vars)?;
            let y = eval_node(b, vars)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(Error::Eval("division by zero".into()));
                    }
                    x / y
                }
                BinOp::Pow => checked_pow(x, y)?,
            }
        }
        Node::F1(f, a) => {
            let x = eval_node(a, vars)?;
            match f {
                Func1::Sin => x.sin(),
                Func1::Cos => x.cos(),
                Func1::Tan => x.tan(),
                Func1::Exp => x.exp(),
                Func1::Log => {
                    if x <= 0.0 {
                        return Err(Error::Eval(format!("log of nonpositive value {x}")));
                    }
                    x.ln()
                }
                Func1::Sqrt => {
                    if x < 0.0 {
                        return Err(Error::Eval(format!("sqrt of negative value {x}")));
                    }
                    x.sqrt()
                }
                Func1::Sinh => x.sinh(),
                Func1::Cosh => x.cosh(),
                Func1::Tanh => x.tanh(),
                Func1::Abs => x.abs(),
            }
        }
        Node::F2(f, a, b) => {
            let x = eval_node(a, vars)?;
            let y = eval_node(b, vars)?;
            match f {
                Func2::Min => x.min(y),
                Func2::Max => x.max(y),
                Func2::Pow => checked_pow(x, y)?,
            }
        }
    })
}

fn checked_pow(x: f64, y: f64) -> Result<f64> {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        if x == 0.0 && y < 0.0 {
            return Err(Error::Eval("division by zero".into()));
        }
        return Ok(x.powi(y as i32));
    }
    let r = x.powf(y);
    if r.is_nan() && x.is_finite() && y.is_finite() {
        return Err(Error::Eval(format!("{x}^{y} is undefined")));
    }
    if x == 0.0 && y < 0.0 {
        return Err(Error::Eval("division by zero".into()));
    }
    Ok(r)
}

impl BoundExpr {
    pub fn eval(&self, vars: &[f64; NVARS]) -> Result<f64> {
        eval_node(&self.root, vars)
    }

    /// Canonical text of the expression before binding.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// True if the expression reads variable slot `slot`.
    pub fn uses_slot(&self, slot: usize) -> bool {
        fn walk(n: &Node, slot: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(s) => *s == slot,
                Node::Neg(a) | Node::F1(_, a) => walk(a, slot),
                Node::Bin(_, a, b) | Node::F2(_, a, b) => walk(a, slot) || walk(b, slot),
            }
        }
        walk(&self.root, slot)
    }
}

/// Parses and binds in one step.
pub fn compile(src: &str, table: &FunctionTable) -> Result<BoundExpr> {
    parse_expression(src)?.bind(table)
}

/// How chart coordinates map onto expression variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordNames {
    /// Coordinates are `x1, x2, ...`.
    Generic,
    /// Coordinates are `u, v, x1, ..., x(n-2)` (null coordinates of a wave).
    Null,
}

impl CoordNames {
    pub fn vars(self, p: &[f64], t: f64) -> [f64; NVARS] {
        let mut vars = [0.0; NVARS];
        vars[SLOT_T] = t;
        match self {
            CoordNames::Generic => {
                for (i, &x) in p.iter().enumerate().take(8) {
                    vars[slot_x(i + 1)] = x;
                }
            }
            CoordNames::Null => {
                vars[SLOT_U] = p[0];
                vars[SLOT_V] = p[1];
                for (i, &x) in p.iter().skip(2).enumerate().take(8) {
                    vars[slot_x(i + 1)] = x;
                }
            }
        }
        vars
    }
}
