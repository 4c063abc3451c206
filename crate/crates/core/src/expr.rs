//! Arithmetic expressions used to define the equation data.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than a leading minus, so
//! `-t^2` is `-(t^2)` while `2^-1` is `2^(-1)`. The identifiers `pi` and
//! `e` are predefined constants and never appear among the free variables.
//!
//! [`Expression::eval`] takes a name-keyed binding map. Hot loops should
//! call [`Expression::compile`] once and evaluate the resulting
//! [`CompiledExpr`] with positional slots.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use smallvec::SmallVec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sign => "sign",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Abstract syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Const(Constant),
    Var(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Node::Num(_) | Node::Const(_) => {}
            Node::Var(name) => {
                out.insert(name.clone());
            }
            Node::Neg(inner) => inner.collect_vars(out),
            Node::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

/// Prints with explicit parentheses around every compound subterm, so the
/// output re-parses to the same tree.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Const(Constant::Pi) => f.write_str("pi"),
            Node::Const(Constant::E) => f.write_str("e"),
            Node::Var(name) => f.write_str(name),
            Node::Neg(inner) => write!(f, "(-{inner})"),
            Node::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
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

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {got} (byte {offset})")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {what} in `{node}`")]
    Domain { what: &'static str, node: String },
}

/// A parsed, immutable expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    ast: Node,
    free_vars: BTreeSet<String>,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Expression, ParseError> {
        let ast = Parser::new(source).parse_all()?;
        Ok(Expression::from_ast(ast))
    }

    pub fn from_ast(ast: Node) -> Expression {
        let mut free_vars = BTreeSet::new();
        ast.collect_vars(&mut free_vars);
        Expression { ast, free_vars }
    }

    pub fn constant(value: f64) -> Expression {
        Expression::from_ast(Node::Num(value))
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn free_vars(&self) -> &BTreeSet<String> {
        &self.free_vars
    }

    /// True for the literal `0` (and `-0`), used to detect switched-off terms.
    pub fn is_zero_literal(&self) -> bool {
        match &self.ast {
            Node::Num(v) => *v == 0.0,
            Node::Neg(inner) => matches!(**inner, Node::Num(v) if v == 0.0),
            _ => false,
        }
    }

    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
        eval_node(&self.ast, bindings)
    }

    /// Convenience wrapper over [`Expression::eval`] for literal bindings.
    pub fn eval_with(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let map = bindings.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self.eval(&map)
    }

    /// Evaluates an expression without free variables.
    pub fn eval_constant(&self) -> Result<f64, EvalError> {
        self.eval(&HashMap::new())
    }

    /// Lowers the tree to a postfix program over positional `slots`.
    /// Every free variable must name one of the slots.
    pub fn compile(&self, slots: &[&str]) -> Result<CompiledExpr, EvalError> {
        let mut prog = Vec::new();
        let mut labels = Vec::new();
        lower(&self.ast, slots, &mut prog, &mut labels)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &prog {
            depth = depth + 1 - op.pops();
            max_depth = max_depth.max(depth);
        }
        Ok(CompiledExpr {
            prog,
            labels,
            n_slots: slots.len(),
            max_depth,
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

impl FromStr for Expression {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

fn domain(what: &'static str, node: &Node) -> EvalError {
    EvalError::Domain {
        what,
        node: node.to_string(),
    }
}

fn apply_binary(op: BinOp, l: f64, r: f64) -> Result<f64, &'static str> {
    match op {
        BinOp::Add => Ok(l + r),
        BinOp::Sub => Ok(l - r),
        BinOp::Mul => Ok(l * r),
        BinOp::Div => {
            if r == 0.0 {
                Err("division by zero")
            } else {
                Ok(l / r)
            }
        }
        BinOp::Pow => {
            let v = l.powf(r);
            if v.is_nan() {
                Err("power of negative base with non-integer exponent")
            } else {
                Ok(v)
            }
        }
    }
}

fn apply_func(func: Func, x: f64, y: f64) -> Result<f64, &'static str> {
    Ok(match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Tanh => x.tanh(),
        Func::Exp => x.exp(),
        Func::Ln => {
            if x <= 0.0 {
                return Err("ln of non-positive value");
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err("sqrt of negative value");
            }
            x.sqrt()
        }
        Func::Abs => x.abs(),
        Func::Min => x.min(y),
        Func::Max => x.max(y),
        Func::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    })
}

fn eval_node(node: &Node, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Const(c) => Ok(c.value()),
        Node::Var(name) => bindings
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Node::Neg(inner) => Ok(-eval_node(inner, bindings)?),
        Node::Binary(op, l, r) => {
            // strict: both sides are always evaluated
            let lv = eval_node(l, bindings)?;
            let rv = eval_node(r, bindings)?;
            apply_binary(*op, lv, rv).map_err(|what| domain(what, node))
        }
        Node::Call(func, args) => {
            let x = eval_node(&args[0], bindings)?;
            let y = match args.get(1) {
                Some(a) => eval_node(a, bindings)?,
                None => 0.0,
            };
            apply_func(*func, x, y).map_err(|what| domain(what, node))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Bin(BinOp, usize),
    Call1(Func, usize),
    Call2(Func, usize),
}

impl Op {
    fn pops(self) -> usize {
        match self {
            Op::Push(_) | Op::Load(_) => 0,
            Op::Neg | Op::Call1(..) => 1,
            Op::Bin(..) | Op::Call2(..) => 2,
        }
    }
}

fn lower(
    node: &Node,
    slots: &[&str],
    prog: &mut Vec<Op>,
    labels: &mut Vec<String>,
) -> Result<(), EvalError> {
    match node {
        Node::Num(v) => prog.push(Op::Push(*v)),
        Node::Const(c) => prog.push(Op::Push(c.value())),
        Node::Var(name) => {
            let idx = slots
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?;
            prog.push(Op::Load(idx));
        }
        Node::Neg(inner) => {
            lower(inner, slots, prog, labels)?;
            prog.push(Op::Neg);
        }
        Node::Binary(op, l, r) => {
            lower(l, slots, prog, labels)?;
            lower(r, slots, prog, labels)?;
            let label = labels.len();
            labels.push(node.to_string());
            prog.push(Op::Bin(*op, label));
        }
        Node::Call(func, args) => {
            for a in args {
                lower(a, slots, prog, labels)?;
            }
            let label = labels.len();
            labels.push(node.to_string());
            prog.push(if args.len() == 2 {
                Op::Call2(*func, label)
            } else {
                Op::Call1(*func, label)
            });
        }
    }
    Ok(())
}

/// Postfix form of an [`Expression`] with variables resolved to slot indices.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    prog: Vec<Op>,
    labels: Vec<String>,
    n_slots: usize,
    max_depth: usize,
}

impl CompiledExpr {
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Panics if `slots` is shorter than the slot list given to `compile`.
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        assert!(slots.len() >= self.n_slots, "missing slot values");
        let mut stack: SmallVec<[f64; 16]> = SmallVec::with_capacity(self.max_depth);
        for op in &self.prog {
            match *op {
                Op::Push(v) => stack.push(v),
                Op::Load(i) => stack.push(slots[i]),
                Op::Neg => {
                    let top = stack.last_mut().expect("stack underflow");
                    *top = -*top;
                }
                Op::Bin(bop, label) => {
                    let r = stack.pop().expect("stack underflow");
                    let l = stack.pop().expect("stack underflow");
                    let v = apply_binary(bop, l, r).map_err(|what| self.domain(what, label))?;
                    stack.push(v);
                }
                Op::Call1(func, label) => {
                    let x = stack.pop().expect("stack underflow");
                    let v = apply_func(func, x, 0.0).map_err(|what| self.domain(what, label))?;
                    stack.push(v);
                }
                Op::Call2(func, label) => {
                    let y = stack.pop().expect("stack underflow");
                    let x = stack.pop().expect("stack underflow");
                    let v = apply_func(func, x, y).map_err(|what| self.domain(what, label))?;
                    stack.push(v);
                }
            }
        }
        Ok(stack.pop().expect("empty program"))
    }

    fn domain(&self, what: &'static str, label: usize) -> EvalError {
        EvalError::Domain {
            what,
            node: self.labels[label].clone(),
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

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
        }
    }

    fn parse_all(mut self) -> Result<Node, ParseError> {
        self.advance()?;
        let node = self.expr()?;
        if self.tok != Tok::End {
            return Err(self.unexpected(&["operator", "end of input"]));
        }
        Ok(node)
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.tok_start,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.tok.describe(),
        }
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos] as char;
        if c.is_ascii_digit() || c == '.' {
            self.tok = Tok::Num(self.number()?);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = self.pos;
            while self.pos < bytes.len()
                && ((bytes[self.pos] as char).is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            self.tok = Tok::Ident(self.src[start..self.pos].to_string());
        } else if "+-*/^(),".contains(c) {
            self.pos += 1;
            self.tok = Tok::Sym(c);
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap_or(c);
            return Err(ParseError::Syntax {
                offset: self.pos,
                expected: vec!["number".into(), "identifier".into(), "`(`".into()],
                found: format!("character `{ch}`"),
            });
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                expected: vec!["digit".into()],
                found: "`.`".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            // only an exponent if digits follow; `2e` is `2` then the constant e
            let mut p = self.pos + 1;
            if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                p += 1;
            }
            if digits(&mut p) > 0 {
                self.pos = p;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map_err(|_| ParseError::Syntax {
            offset: start,
            expected: vec!["number".into()],
            found: format!("`{text}`"),
        })
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.tok == Tok::Sym('-') {
            self.advance()?;
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Sym('^') {
            self.advance()?;
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Node::Num(v))
            }
            Tok::Ident(name) => {
                let offset = self.tok_start;
                self.advance()?;
                if self.tok == Tok::Sym('(') {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| ParseError::UnknownFunction {
                            name: name.clone(),
                            offset,
                        })?;
                    self.advance()?;
                    let mut args = vec![self.expr()?];
                    while self.tok == Tok::Sym(',') {
                        self.advance()?;
                        args.push(self.expr()?);
                    }
                    if self.tok != Tok::Sym(')') {
                        return Err(self.unexpected(&["`,`", "`)`"]));
                    }
                    self.advance()?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            name,
                            expected: func.arity(),
                            got: args.len(),
                            offset,
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                Ok(match name.as_str() {
                    "pi" => Node::Const(Constant::Pi),
                    "e" => Node::Const(Constant::E),
                    _ => Node::Var(name),
                })
            }
            Tok::Sym('(') => {
                self.advance()?;
                let inner = self.expr()?;
                if self.tok != Tok::Sym(')') {
                    return Err(self.unexpected(&["`)`"]));
                }
                self.advance()?;
                Ok(inner)
            }
            _ => Err(self.unexpected(&["number", "identifier", "`(`", "`-`"])),
        }
    }
}
