//! Closed-form coefficient expressions.
//!
//! Grammar: numeric literals, `x1..xd`, `+ - * / ^`, unary minus, parentheses,
//! `abs exp log sqrt min max norm(x)` and the constants `pi`, `e`. Named
//! parameters are substituted at parse time. Expressions are differentiated
//! symbolically and compiled to a small stack program for evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::ExprError;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Sqrt(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
    /// Euclidean norm of the whole coordinate vector.
    Norm,
    /// `x_i / |x|`, with the one-sided value `e_1` at the origin.
    UnitComp(usize),
    /// Sign of the argument, 0 at 0.
    Sign(Box<Node>),
    /// 1 when the argument is >= 0, else 0.
    Step(Box<Node>),
}

use Node::*;

fn b(n: Node) -> Box<Node> {
    Box::new(n)
}

impl Node {
    pub fn is_const(&self) -> Option<f64> {
        match self {
            Const(c) => Some(*c),
            _ => None,
        }
    }

    fn depends_on_vars(&self) -> bool {
        match self {
            Const(_) => false,
            Var(_) | Norm | UnitComp(_) => true,
            Neg(a) | Abs(a) | Exp(a) | Log(a) | Sqrt(a) | Sign(a) | Step(a) => a.depends_on_vars(),
            Add(a, c) | Sub(a, c) | Mul(a, c) | Div(a, c) | Pow(a, c) | Min(a, c) | Max(a, c) => {
                a.depends_on_vars() || c.depends_on_vars()
            }
        }
    }

    /// Direct recursive evaluation; the compiled [`Program`] is the fast path.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Const(c) => *c,
            Var(i) => x[*i],
            Neg(a) => -a.eval(x),
            Add(a, c) => a.eval(x) + c.eval(x),
            Sub(a, c) => a.eval(x) - c.eval(x),
            Mul(a, c) => a.eval(x) * c.eval(x),
            Div(a, c) => a.eval(x) / c.eval(x),
            Pow(a, c) => powf(a.eval(x), c.eval(x)),
            Abs(a) => a.eval(x).abs(),
            Exp(a) => a.eval(x).exp(),
            Log(a) => a.eval(x).ln(),
            Sqrt(a) => a.eval(x).sqrt(),
            Min(a, c) => a.eval(x).min(c.eval(x)),
            Max(a, c) => a.eval(x).max(c.eval(x)),
            Norm => norm(x),
            UnitComp(i) => unit_comp(x, *i),
            Sign(a) => sign(a.eval(x)),
            Step(a) => step(a.eval(x)),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    pub fn diff(&self, i: usize) -> Node {
        
        match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(i)),
            Add(a, c) => add(a.diff(i), c.diff(i)),
            Sub(a, c) => sub(a.diff(i), c.diff(i)),
            Mul(a, c) => add(mul(a.diff(i), (**c).clone()), mul((**a).clone(), c.diff(i))),
            Div(a, c) => {
                // (a'c - a c') / c^2
                let num = sub(mul(a.diff(i), (**c).clone()), mul((**a).clone(), c.diff(i)));
                div(num, pow((**c).clone(), Const(2.0)))
            }
            Pow(a, c) => {
                if !c.depends_on_vars() {
                    let k = c.is_const();
                    match k {
                        Some(k) => mul(
                            mul(Const(k), pow((**a).clone(), Const(k - 1.0))),
                            a.diff(i),
                        ),
                        None => mul(
                            mul(
                                (**c).clone(),
                                pow((**a).clone(), sub((**c).clone(), Const(1.0))),
                            ),
                            a.diff(i),
                        ),
                    }
                } else {
                    // a^c (c' ln a + c a'/a)
                    let inner = add(
                        mul(c.diff(i), log((**a).clone())),
                        div(mul((**c).clone(), a.diff(i)), (**a).clone()),
                    );
                    mul(self.clone(), inner)
                }
            }
            Abs(a) => mul(Sign(a.clone()), a.diff(i)),
            Exp(a) => mul(self.clone(), a.diff(i)),
            Log(a) => div(a.diff(i), (**a).clone()),
            Sqrt(a) => div(a.diff(i), mul(Const(2.0), self.clone())),
            Min(a, c) => {
                let s = Step(b(sub((**c).clone(), (**a).clone())));
                add(
                    mul(s.clone(), a.diff(i)),
                    mul(sub(Const(1.0), s), c.diff(i)),
                )
            }
            Max(a, c) => {
                let s = Step(b(sub((**a).clone(), (**c).clone())));
                add(
                    mul(s.clone(), a.diff(i)),
                    mul(sub(Const(1.0), s), c.diff(i)),
                )
            }
            Norm => UnitComp(i),
            UnitComp(j) => {
                // d/dx_i (x_j/|x|) = (delta_ij - u_i u_j)/|x|
                let delta = if *j == i { 1.0 } else { 0.0 };
                div(sub(Const(delta), mul(UnitComp(i), UnitComp(*j))), Norm)
            }
            Sign(_) | Step(_) => Const(0.0),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Const(_) | Norm => None,
            Var(i) | UnitComp(i) => Some(*i),
            Neg(a) | Abs(a) | Exp(a) | Log(a) | Sqrt(a) | Sign(a) | Step(a) => a.max_var(),
            Add(a, c) | Sub(a, c) | Mul(a, c) | Div(a, c) | Pow(a, c) | Min(a, c) | Max(a, c) => {
                match (a.max_var(), c.max_var()) {
                    (Some(p), Some(q)) => Some(p.max(q)),
                    (p, q) => p.or(q),
                }
            }
        }
    }
}

fn powf(a: f64, c: f64) -> f64 {
    if c == 2.0 {
        a * a
    } else if c == 1.0 {
        a
    } else if c == 0.0 {
        1.0
    } else if c.fract() == 0.0 && c.abs() < 64.0 {
        a.powi(c as i32)
    } else {
        a.powf(c)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn unit_comp(x: &[f64], i: usize) -> f64 {
    let n = norm(x);
    if n == 0.0 {
        if i == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        x[i] / n
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn step(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        0.0
    }
}

// Smart constructors doing light simplification.

pub(crate) fn neg(a: Node) -> Node {
    match a {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        other => Neg(b(other)),
    }
}

pub(crate) fn add(a: Node, c: Node) -> Node {
    match (&a, &c) {
        (Const(x), Const(y)) => Const(x + y),
        (Const(z), _) if *z == 0.0 => c,
        (_, Const(z)) if *z == 0.0 => a,
        (Neg(p), q) | (q, Neg(p)) if **p == *q => Const(0.0),
        _ => Add(b(a), b(c)),
    }
}

pub(crate) fn sub(a: Node, c: Node) -> Node {
    match (&a, &c) {
        (Const(x), Const(y)) => Const(x - y),
        (_, Const(z)) if *z == 0.0 => a,
        (Const(z), _) if *z == 0.0 => neg(c),
        _ if a == c => Const(0.0),
        _ => Sub(b(a), b(c)),
    }
}

pub(crate) fn mul(a: Node, c: Node) -> Node {
    match (&a, &c) {
        (Const(x), Const(y)) => Const(x * y),
        (Const(z), _) | (_, Const(z)) if *z == 0.0 => Const(0.0),
        (Const(o), _) if *o == 1.0 => c,
        (_, Const(o)) if *o == 1.0 => a,
        // pull constant factors to the front so that they fold
        (Const(k), Mul(p, q)) if p.is_const().is_some() => mul(Const(k * p.is_const().unwrap()), (**q).clone()),
        (_, Const(_)) => mul(c, a),
        (_, Mul(p, q)) if p.is_const().is_some() => mul((**p).clone(), mul(a, (**q).clone())),
        (Mul(p, q), _) if p.is_const().is_some() && c.is_const().is_none() => {
            mul((**p).clone(), mul((**q).clone(), c))
        }
        // exp(u)·exp(v) = exp(u+v): keeps products such as φ·B finite where
        // the factors separately over- and underflow
        (Exp(p), Exp(q)) => exp_node(add((**p).clone(), (**q).clone())),
        _ => Mul(b(a), b(c)),
    }
}

fn exp_node(a: Node) -> Node {
    match a {
        Const(c) => Const(c.exp()),
        other => Exp(b(other)),
    }
}

pub(crate) fn div(a: Node, c: Node) -> Node {
    match (&a, &c) {
        (Const(x), Const(y)) if *y != 0.0 => Const(x / y),
        (Const(z), _) if *z == 0.0 => Const(0.0),
        (_, Const(o)) if *o == 1.0 => a,
        _ => Div(b(a), b(c)),
    }
}

pub(crate) fn pow(a: Node, c: Node) -> Node {
    match (&a, &c) {
        (Const(x), Const(y)) => Const(powf(*x, *y)),
        (_, Const(o)) if *o == 1.0 => a,
        (_, Const(z)) if *z == 0.0 => Const(1.0),
        _ => Pow(b(a), b(c)),
    }
}

fn log(a: Node) -> Node {
    match a {
        Const(c) => Const(c.ln()),
        other => Log(b(other)),
    }
}

fn fold_unary(f: fn(Box<Node>) -> Node, g: fn(f64) -> f64, a: Node) -> Node {
    match a {
        Const(c) => Const(g(c)),
        other => f(b(other)),
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{c}"),
            Var(i) => write!(f, "x{}", i + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, c) => write!(f, "({a} + {c})"),
            Sub(a, c) => write!(f, "({a} - {c})"),
            Mul(a, c) => write!(f, "({a} * {c})"),
            Div(a, c) => write!(f, "({a} / {c})"),
            Pow(a, c) => write!(f, "({a} ^ {c})"),
            Abs(a) => write!(f, "abs({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Log(a) => write!(f, "log({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
            Min(a, c) => write!(f, "min({a}, {c})"),
            Max(a, c) => write!(f, "max({a}, {c})"),
            Norm => write!(f, "norm(x)"),
            UnitComp(i) => write!(f, "(x{} / norm(x))", i + 1),
            Sign(a) => write!(f, "sign({a})"),
            Step(a) => write!(f, "step({a})"),
        }
    }
}

// ---------------------------------------------------------------- parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &src[start..i];
            let v: f64 = s.parse().map_err(|_| ExprError::Parse {
                pos: start,
                msg: format!("bad number `{s}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let t = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ExprError::Parse {
                        pos: start,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((start, t));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    dim: usize,
    params: &'a BTreeMap<String, f64>,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> Result<(), ExprError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { add(lhs, rhs) } else { sub(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { mul(lhs, rhs) } else { div(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(neg(self.unary()?))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let expo = self.unary()?;
            return Ok(pow(base, expo));
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Node>, ExprError> {
        self.expect(Tok::LParen)?;
        let mut v = vec![self.expr()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            v.push(self.expr()?);
        }
        self.expect(Tok::RParen)?;
        Ok(v)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                let is_call = self.peek() == Some(&Tok::LParen);
                if is_call {
                    return self.call(&name);
                }
                if let Some(v) = self.params.get(&name) {
                    return Ok(Const(*v));
                }
                match name.as_str() {
                    "pi" => return Ok(Const(std::f64::consts::PI)),
                    "e" => return Ok(Const(std::f64::consts::E)),
                    _ => {}
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx == 0 || idx > self.dim {
                        return Err(ExprError::VariableOutOfRange {
                            index: idx,
                            dim: self.dim,
                        });
                    }
                    return Ok(Var(idx - 1));
                }
                if name == "x" && self.dim == 1 {
                    return Ok(Var(0));
                }
                Err(ExprError::UnknownIdent(name))
            }
            _ => self.err(format!("unexpected token {tok:?}")),
        }
    }

    fn call(&mut self, name: &str) -> Result<Node, ExprError> {
        if name == "norm" {
            self.expect(Tok::LParen)?;
            match self.peek() {
                Some(Tok::Ident(s)) if s == "x" => self.pos += 1,
                _ => return self.err("norm takes the literal argument `x`"),
            }
            self.expect(Tok::RParen)?;
            return Ok(Norm);
        }
        let args = self.args()?;
        let one = |p: &Self, args: Vec<Node>| -> Result<Node, ExprError> {
            if args.len() != 1 {
                return p.err(format!("{name} takes one argument"));
            }
            Ok(args.into_iter().next().unwrap())
        };
        match name {
            "abs" => Ok(fold_unary(Abs, f64::abs, one(self, args)?)),
            "exp" => Ok(fold_unary(Exp, f64::exp, one(self, args)?)),
            "log" => Ok(fold_unary(Log, f64::ln, one(self, args)?)),
            "sqrt" => Ok(fold_unary(Sqrt, f64::sqrt, one(self, args)?)),
            "min" | "max" => {
                if args.len() < 2 {
                    return self.err(format!("{name} takes at least two arguments"));
                }
                let mut it = args.into_iter();
                let mut acc = it.next().unwrap();
                for a in it {
                    acc = match (&acc, &a, name) {
                        (Const(p), Const(q), "min") => Const(p.min(*q)),
                        (Const(p), Const(q), _) => Const(p.max(*q)),
                        (_, _, "min") => Min(b(acc), b(a)),
                        _ => Max(b(acc), b(a)),
                    };
                }
                Ok(acc)
            }
            _ => Err(ExprError::UnknownIdent(name.to_string())),
        }
    }
}

/// Parses `src` over `dim` coordinates with named parameters substituted.
pub fn parse(src: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<Node, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        params,
        end: src.len(),
    };
    let node = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(node)
}

// ---------------------------------------------------------------- compiled form

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Norm,
    UnitComp(usize),
    Neg,
    Abs,
    Exp,
    Log,
    Sqrt,
    Sign,
    Step,
    Square,
    PowI(i32),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

/// Postfix program evaluated on a fixed-size stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
}

const STACK: usize = 32;

impl Program {
    pub fn compile(node: &Node) -> Program {
        let mut ops = Vec::new();
        emit(node, &mut ops);
        let mut depth = 0usize;
        let mut cur = 0isize;
        for op in &ops {
            cur += match op {
                Op::Const(_) | Op::Var(_) | Op::Norm | Op::UnitComp(_) => 1,
                Op::Neg | Op::Abs | Op::Exp | Op::Log | Op::Sqrt | Op::Sign | Op::Step | Op::Square | Op::PowI(_) => 0,
                _ => -1,
            };
            depth = depth.max(cur as usize);
        }
        Program { ops, depth }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.depth <= STACK {
            let mut st = [0.0f64; STACK];
            self.run(x, &mut st)
        } else {
            let mut st = vec![0.0f64; self.depth];
            self.run(x, &mut st)
        }
    }

    fn run(&self, x: &[f64], st: &mut [f64]) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    st[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    st[sp] = x[i];
                    sp += 1;
                }
                Op::Norm => {
                    st[sp] = norm(x);
                    sp += 1;
                }
                Op::UnitComp(i) => {
                    st[sp] = unit_comp(x, i);
                    sp += 1;
                }
                Op::Neg => st[sp - 1] = -st[sp - 1],
                Op::Abs => st[sp - 1] = st[sp - 1].abs(),
                Op::Exp => st[sp - 1] = st[sp - 1].exp(),
                Op::Log => st[sp - 1] = st[sp - 1].ln(),
                Op::Sqrt => st[sp - 1] = st[sp - 1].sqrt(),
                Op::Sign => st[sp - 1] = sign(st[sp - 1]),
                Op::Step => st[sp - 1] = step(st[sp - 1]),
                Op::Square => st[sp - 1] *= st[sp - 1],
                Op::PowI(k) => st[sp - 1] = st[sp - 1].powi(k),
                _ => {
                    let r = st[sp - 1];
                    let l = st[sp - 2];
                    sp -= 1;
                    st[sp - 1] = match *op {
                        Op::Add => l + r,
                        Op::Sub => l - r,
                        Op::Mul => l * r,
                        Op::Div => l / r,
                        Op::Pow => l.powf(r),
                        Op::Min => l.min(r),
                        Op::Max => l.max(r),
                        _ => unreachable!(),
                    };
                }
            }
        }
        st[0]
    }
}

fn emit(node: &Node, ops: &mut Vec<Op>) {
    let bin = |a: &Node, c: &Node, op: Op, ops: &mut Vec<Op>| {
        emit(a, ops);
        emit(c, ops);
        ops.push(op);
    };
    match node {
        Const(c) => ops.push(Op::Const(*c)),
        Var(i) => ops.push(Op::Var(*i)),
        Norm => ops.push(Op::Norm),
        UnitComp(i) => ops.push(Op::UnitComp(*i)),
        Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg)
        }
        Abs(a) => {
            emit(a, ops);
            ops.push(Op::Abs)
        }
        Exp(a) => {
            emit(a, ops);
            ops.push(Op::Exp)
        }
        Log(a) => {
            emit(a, ops);
            ops.push(Op::Log)
        }
        Sqrt(a) => {
            emit(a, ops);
            ops.push(Op::Sqrt)
        }
        Sign(a) => {
            emit(a, ops);
            ops.push(Op::Sign)
        }
        Step(a) => {
            emit(a, ops);
            ops.push(Op::Step)
        }
        Pow(a, c) => match c.is_const() {
            Some(k) if k == 2.0 => {
                emit(a, ops);
                ops.push(Op::Square)
            }
            Some(k) if k.fract() == 0.0 && k.abs() < 64.0 => {
                emit(a, ops);
                ops.push(Op::PowI(k as i32))
            }
            _ => bin(a, c, Op::Pow, ops),
        },
        Add(a, c) => bin(a, c, Op::Add, ops),
        Sub(a, c) => bin(a, c, Op::Sub, ops),
        Mul(a, c) => bin(a, c, Op::Mul, ops),
        Div(a, c) => bin(a, c, Op::Div, ops),
        Min(a, c) => bin(a, c, Op::Min, ops),
        Max(a, c) => bin(a, c, Op::Max, ops),
    }
}

/// A parsed expression together with its compiled program and source text.
#[derive(Debug, Clone)]
pub struct Expr {
    src: Arc<str>,
    dim: usize,
    node: Node,
    prog: Program,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src && self.dim == other.dim && self.node == other.node
    }
}

impl Expr {
    pub fn parse(src: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
        let node = parse(src, dim, params)?;
        if let Some(i) = node.max_var() {
            if i >= dim {
                return Err(ExprError::VariableOutOfRange { index: i + 1, dim });
            }
        }
        Ok(Expr::from_node(src, dim, node))
    }

    pub fn constant(c: f64, dim: usize) -> Expr {
        Expr::from_node(&format!("{c}"), dim, Const(c))
    }

    pub fn from_node(src: &str, dim: usize, node: Node) -> Expr {
        let prog = Program::compile(&node);
        Expr {
            src: Arc::from(src),
            dim,
            node,
            prog,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.prog.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_const(&self) -> Option<f64> {
        self.node.is_const()
    }

    pub fn diff(&self, i: usize) -> Expr {
        let d = self.node.diff(i);
        let src = format!("d/dx{} [{}]", i + 1, self.src);
        Expr::from_node(&src, self.dim, d)
    }

    pub fn gradient(&self) -> Vec<Expr> {
        (0..self.dim).map(|i| self.diff(i)).collect()
    }

    /// Product of two expressions, simplified.
    pub fn times(&self, other: &Expr) -> Expr {
        let src = format!("({})*({})", self.src, other.src);
        Expr::from_node(&src, self.dim, mul(self.node.clone(), other.node.clone()))
    }

    pub fn scaled(&self, c: f64) -> Expr {
        let src = format!("{c}*({})", self.src);
        Expr::from_node(&src, self.dim, mul(Const(c), self.node.clone()))
    }

    pub fn negated(&self) -> Expr {
        let src = format!("-({})", self.src);
        Expr::from_node(&src, self.dim, neg(self.node.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str, d: usize) -> Expr {
        Expr::parse(s, d, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1+2*3", 1).eval(&[0.0]), 7.0);
        assert_eq!(p("-2^2", 1).eval(&[0.0]), -4.0);
        assert_eq!(p("2^3^2", 1).eval(&[0.0]), 512.0);
        assert_eq!(p("8/4/2", 1).eval(&[0.0]), 1.0);
        assert_eq!(p("2^-1", 1).eval(&[0.0]), 0.5);
        assert_eq!(p("1e-2*100", 1).eval(&[0.0]), 1.0);
    }

    #[test]
    fn functions_and_constants() {
        let x = [3.0, 4.0];
        assert_eq!(p("norm(x)", 2).eval(&x), 5.0);
        assert_eq!(p("min(x1, x2, 1)", 2).eval(&x), 1.0);
        assert_eq!(p("max(x1, x2)", 2).eval(&x), 4.0);
        assert!((p("exp(log(x2))", 2).eval(&x) - 4.0).abs() < 1e-14);
        assert_eq!(p("sqrt(abs(-x2))", 2).eval(&x), 2.0);
        assert!((p("pi", 2).eval(&x) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn params_substituted() {
        let mut m = BTreeMap::new();
        m.insert("eta".to_string(), 1.5);
        let e = Expr::parse("norm(x)^eta", 2, &m).unwrap();
        assert!((e.eval(&[4.0, 0.0]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn errors_reported() {
        let m = BTreeMap::new();
        assert!(matches!(Expr::parse("x3", 2, &m), Err(ExprError::VariableOutOfRange { .. })));
        assert!(matches!(Expr::parse("foo", 2, &m), Err(ExprError::UnknownIdent(_))));
        assert!(matches!(Expr::parse("1+", 2, &m), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("(1", 2, &m), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("1 $ 2", 2, &m), Err(ExprError::Parse { .. })));
    }

    #[test]
    fn compiled_matches_tree() {
        let e = p("exp(-x1^2)*max(1, abs(x2)) / (1 + norm(x)) - x1^3", 2);
        for &x in &[[0.3, -1.2], [2.0, 0.5], [-1.0, 4.0]] {
            assert!((e.eval(&x) - e.node().eval(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_gaussian_log() {
        let phi = p("exp(-x1^2)", 1);
        let dphi = phi.diff(0);
        // phi'/phi = -2x
        for &x in &[-1.5, 0.0, 0.7] {
            assert!((dphi.eval(&[x]) / phi.eval(&[x]) + 2.0 * x).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_kink_is_classical_away_from_zero() {
        let d = p("exp(-abs(x1))", 1).diff(0);
        assert!((d.eval(&[1.0]) + (-1.0f64).exp()).abs() < 1e-15);
        assert!((d.eval(&[-1.0]) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exponential_products_cancel() {
        let phi = p("exp(-x1^2)", 1);
        let drift = p("-6*exp(x1^2)", 1);
        let flux = phi.times(&drift);
        assert_eq!(flux.as_const(), Some(-6.0));
        assert_eq!(flux.eval(&[40.0]), -6.0);
        let mut m = BTreeMap::new();
        m.insert("b".to_string(), 0.5);
        let g = Expr::parse("exp(-abs(x1))", 1, &m).unwrap().times(&Expr::parse("b*exp(abs(x1))", 1, &m).unwrap());
        assert_eq!(g.as_const(), Some(0.5));
    }

    #[test]
    fn norm_gradient_one_sided_at_origin() {
        let g = p("norm(x)", 3).gradient();
        let at0: Vec<f64> = g.iter().map(|e| e.eval(&[0.0, 0.0, 0.0])).collect();
        assert_eq!(at0, vec![1.0, 0.0, 0.0]);
    }

    fn fd(e: &Expr, x: &[f64], i: usize) -> f64 {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (e.eval(&xp) - e.eval(&xm)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn symbolic_derivative_matches_central_difference(
            x1 in 0.2f64..2.0, x2 in -2.0f64..-0.2, which in 0usize..6
        ) {
            let srcs = [
                "x1^3*x2 - exp(x1*x2)",
                "sqrt(1 + x1^2 + x2^2)",
                "log(norm(x)) * x2",
                "norm(x)^1.5 / (1 + x1)",
                "x1 ^ x1 + abs(x2)^2",
                "max(x1, 3) * min(x2, -5) + x1/x2",
            ];
            let e = p(srcs[which], 2);
            let x = [x1, x2];
            for i in 0..2 {
                let s = e.diff(i).eval(&x);
                let n = fd(&e, &x, i);
                prop_assert!((s - n).abs() <= 1e-5 * (1.0 + n.abs()), "{} d{}: {} vs {}", srcs[which], i, s, n);
            }
        }

        #[test]
        fn parse_is_deterministic(c in -100.0f64..100.0) {
            let src = format!("{c} * x1 + exp({c} / 100)");
            let a = p(&src, 1);
            let b2 = p(&src, 1);
            prop_assert_eq!(a, b2);
        }
    }
}
