//! Symbolic expressions over the state variables `x1..xn` and time `t`.
//!
//! Expressions are immutable, reference-counted trees. Subtrees are shared
//! freely (derivatives reuse their operands), so an [`Expr`] is really a DAG;
//! every traversal in this module memoizes on node identity to keep the cost
//! linear in the number of distinct nodes.
//!
//! The grammar accepted by [`parse`] is documented in `docs/grammar.md`.

mod compile;
mod diff;
mod parse;
mod simplify;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Simplifying constructors: each applies the rewrite rules of [`simplify`]
/// at the new node only.
pub mod build {
    pub use super::simplify::{add, binary, div, func, mul, neg, pow, sub};
}

pub use compile::{compile, compile_many, CompiledField, Program};
pub use diff::differentiate;
pub use parse::parse;
pub use simplify::simplify;

/// Index of a symbol in a [`SymbolTable`].
pub type SymbolId = usize;

/// The fixed symbol set `x1..xn, t`. State variable `xk` has id `k-1`, time has id `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    n: usize,
}

impl SymbolTable {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self) -> SymbolId {
        self.n
    }

    pub fn state(&self, k: usize) -> SymbolId {
        assert!(k < self.n, "state index {k} out of range");
        k
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        if name == "t" {
            return Some(self.n);
        }
        let digits = name.strip_prefix('x')?;
        if digits.is_empty()
            || digits.starts_with('0')
            || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        (1..=self.n).contains(&k).then(|| k - 1)
    }

    pub fn name(&self, id: SymbolId) -> String {
        if id == self.n {
            "t".to_string()
        } else {
            format!("x{}", id + 1)
        }
    }

    /// Variable order used by compiled fields: `x1..xn, t`.
    pub fn order(&self) -> Vec<SymbolId> {
        (0..=self.n).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Neg => -x,
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Neg => "-",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => pow(a, b),
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Power with integer exponents routed through `powi`; shared by every evaluator
/// so tree-walking and compiled evaluation round identically.
#[inline]
pub fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 1024.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(SymbolId),
    Unary(Func, Expr),
    Binary(BinOp, Expr, Expr),
}

/// Shared handle to an immutable expression node.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown symbol `{name}` at offset {position}")]
    UnknownSymbol { name: String, position: usize },
    #[error("variable {0} is not in the evaluation order")]
    VariableNotInOrder(String),
    #[error("evaluation produced NaN (domain error)")]
    Domain,
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        assert!(c.is_finite(), "expression constants must be finite");
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn var(id: SymbolId) -> Self {
        Expr(Arc::new(Node::Var(id)))
    }

    pub fn unary(f: Func, a: Expr) -> Self {
        Expr(Arc::new(Node::Unary(f, a)))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr(Arc::new(Node::Binary(op, a, b)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub(crate) fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Structural equality with a pointer shortcut.
    pub fn same(&self, other: &Expr) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (&*self.0, &*other.0) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Unary(f, a), Node::Unary(g, b)) => f == g && a.same(b),
            (Node::Binary(o, a1, a2), Node::Binary(p, b1, b2)) => {
                o == p && a1.same(b1) && a2.same(b2)
            }
            _ => false,
        }
    }

    /// Tree-walking evaluation; `values[id]` binds symbol `id`.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut memo = std::collections::HashMap::new();
        self.eval_memo(values, &mut memo)
    }

    fn eval_memo(&self, values: &[f64], memo: &mut std::collections::HashMap<usize, f64>) -> f64 {
        if let Some(v) = memo.get(&self.key()) {
            return *v;
        }
        let v = match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(id) => values[*id],
            Node::Unary(f, a) => f.apply(a.eval_memo(values, memo)),
            Node::Binary(op, a, b) => {
                let x = a.eval_memo(values, memo);
                let y = b.eval_memo(values, memo);
                op.apply(x, y)
            }
        };
        memo.insert(self.key(), v);
        v
    }

    /// Like [`Expr::eval`] but reports NaN results as a domain error.
    pub fn try_eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        let v = self.eval(values);
        if v.is_nan() {
            Err(ExprError::Domain)
        } else {
            Ok(v)
        }
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            match e.node() {
                Node::Unary(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                _ => {}
            }
        }
        seen.len()
    }

    /// Largest symbol id referenced, if any.
    pub fn max_symbol(&self) -> Option<SymbolId> {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        let mut best = None;
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            match e.node() {
                Node::Var(id) => best = best.max(Some(*id)),
                Node::Unary(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                Node::Const(_) => {}
            }
        }
        best
    }

    /// Renders with the symbol names of `symbols`.
    pub fn display<'a>(&'a self, symbols: &'a SymbolTable) -> impl fmt::Display + 'a {
        Shown {
            e: self,
            symbols: Some(symbols),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, symbols: Option<&SymbolTable>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(id) => match symbols {
                Some(s) => write!(f, "{}", s.name(*id)),
                None => write!(f, "v{id}"),
            },
            Node::Unary(Func::Neg, a) => {
                write!(f, "-")?;
                a.write_operand(f, symbols, 3)
            }
            Node::Unary(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, symbols)?;
                write!(f, ")")
            }
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinOp::Pow {
                    (p + 1, p)
                } else {
                    (p, p + 1)
                };
                a.write_operand(f, symbols, lp)?;
                if *op == BinOp::Pow {
                    write!(f, "^")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                b.write_operand(f, symbols, rp)
            }
        }
    }

    fn write_operand(
        &self,
        f: &mut fmt::Formatter<'_>,
        symbols: Option<&SymbolTable>,
        min_prec: u8,
    ) -> fmt::Result {
        let prec = match &*self.0 {
            Node::Binary(op, _, _) => op.precedence(),
            Node::Unary(Func::Neg, _) => 3,
            _ => 5,
        };
        if prec < min_prec {
            write!(f, "(")?;
            self.write(f, symbols)?;
            write!(f, ")")
        } else {
            self.write(f, symbols)
        }
    }
}

struct Shown<'a> {
    e: &'a Expr,
    symbols: Option<&'a SymbolTable>,
}

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.e.write(f, self.symbols)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, None)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => write!(f, "Const({c})"),
            Node::Var(id) => write!(f, "Var({id})"),
            Node::Unary(func, a) => write!(f, "{func:?}({a:?})"),
            Node::Binary(op, a, b) => write!(f, "{op:?}({a:?}, {b:?})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_lookup() {
        let s = SymbolTable::new(3);
        assert_eq!(s.lookup("x1"), Some(0));
        assert_eq!(s.lookup("x3"), Some(2));
        assert_eq!(s.lookup("t"), Some(3));
        assert_eq!(s.lookup("x4"), None);
        assert_eq!(s.lookup("x0"), None);
        assert_eq!(s.lookup("x01"), None);
        assert_eq!(s.lookup("y"), None);
    }

    #[test]
    fn display_round_trips_through_parse() {
        let s = SymbolTable::new(2);
        for text in [
            "x1 + 2*t",
            "-(x1 - x2)^2",
            "sin(x1)/(1 + x2)",
            "2^3^x1",
            "x1 - (x2 - t)",
        ] {
            let e = parse(text, &s).unwrap();
            let shown = e.display(&s).to_string();
            let back = parse(&shown, &s).unwrap();
            assert!(e.same(&back), "{text} -> {shown}");
        }
    }

    #[test]
    fn pow_uses_integer_path() {
        assert_eq!(pow(-2.0, 3.0), -8.0);
        assert!(pow(-2.0, 0.5).is_nan());
    }
}
