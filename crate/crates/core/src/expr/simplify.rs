//! A small rewrite system applied bottom-up.
//!
//! Rules (applied by the smart constructors below):
//!
//! * constant folding of every operator whose result is finite
//! * `-(-e) -> e`
//! * `0 + e -> e`, `e + 0 -> e`, `e + e -> 2*e`
//! * `e - 0 -> e`, `0 - e -> -e`, `e - e -> 0`
//! * `0*e -> 0`, `e*0 -> 0`, `1*e -> e`, `e*1 -> e`
//! * `0/e -> 0`, `e/1 -> e`
//! * `e^0 -> 1`, `e^1 -> e`, `1^e -> 1`
//!
//! Identity of subtrees is syntactic. Every rule's output is already in normal
//! form, which makes [`simplify`] idempotent.

use std::collections::HashMap;

use super::{BinOp, Expr, Func, Node};

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then(|| Expr::constant(v))
}

pub fn neg(a: Expr) -> Expr {
    if let Some(c) = a.as_const() {
        return Expr::constant(-c);
    }
    if let Node::Unary(Func::Neg, inner) = a.node() {
        return inner.clone();
    }
    Expr::unary(Func::Neg, a)
}

pub fn func(f: Func, a: Expr) -> Expr {
    if f == Func::Neg {
        return neg(a);
    }
    if let Some(v) = a.as_const().and_then(|c| fold(f.apply(c))) {
        return v;
    }
    Expr::unary(f, a)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(v) = fold(x + y) {
                return v;
            }
        }
        (Some(x), _) if x == 0.0 => return b,
        (_, Some(y)) if y == 0.0 => return a,
        _ => {}
    }
    if a.same(&b) {
        return Expr::binary(BinOp::Mul, Expr::constant(2.0), a);
    }
    Expr::binary(BinOp::Add, a, b)
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(v) = fold(x - y) {
                return v;
            }
        }
        (_, Some(y)) if y == 0.0 => return a,
        (Some(x), _) if x == 0.0 => return neg(b),
        _ => {}
    }
    if a.same(&b) {
        return Expr::zero();
    }
    Expr::binary(BinOp::Sub, a, b)
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(v) = fold(x * y) {
                return v;
            }
        }
        (Some(x), _) if x == 0.0 => return Expr::zero(),
        (_, Some(y)) if y == 0.0 => return Expr::zero(),
        (Some(x), _) if x == 1.0 => return b,
        (_, Some(y)) if y == 1.0 => return a,
        _ => {}
    }
    Expr::binary(BinOp::Mul, a, b)
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(v) = fold(x / y) {
                return v;
            }
        }
        (Some(x), _) if x == 0.0 => return Expr::zero(),
        (_, Some(y)) if y == 1.0 => return a,
        _ => {}
    }
    Expr::binary(BinOp::Div, a, b)
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            if let Some(v) = fold(super::pow(x, y)) {
                return v;
            }
        }
        (_, Some(y)) if y == 0.0 => return Expr::one(),
        (_, Some(y)) if y == 1.0 => return a,
        (Some(x), _) if x == 1.0 => return Expr::one(),
        _ => {}
    }
    Expr::binary(BinOp::Pow, a, b)
}

pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    match op {
        BinOp::Add => add(a, b),
        BinOp::Sub => sub(a, b),
        BinOp::Mul => mul(a, b),
        BinOp::Div => div(a, b),
        BinOp::Pow => pow(a, b),
    }
}

/// Rebuilds `e` bottom-up through the rewrite rules.
pub fn simplify(e: &Expr) -> Expr {
    let mut memo = HashMap::new();
    go(e, &mut memo)
}

fn go(e: &Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.key()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) | Node::Var(_) => e.clone(),
        Node::Unary(f, a) => {
            let a2 = go(a, memo);
            func(*f, a2)
        }
        Node::Binary(op, a, b) => {
            let a2 = go(a, memo);
            let b2 = go(b, memo);
            binary(*op, a2, b2)
        }
    };
    memo.insert(e.key(), out.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse, SymbolTable};
    use super::*;

    fn s(text: &str) -> Expr {
        let syms = SymbolTable::new(2);
        simplify(&parse(text, &syms).unwrap())
    }

    #[test]
    fn zero_times_anything_vanishes() {
        assert!(s("0*sin(x1)+x2").same(&Expr::var(1)));
    }

    #[test]
    fn folds_constants() {
        assert_eq!(s("2*3").as_const(), Some(6.0));
        assert_eq!(s("sqrt(4) + 2^3").as_const(), Some(10.0));
    }

    #[test]
    fn unit_and_zero_rules() {
        assert!(s("x1*1 + 0").same(&Expr::var(0)));
        assert!(s("x1 - x1").is_zero());
        assert!(s("0 - -x2").same(&Expr::var(1)));
        assert!(s("x2^1/1").same(&Expr::var(1)));
        assert_eq!(s("sin(x1)^0").as_const(), Some(1.0));
    }

    #[test]
    fn does_not_fold_non_finite() {
        let e = s("1/0");
        assert!(e.as_const().is_none());
        assert!(e.eval(&[0.0, 0.0, 0.0]).is_infinite());
        let e = s("log(0 - 1)");
        assert!(e.as_const().is_none());
    }

    #[test]
    fn idempotent_on_examples() {
        for t in [
            "x1 + x1",
            "(x1 + x1) + (x1 + x1)",
            "0 - (0 - x1)",
            "x1*0 + x2*1 - x2",
            "(2*x1) - (2*x1)",
        ] {
            let once = s(t);
            assert!(simplify(&once).same(&once), "{t}");
        }
    }
}
