use std::collections::HashMap;

use super::simplify as s;
use super::{BinOp, Expr, Func, Node, SymbolId};

/// Symbolic partial derivative with respect to symbol `v`.
///
/// The result is built through the simplifying constructors, so it is already
/// in simplified form.
pub fn differentiate(e: &Expr, v: SymbolId) -> Expr {
    let mut memo = HashMap::new();
    d(e, v, &mut memo)
}

fn d(e: &Expr, v: SymbolId, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.key()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(id) => {
            if *id == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Unary(f, a) => {
            let da = d(a, v, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                match f {
                    Func::Neg => s::neg(da),
                    Func::Sin => s::mul(s::func(Func::Cos, a.clone()), da),
                    Func::Cos => s::neg(s::mul(s::func(Func::Sin, a.clone()), da)),
                    Func::Exp => s::mul(e.clone(), da),
                    Func::Log => s::div(da, a.clone()),
                    Func::Sqrt => s::div(da, s::mul(Expr::constant(2.0), e.clone())),
                }
            }
        }
        Node::Binary(op, a, b) => {
            let da = d(a, v, memo);
            let db = d(b, v, memo);
            match op {
                BinOp::Add => s::add(da, db),
                BinOp::Sub => s::sub(da, db),
                BinOp::Mul => s::add(s::mul(da, b.clone()), s::mul(a.clone(), db)),
                BinOp::Div => {
                    if db.is_zero() {
                        s::div(da, b.clone())
                    } else {
                        let num = s::sub(s::mul(da, b.clone()), s::mul(a.clone(), db));
                        s::div(num, s::pow(b.clone(), Expr::constant(2.0)))
                    }
                }
                BinOp::Pow => {
                    if db.is_zero() {
                        // d(u^c) = c u^(c-1) u'
                        if da.is_zero() {
                            Expr::zero()
                        } else {
                            let lowered = s::pow(a.clone(), s::sub(b.clone(), Expr::one()));
                            s::mul(s::mul(b.clone(), lowered), da)
                        }
                    } else {
                        // d(u^w) = u^w (w' log u + w u'/u)
                        let log_part = s::mul(db, s::func(Func::Log, a.clone()));
                        let base_part = s::div(s::mul(b.clone(), da), a.clone());
                        s::mul(e.clone(), s::add(log_part, base_part))
                    }
                }
            }
        }
    };
    memo.insert(e.key(), out.clone());
    out
}
