use std::collections::HashMap;

use crate::expr::{compile_many, Expr, Program};
use crate::schemes::{scheme_terms, Base, Calculus, Op, Order, Part};

use super::{a_bar, apply_g0, apply_l, apply_lbar_with, ModelError, SdeModel};

/// One scheme term with its fields for every noise tuple.
#[derive(Clone, Debug)]
pub struct FieldTerm {
    pub label: String,
    pub ops: Vec<Op>,
    pub base: Base,
    pub parts: Vec<Part>,
    /// Length of the noise tuple.
    pub arity: usize,
    /// Output position of tuple 0; tuple `t` component `k` sits at `offset + t·n + k`.
    pub offset: usize,
    /// Per noise tuple: all components are the constant zero.
    pub zero: Vec<bool>,
}

/// The compiled operator superpositions of one scheme.
#[derive(Clone, Debug)]
pub struct SchemeFields {
    pub order: Order,
    pub calculus: Calculus,
    pub n: usize,
    pub m: usize,
    pub terms: Vec<FieldTerm>,
    /// Number of distinct superpositions (word suffix, base, indices) built.
    pub distinct: usize,
    exprs: Vec<Expr>,
    program: Program,
}

impl SchemeFields {
    pub fn outputs(&self) -> usize {
        self.exprs.len()
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Evaluates every field at `(y, t)`. `inputs` and `scratch` are reusable buffers.
    pub fn eval_into(
        &self,
        y: &[f64],
        t: f64,
        inputs: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) {
        inputs.clear();
        inputs.extend_from_slice(y);
        inputs.push(t);
        self.program.eval_into(inputs, scratch, out);
    }

    pub fn eval(&self, y: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs()];
        self.eval_into(y, t, &mut Vec::new(), &mut Vec::new(), &mut out);
        out
    }

    pub fn term(&self, label: &str) -> Option<&FieldTerm> {
        self.terms.iter().find(|t| t.label == label)
    }

    /// Symbolic field of a term for a 0-based noise tuple.
    pub fn field(&self, term: &FieldTerm, noise: &[usize]) -> &[Expr] {
        let t = crate::integrals::tuple_index(noise, self.m);
        let start = term.offset + t * self.n;
        &self.exprs[start..start + self.n]
    }

    /// Number of (term, noise tuple) groups, counting the zero ones.
    pub fn group_count(&self) -> usize {
        self.terms.iter().map(|t| t.zero.len()).sum()
    }
}

type Key = (Vec<Op>, Base, Vec<usize>);

struct Builder<'a> {
    model: &'a SdeModel,
    abar: Option<Vec<Expr>>,
    memo: HashMap<Key, Vec<Expr>>,
}

impl Builder<'_> {
    fn abar(&mut self) -> Vec<Expr> {
        if self.abar.is_none() {
            self.abar = Some(a_bar(self.model));
        }
        self.abar.clone().expect("just set")
    }

    fn apply(&mut self, ops: &[Op], base: Base, noise: &[usize]) -> Result<Vec<Expr>, ModelError> {
        let key = (ops.to_vec(), base, noise.to_vec());
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let out = match ops.split_first() {
            None => match base {
                Base::Drift => self.model.drift.clone(),
                Base::DriftBar => self.abar(),
                Base::Column => self.model.column(noise[0]),
            },
            Some((Op::G0, rest)) => {
                let inner = self.apply(rest, base, &noise[1..])?;
                apply_g0(self.model, noise[0], &inner)?
            }
            Some((Op::L, rest)) => {
                let inner = self.apply(rest, base, noise)?;
                apply_l(self.model, &inner)
            }
            Some((Op::Lbar, rest)) => {
                let inner = self.apply(rest, base, noise)?;
                let abar = self.abar();
                apply_lbar_with(self.model, &abar, &inner)
            }
        };
        self.memo.insert(key, out.clone());
        Ok(out)
    }
}

/// Differentiates, simplifies and compiles every superposition of a scheme
/// over all noise tuples.
pub fn build_scheme_fields(
    model: &SdeModel,
    order: Order,
    calculus: Calculus,
) -> Result<SchemeFields, ModelError> {
    let terms =
        scheme_terms(order, calculus).map_err(|e| ModelError::Unsupported(e.to_string()))?;
    let (n, m) = (model.n, model.m);
    let mut b = Builder {
        model,
        abar: None,
        memo: HashMap::new(),
    };
    let mut exprs = Vec::new();
    let mut out_terms = Vec::with_capacity(terms.len());
    let mut noise = Vec::new();
    for term in terms {
        let arity = term.arity();
        let offset = exprs.len();
        let count = m.pow(arity as u32);
        let mut zero = Vec::with_capacity(count);
        for t in 0..count {
            noise.clear();
            let mut x = t;
            for _ in 0..arity {
                noise.push(x % m);
                x /= m;
            }
            let f = b.apply(&term.ops, term.base, &noise)?;
            zero.push(f.iter().all(Expr::is_zero));
            exprs.extend(f);
        }
        out_terms.push(FieldTerm {
            label: term.label(),
            ops: term.ops,
            base: term.base,
            parts: term.parts,
            arity,
            offset,
            zero,
        });
    }
    let program =
        compile_many(&exprs, &model.symbols.order()).map_err(|source| ModelError::Expression {
            what: "scheme fields".into(),
            source,
        })?;
    Ok(SchemeFields {
        order,
        calculus,
        n,
        m,
        terms: out_terms,
        distinct: b.memo.len(),
        exprs,
        program,
    })
}
