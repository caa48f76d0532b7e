use std::collections::HashMap;

use super::{BinOp, Expr, ExprError, Func, Node, SymbolId};

#[derive(Clone, Copy, Debug)]
enum Instr {
    Const(f64),
    Input(u32),
    Unary(Func, u32),
    Binary(BinOp, u32, u32),
}

/// A straight-line register program evaluating one or more expressions.
///
/// Shared subtrees of the source DAG are emitted once. Each instruction
/// performs exactly the floating-point operation of the corresponding tree
/// node, so results match [`Expr::eval`] bit for bit.
#[derive(Clone, Debug)]
pub struct Program {
    instrs: Vec<Instr>,
    outputs: Vec<u32>,
    inputs: usize,
}

/// A compiled scalar expression.
#[derive(Clone, Debug)]
pub struct CompiledField {
    program: Program,
}

struct Builder<'a> {
    slot_of_input: &'a HashMap<SymbolId, u32>,
    memo: HashMap<usize, u32>,
    instrs: Vec<Instr>,
}

impl Builder<'_> {
    fn emit(&mut self, e: &Expr) -> Result<u32, ExprError> {
        if let Some(slot) = self.memo.get(&e.key()) {
            return Ok(*slot);
        }
        let instr = match e.node() {
            Node::Const(c) => Instr::Const(*c),
            Node::Var(id) => match self.slot_of_input.get(id) {
                Some(k) => Instr::Input(*k),
                None => return Err(ExprError::VariableNotInOrder(format!("#{id}"))),
            },
            Node::Unary(f, a) => {
                let a = self.emit(a)?;
                Instr::Unary(*f, a)
            }
            Node::Binary(op, a, b) => {
                let a = self.emit(a)?;
                let b = self.emit(b)?;
                Instr::Binary(*op, a, b)
            }
        };
        let slot = self.instrs.len() as u32;
        self.instrs.push(instr);
        self.memo.insert(e.key(), slot);
        Ok(slot)
    }
}

/// Compiles several expressions into one program sharing common nodes.
/// Input `k` of the program binds symbol `order[k]`.
pub fn compile_many(exprs: &[Expr], order: &[SymbolId]) -> Result<Program, ExprError> {
    let slot_of_input: HashMap<SymbolId, u32> = order
        .iter()
        .enumerate()
        .map(|(k, id)| (*id, k as u32))
        .collect();
    let mut b = Builder {
        slot_of_input: &slot_of_input,
        memo: HashMap::new(),
        instrs: Vec::new(),
    };
    let mut outputs = Vec::with_capacity(exprs.len());
    for e in exprs {
        outputs.push(b.emit(e)?);
    }
    Ok(Program {
        instrs: b.instrs,
        outputs,
        inputs: order.len(),
    })
}

/// Compiles a single expression; input `k` binds symbol `order[k]`.
pub fn compile(e: &Expr, order: &[SymbolId]) -> Result<CompiledField, ExprError> {
    Ok(CompiledField {
        program: compile_many(std::slice::from_ref(e), order)?,
    })
}

impl Program {
    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// True when every output is the constant zero.
    pub fn is_identically_zero(&self) -> bool {
        self.outputs
            .iter()
            .all(|&o| matches!(self.instrs[o as usize], Instr::Const(c) if c == 0.0))
    }

    /// Evaluates into `out` using `scratch` as register storage.
    pub fn eval_into(&self, inputs: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        debug_assert_eq!(inputs.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs.len());
        scratch.clear();
        scratch.reserve(self.instrs.len());
        for instr in &self.instrs {
            let v = match *instr {
                Instr::Const(c) => c,
                Instr::Input(k) => inputs[k as usize],
                Instr::Unary(f, a) => f.apply(scratch[a as usize]),
                Instr::Binary(op, a, b) => op.apply(scratch[a as usize], scratch[b as usize]),
            };
            scratch.push(v);
        }
        for (o, slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[*slot as usize];
        }
    }

    pub fn eval(&self, inputs: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(inputs, &mut scratch, &mut out);
        out
    }
}

impl CompiledField {
    pub fn eval(&self, inputs: &[f64]) -> f64 {
        self.program.eval(inputs)[0]
    }

    pub fn eval_with(&self, inputs: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let mut out = [0.0];
        self.program.eval_into(inputs, scratch, &mut out);
        out[0]
    }

    pub fn try_eval(&self, inputs: &[f64]) -> Result<f64, ExprError> {
        let v = self.eval(inputs);
        if v.is_nan() {
            Err(ExprError::Domain)
        } else {
            Ok(v)
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }
}
