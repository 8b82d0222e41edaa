use std::sync::Arc;

use thiserror::Error;

use super::SExpr;
use crate::carrier::CarrierValue;
use crate::dhcol::{
    estimate_fuel, eval_dshoperator, Context, DSHOperator, DSHVal, DshError, TranslateError,
    Translator,
};
use crate::memory::{MemBlock, Memory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolicError {
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Eval(#[from] DshError),
    #[error("evaluation ran out of fuel")]
    OutOfFuel,
    #[error("no value at address {0}, offset {1}")]
    Missing(usize, usize),
}

/// A memory whose input cells hold fresh variables, numbered in ascending
/// (address, offset) order. Returns the memory and the cell of each
/// variable.
pub fn fresh_memory(inputs: &[(usize, usize)]) -> (Memory, Vec<(usize, usize)>) {
    let mut sorted = inputs.to_vec();
    sorted.sort();
    let mut m = Memory::new();
    let mut cells = Vec::new();
    for (a, n) in sorted {
        let mut b = MemBlock::new();
        for k in 0..n {
            b.insert(k, CarrierValue::Symbolic(SExpr::var(cells.len())));
            cells.push((a, k));
        }
        m.add(a, b);
    }
    (m, cells)
}

/// Run `p` over symbolic inputs and read back the output cells.
/// Pointers in `ctx` whose block is not an input start as empty blocks.
pub fn symbolic_exec_cells(
    p: &DSHOperator,
    ctx: &Context,
    inputs: &[(usize, usize)],
    out_addr: usize,
    out_offsets: &[usize],
) -> Result<Vec<Arc<SExpr>>, SymbolicError> {
    let sp = Translator::SYMBOLIC.op(p)?;
    let (mut m, _) = fresh_memory(inputs);
    for (v, _) in ctx.entries() {
        if let DSHVal::Ptr(a, _) = v {
            if m.lookup(*a).is_none() {
                m.add(*a, MemBlock::new());
            }
        }
    }
    let out =
        eval_dshoperator(ctx, &sp, &m, estimate_fuel(&sp)).ok_or(SymbolicError::OutOfFuel)??;
    out_offsets
        .iter()
        .map(|&k| match out.lookup(out_addr).and_then(|b| b.lookup(k)) {
            Some(CarrierValue::Symbolic(s)) => Ok(s.clone()),
            _ => Err(SymbolicError::Missing(out_addr, k)),
        })
        .collect()
}

pub fn symbolic_exec(
    p: &DSHOperator,
    ctx: &Context,
    inputs: &[(usize, usize)],
    out_addr: usize,
    out_offset: usize,
) -> Result<Arc<SExpr>, SymbolicError> {
    Ok(symbolic_exec_cells(p, ctx, inputs, out_addr, &[out_offset])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::{CtOp, NatValue};
    use crate::dhcol::{AExpr, MemRef, NExpr, PExpr};

    fn ctx2() -> Context {
        Context::from_list(vec![
            (DSHVal::Ptr(0, NatValue::big(2)), true),
            (DSHVal::Ptr(1, NatValue::big(2)), false),
        ])
    }

    fn off(k: u64) -> NExpr {
        NExpr::Const(NatValue::big(k))
    }

    #[test]
    fn assign_passes_a_variable_through() {
        let p = DSHOperator::Assign {
            src: MemRef::new(PExpr(0), off(1)),
            dst: MemRef::new(PExpr(1), off(0)),
        };
        let s = symbolic_exec(&p, &ctx2(), &[(0, 2)], 1, 0).unwrap();
        assert_eq!(*s, SExpr::Var(1));
    }

    #[test]
    fn power_unfolds_without_folding_constants() {
        let p = DSHOperator::Power {
            n: off(2),
            src: MemRef::new(PExpr(0), off(1)),
            dst: MemRef::new(PExpr(1), off(0)),
            f: AExpr::bin(CtOp::Plus, AExpr::Var(1), AExpr::Var(0)),
            init: CarrierValue::int(0),
        };
        let s = symbolic_exec(&p, &ctx2(), &[(0, 2)], 1, 0).unwrap();
        assert_eq!(
            s.to_string(),
            "(SPlus (SPlus SConstZero (SVar 1)) (SVar 1))"
        );
    }

    #[test]
    fn unwritten_output_is_reported() {
        let s = symbolic_exec(&DSHOperator::Nop, &ctx2(), &[(0, 2)], 1, 0);
        assert_eq!(s, Err(SymbolicError::Missing(1, 0)));
    }
}
