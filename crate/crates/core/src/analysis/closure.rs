use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::dhcol::{AExpr, DSHOperator, NExpr, NOp};

/// Range of an integer context entry: `Index(n)` lies in `[0, n]`; every
/// other entry is a placeholder that keeps the indices aligned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DSHIndexRange {
    Index(BigUint),
    Other,
}

impl fmt::Display for DSHIndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DSHIndexRange::Index(n) => write!(f, "DSHIndex {n}"),
            DSHIndexRange::Other => f.write_str("DSHOtherVar"),
        }
    }
}

/// An index expression with the ranges of its context, index 0 first.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeClosure {
    pub ctx: Vec<DSHIndexRange>,
    pub expr: NExpr,
}

impl fmt::Display for RangeClosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx: Vec<String> = self.ctx.iter().map(|r| r.to_string()).collect();
        write!(f, "([{}], {})", ctx.join("; "), self.expr)
    }
}

pub type ClosureTrace = Vec<RangeClosure>;

struct Tracer {
    /// Innermost entry last.
    stack: Vec<DSHIndexRange>,
    out: ClosureTrace,
}

impl Tracer {
    fn capture(&mut self, e: &NExpr) {
        self.out.push(RangeClosure {
            ctx: self.stack.iter().rev().cloned().collect(),
            expr: e.clone(),
        });
    }

    fn with<F: FnOnce(&mut Self)>(&mut self, push: &[DSHIndexRange], f: F) {
        let depth = self.stack.len();
        self.stack.extend_from_slice(push);
        f(self);
        self.stack.truncate(depth);
    }

    fn aexpr(&mut self, e: &AExpr) {
        match e {
            AExpr::Var(_) | AExpr::Const(_) => {}
            AExpr::Nth(_, n) => self.capture(n),
            AExpr::Abs(a) => self.aexpr(a),
            AExpr::Bin(_, a, b) => {
                self.aexpr(a);
                self.aexpr(b);
            }
        }
    }

    fn op(&mut self, op: &DSHOperator) {
        use DSHIndexRange::*;
        use DSHOperator::*;
        match op {
            Nop | MemInit { .. } => {}
            Assign { src, dst } => {
                self.capture(&src.off);
                self.capture(&dst.off);
            }
            IMap { n, f, .. } => self.with(&[Index(n.to_nat()), Other], |t| t.aexpr(f)),
            BinOp { n, f, .. } => self.with(&[Index(n.to_nat()), Other, Other], |t| t.aexpr(f)),
            MemMap2 { f, .. } => self.with(&[Other, Other], |t| t.aexpr(f)),
            Power { n, src, dst, f, .. } => {
                self.capture(n);
                self.capture(&src.off);
                self.capture(&dst.off);
                self.with(&[Other, Other], |t| t.aexpr(f));
            }
            Loop { n, body } => {
                let mut k = n.to_nat();
                while !k.is_zero() {
                    k -= 1u32;
                    self.with(&[Index(k.clone())], |t| t.op(body));
                }
            }
            Alloc { body, .. } => self.with(&[Other], |t| t.op(body)),
            Seq(a, b) => {
                self.op(a);
                self.op(b);
            }
        }
    }
}

/// Every index expression the operator would evaluate, with the ranges of
/// the integer variables in scope. No arithmetic is performed, so the
/// trace depends only on the operator and the initial ranges (index 0
/// first).
pub fn closure_trace(op: &DSHOperator, ranges: &[DSHIndexRange]) -> ClosureTrace {
    let mut t = Tracer {
        stack: ranges.iter().rev().cloned().collect(),
        out: Vec::new(),
    };
    t.op(op);
    t.out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ClosureVerdict {
    /// Every value stays within `[0, max]`.
    Pass {
        max: BigUint,
    },
    OverflowPossible,
    UnderflowPossible,
    /// The expression reads a variable that is not a bounded index.
    Unbounded(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub closures: Vec<ClosureVerdict>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.closures
            .iter()
            .all(|c| matches!(c, ClosureVerdict::Pass { .. }))
    }
}

type Range = (BigUint, BigUint);

fn range_of(e: &NExpr, ctx: &[DSHIndexRange], limit: &BigUint) -> Result<Range, ClosureVerdict> {
    let r = match e {
        NExpr::Var(k) => match ctx.get(*k) {
            Some(DSHIndexRange::Index(n)) => (BigUint::zero(), n.clone()),
            _ => return Err(ClosureVerdict::Unbounded(*k)),
        },
        NExpr::Const(c) => (c.to_nat(), c.to_nat()),
        NExpr::Bin(op, a, b) => {
            let (al, ah) = range_of(a, ctx, limit)?;
            let (bl, bh) = range_of(b, ctx, limit)?;
            match op {
                NOp::Plus => (al + bl, ah + bh),
                NOp::Mult => (al * bl, ah * bh),
                NOp::Minus => {
                    if al < bh {
                        return Err(ClosureVerdict::UnderflowPossible);
                    }
                    (al - bh, ah - bl)
                }
                // Division and remainder by zero fail in both semantics alike.
                NOp::Div => {
                    if bl.is_zero() {
                        (BigUint::zero(), ah)
                    } else {
                        (al / bh, ah / bl)
                    }
                }
                NOp::Mod => {
                    let top = if bh.is_zero() {
                        BigUint::zero()
                    } else {
                        bh - 1u32
                    };
                    (BigUint::zero(), std::cmp::min(ah, top))
                }
                NOp::Min => (std::cmp::min(al, bl), std::cmp::min(ah, bh)),
                NOp::Max => (std::cmp::max(al, bl), std::cmp::max(ah, bh)),
            }
        }
    };
    if r.1 > *limit {
        return Err(ClosureVerdict::OverflowPossible);
    }
    Ok(r)
}

/// Interval evaluation of every closure: no intermediate value may exceed
/// `2^width - 1` and no subtraction may go below zero.
pub fn check_trace_no_overflow(t: &ClosureTrace, width: u32) -> Verdict {
    let limit = (BigUint::one() << width as usize) - 1u32;
    let closures = t
        .iter()
        .map(|c| match range_of(&c.expr, &c.ctx, &limit) {
            Ok((_, max)) => ClosureVerdict::Pass { max },
            Err(v) => v,
        })
        .collect();
    Verdict { closures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::NatValue;
    use crate::dhcol::{MemRef, PExpr};

    fn nc(n: u64) -> NExpr {
        NExpr::Const(NatValue::big(n))
    }

    #[test]
    fn nop_has_empty_trace() {
        assert!(closure_trace(&DSHOperator::Nop, &[]).is_empty());
    }

    #[test]
    fn assign_captures_both_offsets() {
        let op = DSHOperator::Assign {
            src: MemRef::new(PExpr(0), nc(1)),
            dst: MemRef::new(PExpr(1), nc(2)),
        };
        let t = closure_trace(&op, &[DSHIndexRange::Other, DSHIndexRange::Other]);
        assert_eq!(
            t.iter().map(|c| c.expr.clone()).collect::<Vec<_>>(),
            vec![nc(1), nc(2)]
        );
        assert!(check_trace_no_overflow(&t, 64).passed());
    }

    #[test]
    fn minus_and_overflow_are_flagged() {
        let c = |expr| RangeClosure {
            ctx: vec![DSHIndexRange::Index(3u32.into())],
            expr,
        };
        let t = vec![
            c(NExpr::bin(NOp::Minus, NExpr::Var(0), nc(5))),
            c(NExpr::bin(NOp::Mult, nc(1 << 63), nc(2))),
            c(NExpr::bin(NOp::Minus, nc(9), NExpr::Var(0))),
        ];
        let v = check_trace_no_overflow(&t, 64);
        assert_eq!(
            v.closures,
            vec![
                ClosureVerdict::UnderflowPossible,
                ClosureVerdict::OverflowPossible,
                ClosureVerdict::Pass { max: 9u32.into() }
            ]
        );
    }

    #[test]
    fn other_entries_are_unbounded() {
        let t = vec![RangeClosure {
            ctx: vec![DSHIndexRange::Other],
            expr: NExpr::Var(0),
        }];
        assert_eq!(
            check_trace_no_overflow(&t, 64).closures,
            vec![ClosureVerdict::Unbounded(0)]
        );
    }
}
