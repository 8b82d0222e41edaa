//! Seeded random program generators for the differential checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::carrier::{CarrierValue, CtOp, NatKind, NatValue};
use crate::dhcol::{AExpr, DSHOperator, MExpr, MemRef, NExpr, NOp, PExpr, TopLevel};
use crate::hcol::{dims, ConstVec, HExpr};
use crate::memory::MemBlock;
use crate::sample::{random_rationals, SampleRng};
use crate::scalar::{ScalarExpr, ScalarFn};

const BINARY: [CtOp; 6] = [
    CtOp::Plus,
    CtOp::Sub,
    CtOp::Mult,
    CtOp::Min,
    CtOp::Max,
    CtOp::Zless,
];

fn small(rng: &mut SampleRng) -> CarrierValue {
    CarrierValue::rat(rng.gen_range(-6..=6), rng.gen_range(1..=4))
}

fn unary_fn(rng: &mut SampleRng) -> ScalarFn {
    if rng.gen_bool(0.3) {
        return ScalarFn::unary_abs();
    }
    let op = *BINARY.choose(rng).unwrap();
    let c = ScalarExpr::Const(small(rng));
    let body = if rng.gen_bool(0.5) {
        ScalarExpr::bin(op, ScalarExpr::arg(0), c)
    } else {
        ScalarExpr::bin(op, c, ScalarExpr::arg(0))
    };
    ScalarFn {
        arity: 1,
        indexed: false,
        body,
    }
}

fn binary_fn(rng: &mut SampleRng) -> ScalarFn {
    ScalarFn::binary_ignore_index(*BINARY.choose(rng).unwrap())
}

fn monoid(rng: &mut SampleRng) -> (ScalarFn, CarrierValue) {
    match rng.gen_range(0..3) {
        0 => (ScalarFn::binary(CtOp::Plus), CarrierValue::int(0)),
        1 => (ScalarFn::binary(CtOp::Max), CarrierValue::int(0)),
        _ => (ScalarFn::binary(CtOp::Min), CarrierValue::int(0)),
    }
}

fn lit(rng: &mut SampleRng, n: usize) -> ConstVec {
    ConstVec::lit((0..n).map(|_| small(rng)).collect())
}

/// Leaf operators accepting `n` inputs.
fn hcol_leaf(rng: &mut SampleRng, n: usize) -> HExpr {
    let mut opts: Vec<HExpr> = Vec::new();
    let (f, z) = monoid(rng);
    opts.push(HExpr::Reduction { n, f, z });
    opts.push(HExpr::InfinityNorm { n });
    if n <= 6 {
        opts.push(HExpr::Pointwise {
            n,
            f: unary_fn(rng),
        });
        let k = rng.gen_range(1..=2);
        opts.push(HExpr::Append { n, a: lit(rng, k) });
        opts.push(HExpr::Prepend { n, a: lit(rng, 1) });
    }
    if n.is_multiple_of(2) {
        let k = n / 2;
        opts.push(HExpr::BinOp {
            n: k,
            f: binary_fn(rng),
        });
        opts.push(HExpr::ScalarProd { n: k });
        opts.push(HExpr::ChebyshevDistance { n: k });
        opts.push(HExpr::VMinus { n: k });
    }
    if n == 1 {
        opts.push(HExpr::Atomic { f: unary_fn(rng) });
        let k = rng.gen_range(1..=3);
        opts.push(HExpr::EvalPolynomial { a: lit(rng, k) });
        opts.push(HExpr::MonomialEnumerator {
            n: rng.gen_range(1..=3),
        });
        let (f, _) = monoid(rng);
        opts.push(HExpr::Inductor {
            n: rng.gen_range(0..=3),
            f,
            z: small(rng),
        });
        opts.push(HExpr::Induction {
            n: rng.gen_range(1..=3),
            f: ScalarFn::binary(CtOp::Mult),
            z: CarrierValue::int(1),
        });
    }
    opts.swap_remove(rng.gen_range(0..opts.len()))
}

fn out_dim(e: &HExpr) -> usize {
    dims(e).expect("generated operators are well typed").1
}

/// A well-typed HCOL operator with `n` inputs; vectors stay at most eight
/// long.
pub fn random_hcol(rng: &mut SampleRng, n: usize, depth: usize) -> HExpr {
    if depth == 0 || rng.gen_bool(0.3) {
        return hcol_leaf(rng, n);
    }
    match rng.gen_range(0..4) {
        0 => {
            let g = random_hcol(rng, n, depth - 1);
            let f = random_hcol(rng, out_dim(&g), depth - 1);
            HExpr::compose(f, g)
        }
        1 if n >= 2 => {
            let a = rng.gen_range(1..n);
            let f = random_hcol(rng, a, depth - 1);
            let g = random_hcol(rng, n - a, depth - 1);
            if out_dim(&f) + out_dim(&g) > 8 {
                return hcol_leaf(rng, n);
            }
            HExpr::cross(f, g)
        }
        2 => {
            let f = random_hcol(rng, n, depth - 1);
            let g = random_hcol(rng, n, depth - 1);
            if out_dim(&f) + out_dim(&g) > 8 {
                return hcol_leaf(rng, n);
            }
            HExpr::stack(f, g)
        }
        3 if n >= 2 => {
            let a = rng.gen_range(1..n);
            let f = random_hcol(rng, a, 0);
            let f = HExpr::compose(HExpr::InfinityNorm { n: out_dim(&f) }, f);
            let g = random_hcol(rng, n - a, 0);
            let g = HExpr::compose(
                HExpr::Reduction {
                    n: out_dim(&g),
                    f: ScalarFn::binary(CtOp::Plus),
                    z: CarrierValue::int(0),
                },
                g,
            );
            HExpr::tless(f, g)
        }
        _ => hcol_leaf(rng, n),
    }
}

/// Shape of the generated DHCOL programs.
#[derive(Debug, Clone, Copy)]
pub struct DshGenConfig {
    pub max_depth: usize,
    pub max_loop: u64,
    pub max_loops: usize,
}

impl Default for DshGenConfig {
    fn default() -> Self {
        DshGenConfig {
            max_depth: 6,
            max_loop: 8,
            max_loops: 8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Ptr {
        size: u64,
        writable: bool,
    },
    /// Natural known to be below `bound`.
    Nat {
        bound: u64,
    },
    Val,
}

struct DshGen<'a> {
    rng: &'a mut SampleRng,
    cfg: DshGenConfig,
    /// Innermost last.
    ctx: Vec<Slot>,
    loops: usize,
}

fn nat(n: u64) -> NatValue {
    NatValue::big(n)
}

impl DshGen<'_> {
    fn index_of(&self, pos: usize) -> usize {
        self.ctx.len() - 1 - pos
    }

    fn pick(&mut self, pred: impl Fn(&Slot) -> bool) -> Option<(usize, Slot)> {
        let found: Vec<(usize, Slot)> = self
            .ctx
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s))
            .map(|(p, s)| (self.index_of(p), *s))
            .collect();
        found.choose(self.rng).copied()
    }

    fn ptr(&mut self, writable: bool, min: u64) -> Option<(PExpr, u64)> {
        self.pick(
            |s| matches!(s, Slot::Ptr { size, writable: w } if *size >= min && (*w || !writable)),
        )
        .map(|(k, s)| match s {
            Slot::Ptr { size, .. } => (PExpr(k), size),
            _ => unreachable!(),
        })
    }

    /// An index expression whose value is below `bound`.
    fn nexpr_below(&mut self, bound: u64) -> NExpr {
        let var = self.pick(|s| matches!(s, Slot::Nat { bound: b } if *b <= bound));
        match (var, self.rng.gen_range(0..4)) {
            (Some((k, _)), 0 | 1) => NExpr::Var(k),
            (Some((k, _)), 2) => {
                let c = self.rng.gen_range(0..bound);
                NExpr::bin(
                    NOp::Mod,
                    NExpr::bin(NOp::Plus, NExpr::Var(k), NExpr::Const(nat(c))),
                    NExpr::Const(nat(bound)),
                )
            }
            _ => NExpr::Const(nat(self.rng.gen_range(0..bound))),
        }
    }

    fn aexpr(&mut self, depth: usize) -> AExpr {
        let choice = if depth == 0 {
            self.rng.gen_range(0..3)
        } else {
            self.rng.gen_range(0..5)
        };
        match choice {
            0 => match self.pick(|s| matches!(s, Slot::Val)) {
                Some((k, _)) => AExpr::Var(k),
                None => AExpr::Const(small(self.rng)),
            },
            1 => AExpr::Const(small(self.rng)),
            2 => match self.ptr(false, 1) {
                Some((p, size)) => {
                    let i = self.nexpr_below(size);
                    AExpr::Nth(MExpr::PtrDeref(p), i)
                }
                None => AExpr::Const(small(self.rng)),
            },
            3 => AExpr::Abs(Box::new(self.aexpr(depth - 1))),
            _ => {
                let op = *BINARY.choose(self.rng).unwrap();
                AExpr::bin(op, self.aexpr(depth - 1), self.aexpr(depth - 1))
            }
        }
    }

    fn under<T>(&mut self, push: &[Slot], f: impl FnOnce(&mut Self) -> T) -> T {
        let d = self.ctx.len();
        self.ctx.extend_from_slice(push);
        let r = f(self);
        self.ctx.truncate(d);
        r
    }

    fn op(&mut self, depth: usize) -> DSHOperator {
        let compound = depth > 0 && self.rng.gen_bool(0.6);
        if compound {
            match self.rng.gen_range(0..3) {
                0 if self.loops < self.cfg.max_loops => {
                    self.loops += 1;
                    let n = self.rng.gen_range(0..=self.cfg.max_loop);
                    let body = self.under(&[Slot::Nat { bound: n.max(1) }], |g| g.op(depth - 1));
                    return DSHOperator::Loop {
                        n: nat(n),
                        body: Box::new(body),
                    };
                }
                1 => {
                    let size = self.rng.gen_range(1..=4);
                    let body = self.under(
                        &[Slot::Ptr {
                            size,
                            writable: true,
                        }],
                        |g| {
                            let init = DSHOperator::MemInit {
                                y: PExpr(0),
                                value: CarrierValue::int(0),
                            };
                            DSHOperator::seq(init, g.op(depth - 1))
                        },
                    );
                    return DSHOperator::Alloc {
                        size: nat(size),
                        body: Box::new(body),
                    };
                }
                _ => return DSHOperator::seq(self.op(depth - 1), self.op(depth - 1)),
            }
        }
        self.leaf()
    }

    fn leaf(&mut self) -> DSHOperator {
        let (y, ysize) = match self.ptr(true, 1) {
            Some(p) => p,
            None => return DSHOperator::Nop,
        };
        match self.rng.gen_range(0..7) {
            0 => DSHOperator::Nop,
            1 => {
                let (x, xsize) = self.ptr(false, 1).unwrap();
                let src = MemRef::new(x, self.nexpr_below(xsize));
                let dst = MemRef::new(y, self.nexpr_below(ysize));
                DSHOperator::Assign { src, dst }
            }
            2 => {
                let (x, xsize) = self.ptr(false, 1).unwrap();
                let n = self.rng.gen_range(0..=xsize.min(ysize));
                let f = self.under(&[Slot::Nat { bound: n.max(1) }, Slot::Val], |g| g.aexpr(2));
                DSHOperator::IMap { n: nat(n), x, y, f }
            }
            3 => match self.ptr(false, 2) {
                Some((x, xsize)) => {
                    let n = self.rng.gen_range(1..=(xsize / 2).min(ysize));
                    let f = self.under(&[Slot::Nat { bound: n }, Slot::Val, Slot::Val], |g| {
                        g.aexpr(2)
                    });
                    DSHOperator::BinOp { n: nat(n), x, y, f }
                }
                None => DSHOperator::Nop,
            },
            4 => {
                let (x0, s0) = self.ptr(false, 1).unwrap();
                let (x1, s1) = self.ptr(false, 1).unwrap();
                let n = self.rng.gen_range(0..=s0.min(s1).min(ysize));
                let f = self.under(&[Slot::Val, Slot::Val], |g| g.aexpr(2));
                DSHOperator::MemMap2 {
                    n: nat(n),
                    x0,
                    x1,
                    y,
                    f,
                }
            }
            5 => {
                let (x, xsize) = self.ptr(false, 1).unwrap();
                let n = self.nexpr_below(6);
                let src = MemRef::new(x, self.nexpr_below(xsize));
                let dst = MemRef::new(y, self.nexpr_below(ysize));
                let f = self.under(&[Slot::Val, Slot::Val], |g| g.aexpr(2));
                DSHOperator::Power {
                    n,
                    src,
                    dst,
                    f,
                    init: small(self.rng),
                }
            }
            _ => DSHOperator::MemInit {
                y,
                value: small(self.rng),
            },
        }
    }
}

/// A random closed DHCOL program over the standard layout (one global of
/// four values, X and Y of four values), with its initial state.
pub fn random_dhcol(rng: &mut SampleRng, cfg: DshGenConfig) -> (DSHOperator, TopLevel) {
    let tl = TopLevel {
        globals: vec![random_rationals(rng, 4)],
        x: MemBlock::dense(&random_rationals(rng, 4)),
        x_size: 4,
        y: MemBlock::dense(&random_rationals(rng, 4)),
        y_size: 4,
        nat: NatKind::BigNat,
    };
    let ctx = vec![
        Slot::Ptr {
            size: 4,
            writable: true,
        },
        Slot::Ptr {
            size: 4,
            writable: false,
        },
        Slot::Ptr {
            size: 4,
            writable: false,
        },
    ];
    let mut g = DshGen {
        rng,
        cfg,
        ctx,
        loops: 0,
    };
    let op = g.op(cfg.max_depth);
    (op, tl)
}

/// Nesting depth counted in compound operators.
pub fn depth(op: &DSHOperator) -> usize {
    match op {
        DSHOperator::Loop { body, .. } | DSHOperator::Alloc { body, .. } => 1 + depth(body),
        DSHOperator::Seq(a, b) => 1 + depth(a).max(depth(b)),
        _ => 0,
    }
}

pub fn loop_count(op: &DSHOperator) -> usize {
    match op {
        DSHOperator::Loop { body, .. } => 1 + loop_count(body),
        DSHOperator::Alloc { body, .. } => loop_count(body),
        DSHOperator::Seq(a, b) => loop_count(a) + loop_count(b),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::rng;

    #[test]
    fn hcol_programs_are_well_typed() {
        let mut r = rng(1);
        for k in 0..300 {
            let n = 1 + k % 6;
            let e = random_hcol(&mut r, n, 3);
            let (i, o) = dims(&e).unwrap();
            assert_eq!(i, n);
            assert!(o <= 9, "{o}");
        }
    }

    #[test]
    fn dhcol_programs_respect_bounds() {
        let mut r = rng(2);
        let cfg = DshGenConfig::default();
        let mut total = 0;
        for _ in 0..300 {
            let (op, _) = random_dhcol(&mut r, cfg);
            // Alloc adds a Seq level for its MemInit.
            assert!(depth(&op) <= 2 * cfg.max_depth);
            assert!(loop_count(&op) <= cfg.max_loops);
            total += op.size();
        }
        assert!(total > 300 * 4, "{total}");
    }
}
