//! Σ-HCOL to MSHCOL and MSHCOL to DHCOL, plus the executable forms of the
//! purity and memory-compatibility obligations of the DHCOL output.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierValue, NatValue};
use crate::dhcol::{
    estimate_fuel, eval_dshoperator, AExpr, Context, DSHOperator, MExpr, MemRef, NExpr, NOp, PExpr,
    TopLevel,
};
use crate::memory::{MemBlock, Memory};
use crate::mshcol::{eval_mshcol, msh_contract, msh_dims, MFamily, MSHExpr, MshError};
use crate::report::CheckReport;
use crate::sample;
use crate::scalar::{Env, NatExpr, ScalarExpr, ScalarFn, VecRef};
use crate::sigma::SHExpr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error("{0} has no MSHCOL counterpart; rewrite it away first")]
    Unsupported(&'static str),
    #[error("cannot compile: {0}")]
    Compile(String),
    #[error(transparent)]
    Msh(#[from] MshError),
}

pub fn shcol_to_mshcol(e: &SHExpr) -> Result<MSHExpr, LowerError> {
    use SHExpr::*;
    let b = |x: &SHExpr| shcol_to_mshcol(x).map(Box::new);
    Ok(match e {
        Embed { n, b: k, .. } => MSHExpr::Embed {
            n: *n,
            b: k.clone(),
        },
        Pick { n, b: k, .. } => MSHExpr::Pick {
            n: *n,
            b: k.clone(),
        },
        Pointwise { n, f } => MSHExpr::Pointwise {
            n: *n,
            f: f.clone(),
        },
        BinOp { n, f } => MSHExpr::BinOp {
            n: *n,
            f: f.clone(),
        },
        Inductor { n, f, z } => MSHExpr::Inductor {
            n: n.clone(),
            f: f.clone(),
            z: z.clone(),
        },
        Apply2Union { dot, f, g } => MSHExpr::Apply2Union {
            dot: dot.clone(),
            f: b(f)?,
            g: b(g)?,
        },
        SafeCast(f) | UnSafeCast(f) => shcol_to_mshcol(f)?,
        Compose(f, g) => MSHExpr::Compose(b(f)?, b(g)?),
        IReduction { dot, z, fam } => MSHExpr::IReduction {
            dot: dot.clone(),
            z: z.clone(),
            fam: MFamily {
                n: fam.n,
                body: b(&fam.body)?,
            },
        },
        IUnion { fam, .. } => MSHExpr::IUnion {
            fam: MFamily {
                n: fam.n,
                body: b(&fam.body)?,
            },
        },
        Lift { .. } | Scatter { .. } | Gather { .. } => {
            return Err(LowerError::Unsupported(e.name()))
        }
    })
}

/// Maps MSHCOL variable indices to DHCOL context indices.
#[derive(Debug, Clone, PartialEq)]
pub enum VarResolver {
    Id,
    Fake(Box<VarResolver>, usize),
    Lambda(Box<VarResolver>, usize),
}

impl VarResolver {
    pub fn fake(self, n: usize) -> Self {
        VarResolver::Fake(Box::new(self), n)
    }

    pub fn lambda(self, n: usize) -> Self {
        VarResolver::Lambda(Box::new(self), n)
    }

    pub fn resolve(&self, r: usize) -> usize {
        match self {
            VarResolver::Id => r,
            VarResolver::Fake(p, n) => p.resolve(r) + n,
            VarResolver::Lambda(p, n) if r < *n => r,
            VarResolver::Lambda(p, n) => p.resolve(r - n) + n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DSHType {
    Nat,
    CType,
    Ptr(usize),
}

/// A compiled operator together with the globals it expects in front of
/// the X and Y pointers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compiled {
    pub globals: Vec<(String, DSHType)>,
    pub i: usize,
    pub o: usize,
    pub op: DSHOperator,
}

fn big(n: u64) -> NatValue {
    NatValue::BigNat(BigUint::from(n))
}

/// Where a scalar function's parameters live once the template has pushed
/// its values: `k` entries pushed, argument `j` at `args[j]`, index at `idx`.
struct FnFrame<'a> {
    k: usize,
    args: &'a [usize],
    idx: Option<usize>,
}

fn compile_nat(e: &NatExpr, res: &VarResolver, fr: &FnFrame) -> Result<NExpr, LowerError> {
    use NatExpr::*;
    let bin = |op, a: &NatExpr, b: &NatExpr| -> Result<NExpr, LowerError> {
        Ok(NExpr::bin(
            op,
            compile_nat(a, res, fr)?,
            compile_nat(b, res, fr)?,
        ))
    };
    match e {
        Const(c) => Ok(NExpr::Const(big(*c))),
        Var(r) => Ok(NExpr::Var(res.resolve(*r) + fr.k)),
        Idx => fr
            .idx
            .map(NExpr::Var)
            .ok_or_else(|| LowerError::Compile("index used outside an indexed function".into())),
        Plus(a, b) => bin(NOp::Plus, a, b),
        Minus(a, b) => bin(NOp::Minus, a, b),
        Mult(a, b) => bin(NOp::Mult, a, b),
        Div(a, b) => bin(NOp::Div, a, b),
        Mod(a, b) => bin(NOp::Mod, a, b),
        Min(a, b) => bin(NOp::Min, a, b),
        Max(a, b) => bin(NOp::Max, a, b),
    }
}

fn compile_scalar(e: &ScalarExpr, res: &VarResolver, fr: &FnFrame) -> Result<AExpr, LowerError> {
    Ok(match e {
        ScalarExpr::Const(c) => AExpr::Const(c.clone()),
        ScalarExpr::Arg(j) => AExpr::Var(
            *fr.args
                .get(*j)
                .ok_or_else(|| LowerError::Compile(format!("argument {j} out of range")))?,
        ),
        ScalarExpr::Nth(v, i) => {
            let m = match v {
                VecRef::Global(r) => MExpr::PtrDeref(PExpr(res.resolve(*r) + fr.k)),
                VecRef::Lit(xs) => MExpr::Const(MemBlock::dense(xs), big(xs.len() as u64)),
            };
            AExpr::Nth(m, compile_nat(i, res, fr)?)
        }
        ScalarExpr::Abs(a) => AExpr::Abs(Box::new(compile_scalar(a, res, fr)?)),
        ScalarExpr::Bin(op, a, b) => AExpr::bin(
            *op,
            compile_scalar(a, res, fr)?,
            compile_scalar(b, res, fr)?,
        ),
    })
}

fn compile_fn(f: &ScalarFn, res: &VarResolver, fr: FnFrame) -> Result<AExpr, LowerError> {
    let fr = if f.indexed {
        fr
    } else {
        FnFrame { idx: None, ..fr }
    };
    compile_scalar(&f.body, res, &fr)
}

fn at(p: PExpr, off: NExpr) -> MemRef {
    MemRef::new(p, off)
}

fn zero_off() -> NExpr {
    NExpr::Const(big(0))
}

struct Lowerer {
    /// Sizes of the enclosing family binders, innermost last.
    binders: Vec<usize>,
    /// Lengths of the globals.
    globals: Vec<usize>,
}

impl Lowerer {
    /// Environments covering every assignment of the enclosing binders
    /// (up to a cap), used to check member contracts at compile time.
    fn sample_envs(&self) -> Vec<Env> {
        let base = Env::with_globals(
            &self
                .globals
                .iter()
                .map(|&n| vec![CarrierValue::int(0); n])
                .collect::<Vec<_>>(),
        );
        let mut envs = vec![base];
        for &n in &self.binders {
            let mut next = Vec::new();
            for e in &envs {
                for j in 0..n.max(1) {
                    next.push(e.push_nat(j as u64));
                }
            }
            if next.len() > 4096 {
                next.truncate(4096);
            }
            envs = next;
        }
        envs
    }

    fn compile(
        &mut self,
        e: &MSHExpr,
        res: &VarResolver,
        x: PExpr,
        y: PExpr,
    ) -> Result<DSHOperator, LowerError> {
        use MSHExpr::*;
        let direct = FnFrame {
            k: 0,
            args: &[],
            idx: None,
        };
        Ok(match e {
            Embed { b, .. } => DSHOperator::Assign {
                src: at(x, zero_off()),
                dst: at(y, compile_nat(b, res, &direct)?),
            },
            Pick { b, .. } => DSHOperator::Assign {
                src: at(x, compile_nat(b, res, &direct)?),
                dst: at(y, zero_off()),
            },
            Pointwise { n, f } => DSHOperator::IMap {
                n: big(*n as u64),
                x,
                y,
                f: compile_fn(
                    f,
                    res,
                    FnFrame {
                        k: 2,
                        args: &[0],
                        idx: Some(1),
                    },
                )?,
            },
            BinOp { n, f } => DSHOperator::BinOp {
                n: big(*n as u64),
                x,
                y,
                f: compile_fn(
                    f,
                    res,
                    FnFrame {
                        k: 3,
                        args: &[1, 0],
                        idx: Some(2),
                    },
                )?,
            },
            Inductor { n, f, z } => DSHOperator::Power {
                n: compile_nat(n, res, &direct)?,
                src: at(x, zero_off()),
                dst: at(y, zero_off()),
                f: compile_fn(
                    f,
                    res,
                    FnFrame {
                        k: 2,
                        args: &[1, 0],
                        idx: None,
                    },
                )?,
                init: z.clone(),
            },
            Apply2Union { f, g, .. } => {
                DSHOperator::seq(self.compile(f, res, x, y)?, self.compile(g, res, x, y)?)
            }
            Compose(f, g) => match (&**f, &**g) {
                (Embed { b: bo, .. }, Pick { b: bi, .. }) => DSHOperator::Assign {
                    src: at(x, compile_nat(bi, res, &direct)?),
                    dst: at(y, compile_nat(bo, res, &direct)?),
                },
                _ => {
                    let (_, og) = msh_dims(g)?;
                    let inner = res.clone().fake(1);
                    let cg = self.compile(g, &inner, x.incr(1), PExpr(0))?;
                    let cf = self.compile(f, &inner, PExpr(0), y.incr(1))?;
                    DSHOperator::Alloc {
                        size: big(og as u64),
                        body: Box::new(DSHOperator::seq(cg, cf)),
                    }
                }
            },
            IUnion { fam } => {
                self.binders.push(fam.n);
                let body = self.compile(&fam.body, &res.clone().lambda(1), x.incr(1), y.incr(1));
                self.binders.pop();
                DSHOperator::Loop {
                    n: big(fam.n as u64),
                    body: Box::new(body?),
                }
            }
            IReduction { dot, z, fam } => {
                let (_, o) = msh_dims(e)?;
                self.check_reduction(fam, o)?;
                self.binders.push(fam.n);
                let body = self.compile(
                    &fam.body,
                    &res.clone().fake(1).lambda(1),
                    x.incr(2),
                    PExpr(1),
                );
                self.binders.pop();
                let dot = compile_fn(
                    dot,
                    &res.clone().fake(2),
                    FnFrame {
                        k: 2,
                        args: &[1, 0],
                        idx: None,
                    },
                )?;
                let y2 = y.incr(2);
                let merge = DSHOperator::MemMap2 {
                    n: big(o as u64),
                    x0: y2,
                    x1: PExpr(1),
                    y: y2,
                    f: dot,
                };
                let lp = DSHOperator::Loop {
                    n: big(fam.n as u64),
                    body: Box::new(DSHOperator::seq(body?, merge)),
                };
                DSHOperator::seq(
                    DSHOperator::MemInit {
                        y,
                        value: z.clone(),
                    },
                    DSHOperator::Alloc {
                        size: big(o as u64),
                        body: Box::new(lp),
                    },
                )
            }
        })
    }

    /// The reduction template initializes and merges whole blocks, so every
    /// member must write every output cell.
    fn check_reduction(&self, fam: &MFamily, o: usize) -> Result<(), LowerError> {
        if fam.n == 0 {
            return Err(LowerError::Compile("empty reduction family".into()));
        }
        let full: BTreeSet<usize> = (0..o).collect();
        for env in self.sample_envs() {
            for j in 0..fam.n {
                let c = msh_contract(&fam.body, &env.push_nat(j as u64))?;
                if c.out_index_set != full {
                    return Err(LowerError::Compile(format!(
                        "reduction member {j} writes {:?}, not all of [0, {o})",
                        c.out_index_set
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Compile a closed MSHCOL operator whose free variables are the globals
/// `g0, g1, ...` (vectors of the given lengths). The result runs in a
/// context holding the globals from index 0, then X, then Y.
pub fn mshcol_to_dhcol(e: &MSHExpr, globals: &[usize]) -> Result<Compiled, LowerError> {
    let (i, o) = msh_dims(e)?;
    let k = globals.len();
    let mut l = Lowerer {
        binders: Vec::new(),
        globals: globals.to_vec(),
    };
    let op = l.compile(e, &VarResolver::Id, PExpr(k), PExpr(k + 1))?;
    let globals = globals
        .iter()
        .enumerate()
        .map(|(j, &n)| (format!("g{j}"), DSHType::Ptr(n)))
        .collect();
    Ok(Compiled { globals, i, o, op })
}

impl Compiled {
    pub fn global_lens(&self) -> Vec<usize> {
        self.globals
            .iter()
            .map(|(_, t)| match t {
                DSHType::Ptr(n) => *n,
                _ => 1,
            })
            .collect()
    }

    pub fn top_level(&self, globals: Vec<Vec<CarrierValue>>, x: MemBlock, y: MemBlock) -> TopLevel {
        TopLevel {
            globals,
            x,
            x_size: self.i,
            y,
            y_size: self.o,
            nat: crate::carrier::NatKind::BigNat,
        }
    }
}

fn random_block(
    rng: &mut sample::SampleRng,
    n: usize,
    keep: impl Fn(usize) -> bool,
    p_extra: f64,
) -> MemBlock {
    let mut b = MemBlock::new();
    for k in 0..n {
        if keep(k) || rng.gen_bool(p_extra) {
            b.insert(k, sample::random_rational(rng));
        }
    }
    b
}

/// Memory stability and write safety of one run: the set of blocks is
/// unchanged and only the block `y_p` resolves to may differ.
pub fn check_dsh_pure(
    dop: &DSHOperator,
    y_p: PExpr,
    ctx: &Context,
    m: &Memory,
) -> Result<(), String> {
    let after = match eval_dshoperator(ctx, dop, m, estimate_fuel(dop)) {
        None => return Err("fuel exhausted".into()),
        Some(Err(e)) => return Err(format!("evaluation failed: {e}")),
        Some(Ok(a)) => a,
    };
    let (ya, _) = crate::dhcol::eval_pexpr(y_p, ctx, false).map_err(|e| e.to_string())?;
    let before_keys: Vec<usize> = m.addresses().collect();
    let after_keys: Vec<usize> = after.addresses().collect();
    if before_keys != after_keys {
        return Err(format!(
            "mem_stable: blocks {before_keys:?} became {after_keys:?}"
        ));
    }
    for a in before_keys {
        if a != ya && m.lookup(a) != after.lookup(a) {
            return Err(format!("mem_write_safe: block {a} changed"));
        }
    }
    Ok(())
}

/// Per-offset memory delta: where MSHCOL produced a value the DHCOL output
/// block holds it, elsewhere the block is unchanged.
pub fn mem_op_delta(before: &MemBlock, delta: &MemBlock, after: &MemBlock) -> Result<(), String> {
    let keys: BTreeSet<usize> = before
        .keys()
        .chain(delta.keys())
        .chain(after.keys())
        .collect();
    for k in keys {
        let want = delta.lookup(k).or(before.lookup(k));
        if after.lookup(k) != want {
            return Err(format!(
                "offset {k}: expected {want:?}, found {:?}",
                after.lookup(k)
            ));
        }
    }
    Ok(())
}

/// Random X covering the in set (every fifth sample misses one cell),
/// random Y; the two semantics must agree, errors included.
pub fn check_msh_dsh_compat(
    mop: &MSHExpr,
    c: &Compiled,
    globals: &[Vec<CarrierValue>],
    samples: usize,
    seed: u64,
) -> CheckReport {
    let mut rep = CheckReport::new("mshcol vs dhcol");
    let env = Env::with_globals(globals);
    let ins = match msh_contract(mop, &env) {
        Ok(c) => c.in_index_set,
        Err(e) => {
            rep.violation(format!("contract: {e}"));
            return rep;
        }
    };
    let mut rng = sample::rng(seed);
    let fuel = estimate_fuel(&c.op);
    for s in 0..samples {
        rep.samples += 1;
        let drop = if s % 5 == 4 && !ins.is_empty() {
            ins.iter().nth(rng.gen_range(0..ins.len())).copied()
        } else {
            None
        };
        let x = random_block(&mut rng, c.i, |k| ins.contains(&k) && Some(k) != drop, 0.3);
        let y = random_block(&mut rng, c.o, |_| false, 0.5);
        let tl = c.top_level(globals.to_vec(), x.clone(), y.clone());
        let (ctx, m) = tl.build();
        let md = eval_mshcol(mop, &x, &env);
        let ma = eval_dshoperator(&ctx, &c.op, &m, fuel);
        match (md, ma) {
            (_, None) => rep.violation("fuel exhausted"),
            (Err(_), Some(Err(_))) => {}
            (Ok(d), Some(Ok(after))) => {
                let after_y = after.lookup(tl.y_addr()).cloned().unwrap_or_default();
                if let Err(msg) = mem_op_delta(&y, &d, &after_y) {
                    rep.violation(msg);
                }
            }
            (Ok(_), Some(Err(e))) => rep.violation(format!("only DHCOL failed: {e}")),
            (Err(e), Some(Ok(_))) => rep.violation(format!("only MSHCOL failed: {e}")),
        }
        if !rep.passed() {
            break;
        }
    }
    rep
}

/// Purity over random covering inputs.
pub fn check_dsh_pure_sampled(
    c: &Compiled,
    globals: &[Vec<CarrierValue>],
    ins: &BTreeSet<usize>,
    samples: usize,
    seed: u64,
) -> CheckReport {
    let mut rep = CheckReport::new("dhcol purity");
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        rep.samples += 1;
        let x = random_block(&mut rng, c.i, |k| ins.contains(&k), 0.3);
        let y = random_block(&mut rng, c.o, |_| false, 0.5);
        let tl = c.top_level(globals.to_vec(), x, y);
        let (ctx, m) = tl.build();
        if let Err(msg) = check_dsh_pure(&c.op, tl.y_p(), &ctx, &m) {
            rep.violation(msg);
            break;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolver_algebra() {
        for r in 0..=64 {
            assert_eq!(VarResolver::Id.resolve(r), r);
            assert_eq!(VarResolver::Id.fake(1).resolve(r), r + 1);
            assert_eq!(VarResolver::Id.lambda(3).resolve(r), r);
        }
        // λi. i + a where a sits at MSHCOL index 1 under one fake binder.
        let res = VarResolver::Id.fake(1).lambda(1);
        assert_eq!(res.resolve(0), 0);
        assert_eq!(res.resolve(1), 2);
    }

    #[test]
    fn casts_are_erased_and_lifts_rejected() {
        let f = ScalarFn::binary(crate::carrier::CtOp::Plus);
        let e = SHExpr::SafeCast(Box::new(SHExpr::BinOp { n: 2, f: f.clone() }));
        assert_eq!(shcol_to_mshcol(&e).unwrap(), MSHExpr::BinOp { n: 2, f });
        let e = SHExpr::lift(crate::hcol::HExpr::ScalarProd { n: 2 });
        assert_eq!(
            shcol_to_mshcol(&e),
            Err(LowerError::Unsupported("LiftHOperator"))
        );
    }
}
