//! DHCOL: the imperative operator language over explicit memory. The same
//! AST serves RHCOL (rationals, unbounded naturals) and FHCOL (doubles,
//! 64-bit naturals); the carrier is carried by the values themselves.

use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{
    ct_arith, nat_from_usize, rational_to_f64, CarrierError, CarrierKind, CarrierValue, CtOp,
    NatKind, NatValue,
};
use crate::memory::{MemBlock, Memory};
use crate::report::CheckReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DshError {
    #[error("{0}")]
    Lookup(String),
    #[error("{0}")]
    Type(String),
    #[error("Division by 0")]
    DivByZero,
    #[error("Mod by 0")]
    ModByZero,
    #[error("{0}")]
    OutOfBounds(String),
    #[error("{0}")]
    SparseRead(String),
    #[error(transparent)]
    Carrier(#[from] CarrierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NOp {
    Div,
    Mod,
    Plus,
    Minus,
    Mult,
    Min,
    Max,
}

impl NOp {
    pub const ALL: [NOp; 7] = [
        NOp::Div,
        NOp::Mod,
        NOp::Plus,
        NOp::Minus,
        NOp::Mult,
        NOp::Min,
        NOp::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NOp::Div => "NDiv",
            NOp::Mod => "NMod",
            NOp::Plus => "NPlus",
            NOp::Minus => "NMinus",
            NOp::Mult => "NMult",
            NOp::Min => "NMin",
            NOp::Max => "NMax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NExpr {
    Var(usize),
    Const(NatValue),
    Bin(NOp, Box<NExpr>, Box<NExpr>),
}

impl NExpr {
    pub fn bin(op: NOp, a: NExpr, b: NExpr) -> NExpr {
        NExpr::Bin(op, Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PExpr(pub usize);

impl PExpr {
    /// The same pointer seen under `d` more binders.
    pub fn incr(self, d: usize) -> PExpr {
        PExpr(self.0 + d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MExpr {
    PtrDeref(PExpr),
    Const(MemBlock, NatValue),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AExpr {
    Var(usize),
    Const(CarrierValue),
    Nth(MExpr, NExpr),
    Abs(Box<AExpr>),
    /// Binary arithmetic; the operator is never `Abs`.
    Bin(CtOp, Box<AExpr>, Box<AExpr>),
}

impl AExpr {
    pub fn bin(op: CtOp, a: AExpr, b: AExpr) -> AExpr {
        AExpr::Bin(op, Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemRef {
    pub ptr: PExpr,
    pub off: NExpr,
}

impl MemRef {
    pub fn new(ptr: PExpr, off: NExpr) -> Self {
        MemRef { ptr, off }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DSHOperator {
    Nop,
    Assign {
        src: MemRef,
        dst: MemRef,
    },
    IMap {
        n: NatValue,
        x: PExpr,
        y: PExpr,
        f: AExpr,
    },
    BinOp {
        n: NatValue,
        x: PExpr,
        y: PExpr,
        f: AExpr,
    },
    MemMap2 {
        n: NatValue,
        x0: PExpr,
        x1: PExpr,
        y: PExpr,
        f: AExpr,
    },
    Power {
        n: NExpr,
        src: MemRef,
        dst: MemRef,
        f: AExpr,
        init: CarrierValue,
    },
    Loop {
        n: NatValue,
        body: Box<DSHOperator>,
    },
    Alloc {
        size: NatValue,
        body: Box<DSHOperator>,
    },
    MemInit {
        y: PExpr,
        value: CarrierValue,
    },
    Seq(Box<DSHOperator>, Box<DSHOperator>),
}

impl DSHOperator {
    pub fn seq(a: DSHOperator, b: DSHOperator) -> DSHOperator {
        DSHOperator::Seq(Box::new(a), Box::new(b))
    }

    pub fn name(&self) -> &'static str {
        use DSHOperator::*;
        match self {
            Nop => "DSHNop",
            Assign { .. } => "DSHAssign",
            IMap { .. } => "DSHIMap",
            BinOp { .. } => "DSHBinOp",
            MemMap2 { .. } => "DSHMemMap2",
            Power { .. } => "DSHPower",
            Loop { .. } => "DSHLoop",
            Alloc { .. } => "DSHAlloc",
            MemInit { .. } => "DSHMemInit",
            Seq(..) => "DSHSeq",
        }
    }

    /// Number of operator nodes.
    pub fn size(&self) -> usize {
        use DSHOperator::*;
        match self {
            Loop { body, .. } | Alloc { body, .. } => 1 + body.size(),
            Seq(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DSHVal {
    Nat(NatValue),
    CType(CarrierValue),
    Ptr(usize, NatValue),
}

/// Evaluation context. Index 0 is the most recently pushed entry; the flag
/// marks entries that are protected from writes and from scalar reads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Context(Vec<(DSHVal, bool)>);

impl Context {
    pub fn new() -> Self {
        Context(Vec::new())
    }

    /// Context listed from index 0 outwards.
    pub fn from_list(entries: Vec<(DSHVal, bool)>) -> Self {
        Context(entries.into_iter().rev().collect())
    }

    pub fn push(&mut self, v: DSHVal, protected: bool) {
        self.0.push((v, protected));
    }

    pub fn pop(&mut self) {
        self.0.pop();
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&(DSHVal, bool)> {
        self.0.len().checked_sub(k + 1).map(|i| &self.0[i])
    }

    /// Entries from index 0 outwards.
    pub fn entries(&self) -> impl Iterator<Item = &(DSHVal, bool)> {
        self.0.iter().rev()
    }

    fn truncate(&mut self, n: usize) {
        self.0.truncate(n);
    }
}

fn nat_bin(op: NOp, a: &NatValue, b: &NatValue) -> Result<NatValue, DshError> {
    use NatValue::*;
    Ok(match (a, b) {
        (BigNat(x), BigNat(y)) => BigNat(match op {
            NOp::Div if y.is_zero() => return Err(DshError::DivByZero),
            NOp::Mod if y.is_zero() => return Err(DshError::ModByZero),
            NOp::Div => x / y,
            NOp::Mod => x % y,
            NOp::Plus => x + y,
            NOp::Minus if y > x => BigUint::zero(),
            NOp::Minus => x - y,
            NOp::Mult => x * y,
            NOp::Min => x.min(y).clone(),
            NOp::Max => x.max(y).clone(),
        }),
        (U64(x), U64(y)) => U64(match op {
            NOp::Div => x.checked_div(*y).ok_or(DshError::DivByZero)?,
            NOp::Mod => x.checked_rem(*y).ok_or(DshError::ModByZero)?,
            NOp::Plus => x.wrapping_add(*y),
            NOp::Minus => x.wrapping_sub(*y),
            NOp::Mult => x.wrapping_mul(*y),
            NOp::Min => *x.min(y),
            NOp::Max => *x.max(y),
        }),
        _ => return Err(DshError::Type("mixed natural kinds".into())),
    })
}

fn nat_le(a: &NatValue, b: &NatValue) -> bool {
    a.to_nat() <= b.to_nat()
}

fn nat_lt(a: &NatValue, b: &NatValue) -> bool {
    a.to_nat() < b.to_nat()
}

fn index_of(n: &NatValue, what: &str) -> Result<usize, DshError> {
    n.to_usize()
        .ok_or_else(|| DshError::OutOfBounds(format!("{what} does not fit in memory")))
}

fn lookup<'a>(ctx: &'a Context, k: usize, what: &str) -> Result<&'a (DSHVal, bool), DshError> {
    ctx.get(k)
        .ok_or_else(|| DshError::Lookup(format!("error looking up {what} {k}")))
}

pub fn eval_nexpr(e: &NExpr, ctx: &Context) -> Result<NatValue, DshError> {
    match e {
        NExpr::Var(k) => match lookup(ctx, *k, "NVar")? {
            (_, true) => Err(DshError::Lookup(format!("NVar {k} is protected"))),
            (DSHVal::Nat(n), false) => Ok(n.clone()),
            _ => Err(DshError::Type("invalid NVar type".into())),
        },
        NExpr::Const(n) => Ok(n.clone()),
        NExpr::Bin(op, a, b) => nat_bin(*op, &eval_nexpr(a, ctx)?, &eval_nexpr(b, ctx)?),
    }
}

/// Resolve a pointer variable; `write` rejects protected entries.
pub fn eval_pexpr(p: PExpr, ctx: &Context, write: bool) -> Result<(usize, NatValue), DshError> {
    match lookup(ctx, p.0, "PVar")? {
        (_, true) if write => Err(DshError::Lookup(format!("PVar {} is protected", p.0))),
        (DSHVal::Ptr(a, size), _) => Ok((*a, size.clone())),
        _ => Err(DshError::Type("invalid PVar type".into())),
    }
}

fn deref(m: &Memory, a: usize) -> Result<&MemBlock, DshError> {
    m.lookup(a)
        .ok_or_else(|| DshError::Lookup("MPtrDeref lookup failed".into()))
}

pub fn eval_mexpr<'a>(
    e: &'a MExpr,
    ctx: &Context,
    m: &'a Memory,
) -> Result<(&'a MemBlock, NatValue), DshError> {
    match e {
        MExpr::PtrDeref(p) => {
            let (a, size) = eval_pexpr(*p, ctx, false)?;
            Ok((deref(m, a)?, size))
        }
        MExpr::Const(b, size) => Ok((b, size.clone())),
    }
}

pub fn eval_aexpr(e: &AExpr, ctx: &Context, m: &Memory) -> Result<CarrierValue, DshError> {
    match e {
        AExpr::Var(k) => match lookup(ctx, *k, "AVar")? {
            (_, true) => Err(DshError::Lookup(format!("AVar {k} is protected"))),
            (DSHVal::CType(v), false) => Ok(v.clone()),
            _ => Err(DshError::Type("invalid AVar type".into())),
        },
        AExpr::Const(c) => Ok(c.clone()),
        AExpr::Nth(me, ne) => {
            let (b, size) = eval_mexpr(me, ctx, m)?;
            let i = eval_nexpr(ne, ctx)?;
            if !nat_lt(&i, &size) {
                return Err(DshError::OutOfBounds("ANth index out of bounds".into()));
            }
            let i = index_of(&i, "ANth index")?;
            b.lookup(i)
                .cloned()
                .ok_or_else(|| DshError::SparseRead("ANth not in memory".into()))
        }
        AExpr::Abs(a) => Ok(ct_arith(CtOp::Abs, &eval_aexpr(a, ctx, m)?, None)?),
        AExpr::Bin(op, a, b) => Ok(ct_arith(
            *op,
            &eval_aexpr(a, ctx, m)?,
            Some(&eval_aexpr(b, ctx, m)?),
        )?),
    }
}

/// Evaluate `f` with `vals` pushed (last one ends up at index 0).
fn eval_under(
    f: &AExpr,
    ctx: &mut Context,
    m: &Memory,
    vals: Vec<DSHVal>,
) -> Result<CarrierValue, DshError> {
    let base = ctx.len();
    for v in vals {
        ctx.push(v, false);
    }
    let r = eval_aexpr(f, ctx, m);
    ctx.truncate(base);
    r
}

fn cell(b: &MemBlock, i: usize, what: &str) -> Result<CarrierValue, DshError> {
    b.lookup(i)
        .cloned()
        .ok_or_else(|| DshError::SparseRead(format!("{what}: cell {i} not in memory")))
}

fn write_block(m: &mut Memory, a: usize) -> Result<&mut MemBlock, DshError> {
    m.lookup_mut(a)
        .ok_or_else(|| DshError::Lookup("MPtrDeref lookup failed".into()))
}

/// Big-step evaluation. `None` means the fuel ran out; the inner result
/// carries semantic errors.
pub fn eval_dshoperator(
    ctx: &Context,
    op: &DSHOperator,
    m: &Memory,
    fuel: u64,
) -> Option<Result<Memory, DshError>> {
    let mut m = m.clone();
    let mut ctx = ctx.clone();
    let r = eval_in_place(&mut ctx, op, &mut m, fuel)?;
    Some(r.map(|()| m))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Some(Err(e.into())),
        }
    };
}

pub fn eval_in_place(
    ctx: &mut Context,
    op: &DSHOperator,
    m: &mut Memory,
    fuel: u64,
) -> Option<Result<(), DshError>> {
    eval_visiting(ctx, op, m, fuel, &mut |_| {})
}

/// Like [`eval_dshoperator`], also returning the names of the operators
/// entered, in evaluation order.
pub fn eval_dshoperator_traced(
    ctx: &Context,
    op: &DSHOperator,
    m: &Memory,
    fuel: u64,
) -> (Option<Result<Memory, DshError>>, Vec<&'static str>) {
    let mut m = m.clone();
    let mut ctx = ctx.clone();
    let mut path = Vec::new();
    let r = eval_visiting(&mut ctx, op, &mut m, fuel, &mut |o| path.push(o.name()));
    (r.map(|r| r.map(|()| m)), path)
}

fn eval_visiting<F: FnMut(&DSHOperator)>(
    ctx: &mut Context,
    op: &DSHOperator,
    m: &mut Memory,
    fuel: u64,
    visit: &mut F,
) -> Option<Result<(), DshError>> {
    use DSHOperator::*;
    let f = fuel.checked_sub(1)?;
    visit(op);
    match op {
        Nop => {}
        Assign { src, dst } => {
            let (xa, xsize) = tri!(eval_pexpr(src.ptr, ctx, false));
            let (ya, ysize) = tri!(eval_pexpr(dst.ptr, ctx, true));
            let so = tri!(eval_nexpr(&src.off, ctx));
            let d = tri!(eval_nexpr(&dst.off, ctx));
            if !nat_lt(&so, &xsize) {
                return Some(Err(DshError::OutOfBounds(
                    "DSHAssign source offset out of bounds".into(),
                )));
            }
            if !nat_lt(&d, &ysize) {
                return Some(Err(DshError::OutOfBounds(
                    "DSHAssign destination offset out of bounds".into(),
                )));
            }
            let v = tri!(cell(
                tri!(deref(m, xa)),
                tri!(index_of(&so, "offset")),
                "DSHAssign"
            ));
            let d = tri!(index_of(&d, "offset"));
            tri!(write_block(m, ya)).insert(d, v);
        }
        IMap { n, x, y, f: fe } => {
            let (xa, xsize) = tri!(eval_pexpr(*x, ctx, false));
            let (ya, _) = tri!(eval_pexpr(*y, ctx, true));
            if !nat_le(n, &xsize) {
                return Some(Err(DshError::OutOfBounds(
                    "DSHIMap n is larger than the input size".into(),
                )));
            }
            let xb = tri!(deref(m, xa));
            tri!(deref(m, ya));
            let mut out = Vec::new();
            for i in (0..tri!(index_of(n, "n"))).rev() {
                let v = tri!(cell(xb, i, "DSHIMap"));
                let r = tri!(eval_under(
                    fe,
                    ctx,
                    m,
                    vec![
                        DSHVal::Nat(NatValue::of_kind(n.kind(), i as u64)),
                        DSHVal::CType(v)
                    ]
                ));
                out.push((i, r));
            }
            let yb = tri!(write_block(m, ya));
            for (i, r) in out {
                yb.insert(i, r);
            }
        }
        BinOp { n, x, y, f: fe } => {
            let (xa, _) = tri!(eval_pexpr(*x, ctx, false));
            let (ya, ysize) = tri!(eval_pexpr(*y, ctx, true));
            if !nat_le(n, &ysize) {
                return Some(Err(DshError::OutOfBounds(
                    "DSHBinOp n is larger than the output size".into(),
                )));
            }
            let xb = tri!(deref(m, xa));
            tri!(deref(m, ya));
            let k = tri!(index_of(n, "n"));
            let mut out = Vec::new();
            for i in (0..k).rev() {
                let a = tri!(cell(xb, i, "DSHBinOp"));
                let b = tri!(cell(xb, i + k, "DSHBinOp"));
                let iv = DSHVal::Nat(NatValue::of_kind(n.kind(), i as u64));
                out.push((
                    i,
                    tri!(eval_under(
                        fe,
                        ctx,
                        m,
                        vec![iv, DSHVal::CType(a), DSHVal::CType(b)]
                    )),
                ));
            }
            let yb = tri!(write_block(m, ya));
            for (i, r) in out {
                yb.insert(i, r);
            }
        }
        MemMap2 {
            n,
            x0,
            x1,
            y,
            f: fe,
        } => {
            let (a0, _) = tri!(eval_pexpr(*x0, ctx, false));
            let (a1, _) = tri!(eval_pexpr(*x1, ctx, false));
            let (ya, ysize) = tri!(eval_pexpr(*y, ctx, true));
            if !nat_le(n, &ysize) {
                return Some(Err(DshError::OutOfBounds(
                    "DSHMemMap2 n is larger than the output size".into(),
                )));
            }
            let (b0, b1) = (tri!(deref(m, a0)), tri!(deref(m, a1)));
            tri!(deref(m, ya));
            let mut out = Vec::new();
            for i in (0..tri!(index_of(n, "n"))).rev() {
                let a = tri!(cell(b0, i, "DSHMemMap2"));
                let b = tri!(cell(b1, i, "DSHMemMap2"));
                out.push((
                    i,
                    tri!(eval_under(
                        fe,
                        ctx,
                        m,
                        vec![DSHVal::CType(a), DSHVal::CType(b)]
                    )),
                ));
            }
            let yb = tri!(write_block(m, ya));
            for (i, r) in out {
                yb.insert(i, r);
            }
        }
        Power {
            n,
            src,
            dst,
            f: fe,
            init,
        } => {
            let k = tri!(eval_nexpr(n, ctx));
            let (xa, _) = tri!(eval_pexpr(src.ptr, ctx, false));
            let (ya, _) = tri!(eval_pexpr(dst.ptr, ctx, true));
            let so = tri!(index_of(&tri!(eval_nexpr(&src.off, ctx)), "offset"));
            let d = tri!(index_of(&tri!(eval_nexpr(&dst.off, ctx)), "offset"));
            tri!(deref(m, xa));
            tri!(write_block(m, ya)).insert(d, init.clone());
            let mut left = k.to_nat();
            while !left.is_zero() {
                let xv = tri!(cell(tri!(deref(m, xa)), so, "DSHPower"));
                let acc = tri!(cell(tri!(deref(m, ya)), d, "DSHPower"));
                let r = tri!(eval_under(
                    fe,
                    ctx,
                    m,
                    vec![DSHVal::CType(acc), DSHVal::CType(xv)]
                ));
                tri!(write_block(m, ya)).insert(d, r);
                left -= 1u32;
            }
        }
        Loop { n, body } => {
            let n_big = n.to_nat();
            if BigUint::from(fuel) <= n_big {
                return None;
            }
            let n_u = n_big.to_u64().expect("fuel exceeds n");
            for i in 0..n_u {
                ctx.push(DSHVal::Nat(NatValue::of_kind(n.kind(), i)), false);
                let r = eval_visiting(ctx, body, m, fuel - n_u + i, visit);
                ctx.pop();
                match r {
                    Some(Ok(())) => {}
                    other => return other,
                }
            }
        }
        Alloc { size, body } => {
            let t = m.next_key();
            m.add(t, MemBlock::new());
            ctx.push(DSHVal::Ptr(t, size.clone()), false);
            let r = eval_visiting(ctx, body, m, f, visit);
            ctx.pop();
            m.remove(t);
            return r;
        }
        MemInit { y, value } => {
            let (ya, ysize) = tri!(eval_pexpr(*y, ctx, true));
            let k = tri!(index_of(&ysize, "size"));
            let yb = tri!(write_block(m, ya));
            for i in 0..k {
                yb.insert(i, value.clone());
            }
        }
        Seq(a, b) => {
            match eval_visiting(ctx, a, m, f, visit)? {
                Ok(()) => {}
                e => return Some(e),
            }
            return eval_visiting(ctx, b, m, f, visit);
        }
    }
    Some(Ok(()))
}

/// Fuel that is always enough to evaluate `op` to completion or error.
pub fn estimate_fuel(op: &DSHOperator) -> u64 {
    use DSHOperator::*;
    match op {
        Seq(a, b) => 1u64.saturating_add(estimate_fuel(a).max(estimate_fuel(b))),
        Alloc { body, .. } => 1u64.saturating_add(estimate_fuel(body)),
        Loop { n, body } => n
            .to_nat()
            .to_u64()
            .unwrap_or(u64::MAX)
            .saturating_add(estimate_fuel(body)),
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslateError {
    #[error("constant {0} has no counterpart in the target carrier")]
    UnknownConstant(String),
    #[error("natural {0} does not fit in 64 bits")]
    NatOverflow(BigUint),
}

/// Constant and type translation between carriers. Only zero and one are
/// translatable constants; naturals must fit the target width.
#[derive(Debug, Clone, Copy)]
pub struct Translator {
    pub carrier: CarrierKind,
    pub nat: NatKind,
}

impl Translator {
    pub const FHCOL: Translator = Translator {
        carrier: CarrierKind::Binary64,
        nat: NatKind::U64,
    };
    pub const SYMBOLIC: Translator = Translator {
        carrier: CarrierKind::Symbolic,
        nat: NatKind::U64,
    };

    pub fn carrier_const(&self, c: &CarrierValue) -> Result<CarrierValue, TranslateError> {
        if c.is_zero() {
            Ok(CarrierValue::zero(self.carrier))
        } else if c.is_one() {
            Ok(CarrierValue::one(self.carrier))
        } else {
            Err(TranslateError::UnknownConstant(c.to_string()))
        }
    }

    pub fn nat(&self, n: &NatValue) -> Result<NatValue, TranslateError> {
        let big = n.to_nat();
        nat_from_usize(&big, self.nat).map_err(|_| TranslateError::NatOverflow(big))
    }

    pub fn nexpr(&self, e: &NExpr) -> Result<NExpr, TranslateError> {
        Ok(match e {
            NExpr::Var(k) => NExpr::Var(*k),
            NExpr::Const(n) => NExpr::Const(self.nat(n)?),
            NExpr::Bin(op, a, b) => NExpr::bin(*op, self.nexpr(a)?, self.nexpr(b)?),
        })
    }

    pub fn mexpr(&self, e: &MExpr) -> Result<MExpr, TranslateError> {
        Ok(match e {
            MExpr::PtrDeref(p) => MExpr::PtrDeref(*p),
            MExpr::Const(b, size) => {
                let b = b
                    .iter()
                    .map(|(k, v)| Ok((k, self.carrier_const(v)?)))
                    .collect::<Result<MemBlock, _>>()?;
                MExpr::Const(b, self.nat(size)?)
            }
        })
    }

    pub fn aexpr(&self, e: &AExpr) -> Result<AExpr, TranslateError> {
        Ok(match e {
            AExpr::Var(k) => AExpr::Var(*k),
            AExpr::Const(c) => AExpr::Const(self.carrier_const(c)?),
            AExpr::Nth(m, n) => AExpr::Nth(self.mexpr(m)?, self.nexpr(n)?),
            AExpr::Abs(a) => AExpr::Abs(Box::new(self.aexpr(a)?)),
            AExpr::Bin(op, a, b) => AExpr::bin(*op, self.aexpr(a)?, self.aexpr(b)?),
        })
    }

    fn mref(&self, r: &MemRef) -> Result<MemRef, TranslateError> {
        Ok(MemRef {
            ptr: r.ptr,
            off: self.nexpr(&r.off)?,
        })
    }

    pub fn op(&self, op: &DSHOperator) -> Result<DSHOperator, TranslateError> {
        use DSHOperator::*;
        Ok(match op {
            Nop => Nop,
            Assign { src, dst } => Assign {
                src: self.mref(src)?,
                dst: self.mref(dst)?,
            },
            IMap { n, x, y, f } => IMap {
                n: self.nat(n)?,
                x: *x,
                y: *y,
                f: self.aexpr(f)?,
            },
            BinOp { n, x, y, f } => BinOp {
                n: self.nat(n)?,
                x: *x,
                y: *y,
                f: self.aexpr(f)?,
            },
            MemMap2 { n, x0, x1, y, f } => MemMap2 {
                n: self.nat(n)?,
                x0: *x0,
                x1: *x1,
                y: *y,
                f: self.aexpr(f)?,
            },
            Power {
                n,
                src,
                dst,
                f,
                init,
            } => Power {
                n: self.nexpr(n)?,
                src: self.mref(src)?,
                dst: self.mref(dst)?,
                f: self.aexpr(f)?,
                init: self.carrier_const(init)?,
            },
            Loop { n, body } => Loop {
                n: self.nat(n)?,
                body: Box::new(self.op(body)?),
            },
            Alloc { size, body } => Alloc {
                size: self.nat(size)?,
                body: Box::new(self.op(body)?),
            },
            MemInit { y, value } => MemInit {
                y: *y,
                value: self.carrier_const(value)?,
            },
            Seq(a, b) => DSHOperator::seq(self.op(a)?, self.op(b)?),
        })
    }
}

pub fn translate_rhcol_to_fhcol(op: &DSHOperator) -> Result<DSHOperator, TranslateError> {
    Translator::FHCOL.op(op)
}

/// Runtime data conversion: rationals to the nearest double, naturals to
/// 64 bits. Used to pair RHCOL inputs with FHCOL inputs.
pub fn value_to_f64(v: &CarrierValue) -> CarrierValue {
    match v {
        CarrierValue::Rational(r) => CarrierValue::Binary64(rational_to_f64(r)),
        other => other.clone(),
    }
}

pub fn memory_to_f64(m: &Memory) -> Memory {
    Memory(
        m.0.iter()
            .map(|(a, b)| (*a, b.iter().map(|(k, v)| (k, value_to_f64(v))).collect()))
            .collect(),
    )
}

pub fn context_to_fhcol(ctx: &Context) -> Result<Context, TranslateError> {
    let t = Translator::FHCOL;
    let entries = ctx
        .entries()
        .map(|(v, p)| {
            Ok((
                match v {
                    DSHVal::Nat(n) => DSHVal::Nat(t.nat(n)?),
                    DSHVal::CType(c) => DSHVal::CType(value_to_f64(c)),
                    DSHVal::Ptr(a, s) => DSHVal::Ptr(*a, t.nat(s)?),
                },
                *p,
            ))
        })
        .collect::<Result<Vec<_>, TranslateError>>()?;
    Ok(Context::from_list(entries))
}

/// Result of comparing an RHCOL run with the FHCOL run of its translation.
#[derive(Debug, Clone, Serialize)]
pub struct RfReport {
    pub report: CheckReport,
    pub max_deviation: f64,
}

/// Run the rational program and its floating translation on paired inputs
/// and bound the per-cell deviation of the block at `out_addr`.
pub fn check_rf_equiv(
    r_op: &DSHOperator,
    f_op: &DSHOperator,
    inputs: &[(Context, Memory)],
    out_addr: usize,
    tolerance: &BigRational,
) -> RfReport {
    let mut rep = CheckReport::new("rhcol vs fhcol");
    let mut max_dev = BigRational::zero();
    let (rf, ff) = (estimate_fuel(r_op), estimate_fuel(f_op));
    for (ctx, m) in inputs {
        rep.samples += 1;
        let fctx = match context_to_fhcol(ctx) {
            Ok(c) => c,
            Err(e) => {
                rep.violation(format!("context translation: {e}"));
                continue;
            }
        };
        let r = eval_dshoperator(ctx, r_op, m, rf);
        let f = eval_dshoperator(&fctx, f_op, &memory_to_f64(m), ff);
        match (r, f) {
            (Some(Ok(rm)), Some(Ok(fm))) => {
                let (rb, fb) = (rm.lookup(out_addr), fm.lookup(out_addr));
                let (Some(rb), Some(fb)) = (rb, fb) else {
                    rep.violation("output block missing");
                    continue;
                };
                if rb.keys().ne(fb.keys()) {
                    rep.violation(format!(
                        "output cells differ: {:?} vs {:?}",
                        rb.keys().collect::<Vec<_>>(),
                        fb.keys().collect::<Vec<_>>()
                    ));
                    continue;
                }
                for ((k, rv), (_, fv)) in rb.iter().zip(fb.iter()) {
                    let (Some(rv), Some(fv)) = (rv.as_rational(), fv.as_f64()) else {
                        rep.violation(format!("cell {k} has the wrong carrier"));
                        continue;
                    };
                    let Some(fr) = BigRational::from_float(fv) else {
                        rep.violation(format!("cell {k} is not finite: {fv}"));
                        continue;
                    };
                    let dev = (fr - rv).abs();
                    if dev > *tolerance {
                        rep.violation(format!("cell {k} deviates by {:e}", rational_to_f64(&dev)));
                    }
                    if dev > max_dev {
                        max_dev = dev;
                    }
                }
            }
            (Some(Err(_)), Some(Err(_))) => {}
            (None, _) | (_, None) => rep.violation("fuel exhausted"),
            (Some(Ok(_)), Some(Err(e))) => rep.violation(format!("only FHCOL failed: {e}")),
            (Some(Err(e)), Some(Ok(_))) => rep.violation(format!("only RHCOL failed: {e}")),
        }
    }
    RfReport {
        report: rep,
        max_deviation: rational_to_f64(&max_dev),
    }
}

impl fmt::Display for NExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NExpr::Var(k) => write!(f, "NVar {k}"),
            NExpr::Const(n) => write!(f, "NConst {n}"),
            NExpr::Bin(op, a, b) => write!(f, "{} ({a}) ({b})", op.name()),
        }
    }
}

impl fmt::Display for PExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PVar {}", self.0)
    }
}

impl fmt::Display for MExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MExpr::PtrDeref(p) => write!(f, "MPtrDeref ({p})"),
            MExpr::Const(b, size) => {
                write!(f, "MConst (block")?;
                for (k, v) in b.iter() {
                    write!(f, " ({k} {v})")?;
                }
                write!(f, ") {size}")
            }
        }
    }
}

pub fn aop_name(op: CtOp) -> &'static str {
    match op {
        CtOp::Plus => "APlus",
        CtOp::Sub => "AMinus",
        CtOp::Mult => "AMult",
        CtOp::Min => "AMin",
        CtOp::Max => "AMax",
        CtOp::Zless => "AZless",
        CtOp::Abs => "AAbs",
    }
}

impl fmt::Display for AExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AExpr::Var(k) => write!(f, "AVar {k}"),
            AExpr::Const(c) => write!(f, "AConst {c}"),
            AExpr::Nth(m, n) => write!(f, "ANth ({m}) ({n})"),
            AExpr::Abs(a) => write!(f, "AAbs ({a})"),
            AExpr::Bin(op, a, b) => write!(f, "{} ({a}) ({b})", aop_name(*op)),
        }
    }
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({}) ({}))", self.ptr, self.off)
    }
}

impl fmt::Display for DSHOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use DSHOperator::*;
        match self {
            Nop => write!(f, "DSHNop"),
            Assign { src, dst } => write!(f, "DSHAssign {src} {dst}"),
            IMap { n, x, y, f: g } => write!(f, "DSHIMap {n} ({x}) ({y}) ({g})"),
            BinOp { n, x, y, f: g } => write!(f, "DSHBinOp {n} ({x}) ({y}) ({g})"),
            MemMap2 { n, x0, x1, y, f: g } => write!(f, "DSHMemMap2 {n} ({x0}) ({x1}) ({y}) ({g})"),
            Power {
                n,
                src,
                dst,
                f: g,
                init,
            } => write!(f, "DSHPower ({n}) {src} {dst} ({g}) {init}"),
            Loop { n, body } => write!(f, "DSHLoop {n} ({body})"),
            Alloc { size, body } => write!(f, "DSHAlloc {size} ({body})"),
            MemInit { y, value } => write!(f, "DSHMemInit ({y}) {value}"),
            Seq(a, b) => write!(f, "DSHSeq ({a}) ({b})"),
        }
    }
}

/// Standard top-level layout: globals at addresses `0..k`, then X and Y.
/// The context lists the globals from index 0, followed by X and Y.
#[derive(Debug, Clone, PartialEq)]
pub struct TopLevel {
    pub globals: Vec<Vec<CarrierValue>>,
    pub x: MemBlock,
    pub x_size: usize,
    pub y: MemBlock,
    pub y_size: usize,
    pub nat: NatKind,
}

impl TopLevel {
    pub fn x_addr(&self) -> usize {
        self.globals.len()
    }

    pub fn y_addr(&self) -> usize {
        self.globals.len() + 1
    }

    pub fn x_p(&self) -> PExpr {
        PExpr(self.globals.len())
    }

    pub fn y_p(&self) -> PExpr {
        PExpr(self.globals.len() + 1)
    }

    /// Context and memory; globals and X are protected from writes.
    pub fn build(&self) -> (Context, Memory) {
        let mut m = Memory::new();
        let mut entries = Vec::new();
        let size = |n: usize| NatValue::of_kind(self.nat, n as u64);
        for (a, g) in self.globals.iter().enumerate() {
            m.add(a, MemBlock::dense(g));
            entries.push((DSHVal::Ptr(a, size(g.len())), true));
        }
        m.add(self.x_addr(), self.x.clone());
        entries.push((DSHVal::Ptr(self.x_addr(), size(self.x_size)), true));
        m.add(self.y_addr(), self.y.clone());
        entries.push((DSHVal::Ptr(self.y_addr(), size(self.y_size)), false));
        (Context::from_list(entries), m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(n: u64) -> NatValue {
        NatValue::big(n)
    }

    fn nc(n: u64) -> NExpr {
        NExpr::Const(big(n))
    }

    #[test]
    fn nat_minus_truncates_or_wraps() {
        let ctx = Context::new();
        let e = NExpr::bin(NOp::Minus, nc(2), nc(5));
        assert_eq!(eval_nexpr(&e, &ctx).unwrap(), big(0));
        let f = Translator::FHCOL.nexpr(&e).unwrap();
        assert_eq!(eval_nexpr(&f, &ctx).unwrap(), NatValue::U64(u64::MAX - 2));
        assert_eq!(
            eval_nexpr(&NExpr::bin(NOp::Div, nc(7), nc(2)), &ctx).unwrap(),
            big(3)
        );
        assert_eq!(
            eval_nexpr(&NExpr::bin(NOp::Div, nc(1), nc(0)), &ctx),
            Err(DshError::DivByZero)
        );
        assert_eq!(
            eval_nexpr(&NExpr::bin(NOp::Mod, nc(1), nc(0)), &ctx)
                .unwrap_err()
                .to_string(),
            "Mod by 0"
        );
    }

    #[test]
    fn anth_rules() {
        let ctx = Context::new();
        let m = Memory::new();
        let blk: MemBlock = [(0, CarrierValue::int(5))].into_iter().collect();
        let e = AExpr::Nth(MExpr::Const(blk.clone(), big(1)), nc(0));
        assert_eq!(eval_aexpr(&e, &ctx, &m).unwrap(), CarrierValue::int(5));
        let e = AExpr::Nth(MExpr::Const(blk.clone(), big(1)), nc(1));
        assert_eq!(
            eval_aexpr(&e, &ctx, &m).unwrap_err().to_string(),
            "ANth index out of bounds"
        );
        let e = AExpr::Nth(MExpr::Const(blk, big(3)), nc(2));
        assert_eq!(
            eval_aexpr(&e, &ctx, &m).unwrap_err().to_string(),
            "ANth not in memory"
        );
    }

    fn two_blocks(x: MemBlock) -> (Context, Memory) {
        let mut m = Memory::new();
        m.add(0, x);
        m.add(1, MemBlock::new());
        let ctx = Context::from_list(vec![
            (DSHVal::Ptr(0, big(4)), false),
            (DSHVal::Ptr(1, big(4)), false),
        ]);
        (ctx, m)
    }

    #[test]
    fn assign_and_power() {
        let (ctx, m) = two_blocks([(0, CarrierValue::int(42))].into_iter().collect());
        let op = DSHOperator::Assign {
            src: MemRef::new(PExpr(0), nc(0)),
            dst: MemRef::new(PExpr(1), nc(1)),
        };
        let out = eval_dshoperator(&ctx, &op, &m, 1).unwrap().unwrap();
        assert_eq!(
            out.lookup(1).unwrap(),
            &[(1, CarrierValue::int(42))].into_iter().collect()
        );

        let (ctx, m) = two_blocks([(0, CarrierValue::int(2))].into_iter().collect());
        let f = AExpr::bin(CtOp::Plus, AExpr::Var(1), AExpr::Var(0));
        let op = DSHOperator::Power {
            n: nc(3),
            src: MemRef::new(PExpr(0), nc(0)),
            dst: MemRef::new(PExpr(1), nc(0)),
            f,
            init: CarrierValue::int(0),
        };
        let out = eval_dshoperator(&ctx, &op, &m, 1).unwrap().unwrap();
        assert_eq!(
            out.lookup(1).unwrap().lookup(0),
            Some(&CarrierValue::int(6))
        );
    }

    #[test]
    fn loop_zero_fuel_and_alloc() {
        let (ctx, m) = two_blocks(MemBlock::new());
        let op = DSHOperator::Loop {
            n: big(0),
            body: Box::new(DSHOperator::Nop),
        };
        assert_eq!(eval_dshoperator(&ctx, &op, &m, 1), Some(Ok(m.clone())));
        assert_eq!(eval_dshoperator(&ctx, &DSHOperator::Nop, &m, 0), None);
        let op = DSHOperator::Loop {
            n: big(3),
            body: Box::new(DSHOperator::Nop),
        };
        assert_eq!(eval_dshoperator(&ctx, &op, &m, 3), None);
        assert!(eval_dshoperator(&ctx, &op, &m, estimate_fuel(&op)).is_some());
        let op = DSHOperator::Alloc {
            size: big(2),
            body: Box::new(DSHOperator::MemInit {
                y: PExpr(0),
                value: CarrierValue::int(1),
            }),
        };
        let out = eval_dshoperator(&ctx, &op, &m, estimate_fuel(&op))
            .unwrap()
            .unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn protected_destination_rejected() {
        let mut m = Memory::new();
        m.add(0, [(0, CarrierValue::int(1))].into_iter().collect());
        let ctx = Context::from_list(vec![(DSHVal::Ptr(0, big(1)), true)]);
        let op = DSHOperator::Assign {
            src: MemRef::new(PExpr(0), nc(0)),
            dst: MemRef::new(PExpr(0), nc(0)),
        };
        assert!(matches!(
            eval_dshoperator(&ctx, &op, &m, 1),
            Some(Err(DshError::Lookup(_)))
        ));
    }

    #[test]
    fn translation_rejects_unknown_constants() {
        let op = DSHOperator::MemInit {
            y: PExpr(0),
            value: CarrierValue::int(1),
        };
        assert_eq!(
            translate_rhcol_to_fhcol(&op).unwrap(),
            DSHOperator::MemInit {
                y: PExpr(0),
                value: CarrierValue::Binary64(1.0)
            }
        );
        let op = DSHOperator::MemInit {
            y: PExpr(0),
            value: CarrierValue::rat(1, 3),
        };
        assert!(matches!(
            translate_rhcol_to_fhcol(&op),
            Err(TranslateError::UnknownConstant(_))
        ));
        let huge = NatValue::BigNat(BigUint::from(1u8) << 64);
        let op = DSHOperator::Loop {
            n: huge,
            body: Box::new(DSHOperator::Nop),
        };
        assert!(matches!(
            translate_rhcol_to_fhcol(&op),
            Err(TranslateError::NatOverflow(_))
        ));
    }
}
