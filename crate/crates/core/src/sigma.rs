//! Σ-HCOL: sparse vectors with structural and collision flags, the Σ-HCOL
//! operators, sparsity contracts and the lifting/normalizing rewrites.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierError, CarrierKind, CarrierValue, CtOp};
use crate::hcol::{self, dims, ConstVec, HExpr, HcolError};
use crate::report::CheckReport;
use crate::sample;
use crate::scalar::{Env, NatExpr, ScalarError, ScalarExpr, ScalarFn, VecRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SigmaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("ill-typed expression: {0}")]
    IllTyped(String),
    #[error("index map is not injective: {0} is hit twice")]
    MapNotInjective(usize),
    #[error("index map value {0} is outside [0, {1})")]
    MapOutOfRange(u64, usize),
    #[error(transparent)]
    Hcol(#[from] HcolError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Carrier(#[from] CarrierError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rtheta {
    pub value: CarrierValue,
    pub is_struct: bool,
    pub is_collision: bool,
}

impl Rtheta {
    pub fn val(value: CarrierValue) -> Self {
        Rtheta {
            value,
            is_struct: false,
            is_collision: false,
        }
    }

    pub fn structural(s: CarrierValue) -> Self {
        Rtheta {
            value: s,
            is_struct: true,
            is_collision: false,
        }
    }

    /// Same flags, new value.
    fn with_value(&self, value: CarrierValue) -> Self {
        Rtheta {
            value,
            ..self.clone()
        }
    }
}

pub type SparseVector = Vec<Rtheta>;

pub fn sparsify(x: &[CarrierValue]) -> SparseVector {
    x.iter().cloned().map(Rtheta::val).collect()
}

pub fn densify(x: &[Rtheta]) -> Vec<CarrierValue> {
    x.iter().map(|r| r.value.clone()).collect()
}

/// Flags monoid: `Safe` tracks collisions, `Unsafe` does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagsKind {
    Safe,
    Unsafe,
}

/// Combine the flags of two cells whose values were combined.
pub fn combine_flags(kind: FlagsKind, a: &Rtheta, b: &Rtheta) -> (bool, bool) {
    let is_struct = a.is_struct && b.is_struct;
    let fresh = kind == FlagsKind::Safe && !a.is_struct && !b.is_struct;
    (is_struct, a.is_collision || b.is_collision || fresh)
}

pub fn vec2union(
    dot: &ScalarFn,
    a: &[Rtheta],
    b: &[Rtheta],
    kind: FlagsKind,
    env: &Env,
) -> Result<SparseVector, SigmaError> {
    if a.len() != b.len() {
        return Err(SigmaError::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        out.push(match (x.is_struct, y.is_struct) {
            (true, true) => x.clone(),
            (true, false) => Rtheta {
                is_collision: x.is_collision || y.is_collision,
                ..y.clone()
            },
            (false, true) => Rtheta {
                is_collision: x.is_collision || y.is_collision,
                ..x.clone()
            },
            (false, false) => {
                let v = dot.apply(env, None, &[x.value.clone(), y.value.clone()])?;
                let (is_struct, is_collision) = combine_flags(kind, x, y);
                Rtheta {
                    value: v,
                    is_struct,
                    is_collision,
                }
            }
        });
    }
    Ok(out)
}

/// Indexed operator family; the body sees the member index as variable 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub n: usize,
    pub body: Box<SHExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SHExpr {
    /// 1 -> n, the input lands at `b`.
    Embed {
        s: CarrierValue,
        n: usize,
        b: NatExpr,
    },
    /// n -> 1, selects `b`.
    Pick {
        s: CarrierValue,
        n: usize,
        b: NatExpr,
    },
    /// m -> n, `out[map(j)] = x[j]`.
    Scatter {
        s: CarrierValue,
        n: usize,
        m: usize,
        map: NatExpr,
    },
    /// n -> m, `out[j] = x[map(j)]`.
    Gather {
        s: CarrierValue,
        n: usize,
        m: usize,
        map: NatExpr,
    },
    Lift {
        h: HExpr,
        s: CarrierValue,
    },
    Pointwise {
        n: usize,
        f: ScalarFn,
    },
    BinOp {
        n: usize,
        f: ScalarFn,
    },
    Inductor {
        n: NatExpr,
        f: ScalarFn,
        z: CarrierValue,
    },
    Apply2Union {
        dot: ScalarFn,
        f: Box<SHExpr>,
        g: Box<SHExpr>,
    },
    SafeCast(Box<SHExpr>),
    UnSafeCast(Box<SHExpr>),
    Compose(Box<SHExpr>, Box<SHExpr>),
    IReduction {
        dot: ScalarFn,
        z: CarrierValue,
        fam: Family,
    },
    IUnion {
        dot: ScalarFn,
        fam: Family,
    },
}

fn zero() -> CarrierValue {
    CarrierValue::int(0)
}

impl SHExpr {
    pub fn compose(f: SHExpr, g: SHExpr) -> SHExpr {
        SHExpr::Compose(Box::new(f), Box::new(g))
    }
    pub fn embed(n: usize, b: NatExpr) -> SHExpr {
        SHExpr::Embed { s: zero(), n, b }
    }
    pub fn pick(n: usize, b: NatExpr) -> SHExpr {
        SHExpr::Pick { s: zero(), n, b }
    }
    pub fn gather(n: usize, m: usize, map: NatExpr) -> SHExpr {
        SHExpr::Gather {
            s: zero(),
            n,
            m,
            map,
        }
    }
    pub fn scatter(n: usize, m: usize, map: NatExpr) -> SHExpr {
        SHExpr::Scatter {
            s: zero(),
            n,
            m,
            map,
        }
    }
    pub fn lift(h: HExpr) -> SHExpr {
        SHExpr::Lift { h, s: zero() }
    }
    pub fn apply2union(f: SHExpr, g: SHExpr) -> SHExpr {
        SHExpr::Apply2Union {
            dot: ScalarFn::binary(CtOp::Plus),
            f: Box::new(f),
            g: Box::new(g),
        }
    }
    pub fn iunion(n: usize, body: SHExpr) -> SHExpr {
        SHExpr::IUnion {
            dot: ScalarFn::binary(CtOp::Plus),
            fam: Family {
                n,
                body: Box::new(body),
            },
        }
    }
    pub fn ireduction(dot: CtOp, z: CarrierValue, n: usize, body: SHExpr) -> SHExpr {
        SHExpr::IReduction {
            dot: ScalarFn::binary(dot),
            z,
            fam: Family {
                n,
                body: Box::new(body),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        use SHExpr::*;
        match self {
            Embed { .. } => "Embed",
            Pick { .. } => "Pick",
            Scatter { .. } => "Scatter",
            Gather { .. } => "Gather",
            Lift { .. } => "LiftHOperator",
            Pointwise { .. } => "SHPointwise",
            BinOp { .. } => "SHBinOp",
            Inductor { .. } => "SHInductor",
            Apply2Union { .. } => "Apply2Union",
            SafeCast(_) => "SafeCast",
            UnSafeCast(_) => "UnSafeCast",
            Compose(..) => "SHCompose",
            IReduction { .. } => "IReduction",
            IUnion { .. } => "IUnion",
        }
    }

    pub fn children(&self) -> Vec<&SHExpr> {
        use SHExpr::*;
        match self {
            Apply2Union { f, g, .. } | Compose(f, g) => vec![f, g],
            SafeCast(f) | UnSafeCast(f) => vec![f],
            IReduction { fam, .. } | IUnion { fam, .. } => vec![&fam.body],
            _ => vec![],
        }
    }

    fn child_mut(&mut self, i: usize) -> Option<&mut SHExpr> {
        use SHExpr::*;
        match (self, i) {
            (Apply2Union { f, .. }, 0) | (Compose(f, _), 0) => Some(f),
            (Apply2Union { g, .. }, 1) | (Compose(_, g), 1) => Some(g),
            (SafeCast(f), 0) | (UnSafeCast(f), 0) => Some(f),
            (IReduction { fam, .. }, 0) | (IUnion { fam, .. }, 0) => Some(&mut fam.body),
            _ => None,
        }
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut SHExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.child_mut(*i).and_then(|c| c.at_path_mut(rest)),
        }
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&SHExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children().get(*i).and_then(|c| c.at_path(rest)),
        }
    }

    /// Shift free variables at or above `cutoff` by `d`.
    pub fn shift(&self, cutoff: usize, d: usize) -> SHExpr {
        use SHExpr::*;
        let n = |e: &NatExpr| e.shift(cutoff, d);
        let f = |g: &ScalarFn| g.shift(cutoff, d);
        let b = |e: &SHExpr| Box::new(e.shift(cutoff, d));
        let fam = |fm: &Family| Family {
            n: fm.n,
            body: Box::new(fm.body.shift(cutoff + 1, d)),
        };
        match self {
            Embed { s, n: k, b: e } => Embed {
                s: s.clone(),
                n: *k,
                b: n(e),
            },
            Pick { s, n: k, b: e } => Pick {
                s: s.clone(),
                n: *k,
                b: n(e),
            },
            Scatter { s, n: a, m, map } => Scatter {
                s: s.clone(),
                n: *a,
                m: *m,
                map: n(map),
            },
            Gather { s, n: a, m, map } => Gather {
                s: s.clone(),
                n: *a,
                m: *m,
                map: n(map),
            },
            Lift { h, s } => Lift {
                h: h.shift(cutoff, d),
                s: s.clone(),
            },
            Pointwise { n: k, f: g } => Pointwise { n: *k, f: f(g) },
            BinOp { n: k, f: g } => BinOp { n: *k, f: f(g) },
            Inductor { n: k, f: g, z } => Inductor {
                n: n(k),
                f: f(g),
                z: z.clone(),
            },
            Apply2Union { dot, f: x, g: y } => Apply2Union {
                dot: f(dot),
                f: b(x),
                g: b(y),
            },
            SafeCast(x) => SafeCast(b(x)),
            UnSafeCast(x) => UnSafeCast(b(x)),
            Compose(x, y) => Compose(b(x), b(y)),
            IReduction { dot, z, fam: fm } => IReduction {
                dot: f(dot),
                z: z.clone(),
                fam: fam(fm),
            },
            IUnion { dot, fam: fm } => IUnion {
                dot: f(dot),
                fam: fam(fm),
            },
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// True when no Lift, Scatter or Gather remains.
    pub fn is_final(&self) -> bool {
        !matches!(
            self,
            SHExpr::Lift { .. } | SHExpr::Scatter { .. } | SHExpr::Gather { .. }
        ) && self.children().iter().all(|c| c.is_final())
    }
}

pub fn sh_dims(e: &SHExpr) -> Result<(usize, usize), SigmaError> {
    use SHExpr::*;
    Ok(match e {
        Embed { n, .. } => (1, *n),
        Pick { n, .. } => (*n, 1),
        Scatter { n, m, .. } => (*m, *n),
        Gather { n, m, .. } => (*n, *m),
        Lift { h, .. } => dims(h)?,
        Pointwise { n, .. } => (*n, *n),
        BinOp { n, .. } => (2 * n, *n),
        Inductor { .. } => (1, 1),
        Apply2Union { f, g, .. } => {
            let a = sh_dims(f)?;
            let b = sh_dims(g)?;
            if a != b {
                return Err(SigmaError::IllTyped(format!(
                    "Apply2Union members differ: {a:?} vs {b:?}"
                )));
            }
            a
        }
        SafeCast(f) | UnSafeCast(f) => sh_dims(f)?,
        Compose(f, g) => {
            let (m1, n1) = sh_dims(f)?;
            let (m2, n2) = sh_dims(g)?;
            if m1 != n2 {
                return Err(SigmaError::IllTyped(format!(
                    "SHCompose: outer input {m1} but inner output {n2}"
                )));
            }
            (m2, n1)
        }
        IReduction { fam, .. } | IUnion { fam, .. } => sh_dims(&fam.body)?,
    })
}

fn nat_index(e: &NatExpr, env: &Env, idx: Option<u64>, bound: usize) -> Result<usize, SigmaError> {
    let v = e.eval(env, idx)?;
    usize::try_from(v)
        .ok()
        .filter(|&k| k < bound)
        .ok_or(SigmaError::MapOutOfRange(v, bound))
}

/// Tabulate an index map over `[0, count)` into `[0, bound)`, checking injectivity.
pub fn tabulate(
    map: &NatExpr,
    count: usize,
    bound: usize,
    env: &Env,
) -> Result<Vec<usize>, SigmaError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let k = nat_index(map, env, Some(j as u64), bound)?;
        if !seen.insert(k) {
            return Err(SigmaError::MapNotInjective(k));
        }
        out.push(k);
    }
    Ok(out)
}

fn kind_of(x: &[Rtheta]) -> CarrierKind {
    x.first()
        .map(|r| r.value.kind())
        .unwrap_or(CarrierKind::Rational)
}

/// Evaluate at top level (collision tracking enabled).
pub fn eval_shcol(e: &SHExpr, x: &[Rtheta], env: &Env) -> Result<SparseVector, SigmaError> {
    eval_in(e, x, env, FlagsKind::Safe)
}

pub fn eval_in(
    e: &SHExpr,
    x: &[Rtheta],
    env: &Env,
    kind: FlagsKind,
) -> Result<SparseVector, SigmaError> {
    use SHExpr::*;
    let (i, o) = sh_dims(e)?;
    if x.len() != i {
        return Err(SigmaError::DimMismatch {
            expected: i,
            got: x.len(),
        });
    }
    Ok(match e {
        Embed { s, n, b } => {
            let b = nat_index(b, env, None, *n)?;
            let mut out = vec![Rtheta::structural(s.clone()); *n];
            out[b] = x[0].clone();
            out
        }
        Pick { n, b, .. } => vec![x[nat_index(b, env, None, *n)?].clone()],
        Scatter { s, n, m, map } => {
            let f = tabulate(map, *m, *n, env)?;
            let mut out = vec![Rtheta::structural(s.clone()); *n];
            for (j, &k) in f.iter().enumerate() {
                out[k] = x[j].clone();
            }
            out
        }
        Gather { n, m, map, .. } => {
            let mut out = Vec::with_capacity(*m);
            for j in 0..*m {
                out.push(x[nat_index(map, env, Some(j as u64), *n)?].clone());
            }
            out
        }
        Lift { h, .. } => {
            let coll = x.iter().any(|r| r.is_collision);
            let y = hcol::eval_hcol(h, &densify(x), env)?;
            y.into_iter()
                .map(|v| Rtheta {
                    value: v,
                    is_struct: false,
                    is_collision: coll,
                })
                .collect()
        }
        Pointwise { f, .. } => {
            let mut out = Vec::with_capacity(x.len());
            for (j, r) in x.iter().enumerate() {
                out.push(r.with_value(f.apply(
                    env,
                    Some(j as u64),
                    std::slice::from_ref(&r.value),
                )?));
            }
            out
        }
        BinOp { n, f } => {
            let mut out = Vec::with_capacity(*n);
            for j in 0..*n {
                let (a, b) = (&x[j], &x[n + j]);
                let v = f.apply(env, Some(j as u64), &[a.value.clone(), b.value.clone()])?;
                out.push(Rtheta {
                    value: v,
                    is_struct: a.is_struct && b.is_struct,
                    is_collision: a.is_collision || b.is_collision,
                });
            }
            out
        }
        Inductor { n, f, z } => {
            let n = n.eval(env, None)?;
            let mut acc = z.clone();
            for _ in 0..n {
                acc = f.apply(env, None, &[acc, x[0].value.clone()])?;
            }
            vec![x[0].with_value(acc)]
        }
        Apply2Union { dot, f, g } => {
            let a = eval_in(f, x, env, kind)?;
            let b = eval_in(g, x, env, kind)?;
            vec2union(dot, &a, &b, kind, env)?
        }
        SafeCast(f) => eval_in(f, x, env, FlagsKind::Unsafe)?,
        UnSafeCast(f) => eval_in(f, x, env, FlagsKind::Safe)?,
        Compose(f, g) => {
            let y = eval_in(g, x, env, kind)?;
            eval_in(f, &y, env, kind)?
        }
        IUnion { dot, fam } => {
            let mut acc = vec![Rtheta::structural(CarrierValue::zero(kind_of(x))); o];
            for j in 0..fam.n {
                let y = eval_in(&fam.body, x, &env.push_nat(j as u64), kind)?;
                acc = vec2union(dot, &acc, &y, FlagsKind::Safe, env)?;
            }
            acc
        }
        IReduction { dot, z, fam } => {
            let mut acc = vec![Rtheta::structural(z.clone()); o];
            for j in 0..fam.n {
                let y = eval_in(&fam.body, x, &env.push_nat(j as u64), kind)?;
                for (a, v) in acc.iter_mut().zip(y) {
                    if !v.is_struct {
                        let value = dot.apply(env, None, &[a.value.clone(), v.value])?;
                        *a = Rtheta {
                            value,
                            is_struct: false,
                            is_collision: a.is_collision || v.is_collision,
                        };
                    }
                }
            }
            acc
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparsityContract {
    pub in_index_set: BTreeSet<usize>,
    pub out_index_set: BTreeSet<usize>,
}

fn range(n: usize) -> BTreeSet<usize> {
    (0..n).collect()
}

pub fn sparsity_contract(e: &SHExpr, env: &Env) -> Result<SparsityContract, SigmaError> {
    use SHExpr::*;
    let (i, o) = sh_dims(e)?;
    let c = |a: BTreeSet<usize>, b: BTreeSet<usize>| SparsityContract {
        in_index_set: a,
        out_index_set: b,
    };
    Ok(match e {
        Embed { n, b, .. } => c([0].into(), [nat_index(b, env, None, *n)?].into()),
        Pick { n, b, .. } => c([nat_index(b, env, None, *n)?].into(), [0].into()),
        Scatter { n, m, map, .. } => {
            c(range(*m), tabulate(map, *m, *n, env)?.into_iter().collect())
        }
        Gather { n, m, map, .. } => {
            let mut ins = BTreeSet::new();
            for j in 0..*m {
                ins.insert(nat_index(map, env, Some(j as u64), *n)?);
            }
            c(ins, range(*m))
        }
        Lift { .. } | Pointwise { .. } | BinOp { .. } | Inductor { .. } => c(range(i), range(o)),
        SafeCast(f) | UnSafeCast(f) => sparsity_contract(f, env)?,
        Compose(f, g) => c(
            sparsity_contract(g, env)?.in_index_set,
            sparsity_contract(f, env)?.out_index_set,
        ),
        Apply2Union { f, g, .. } => {
            let a = sparsity_contract(f, env)?;
            let b = sparsity_contract(g, env)?;
            c(
                &a.in_index_set | &b.in_index_set,
                &a.out_index_set | &b.out_index_set,
            )
        }
        IReduction { fam, .. } | IUnion { fam, .. } => {
            let mut ins = BTreeSet::new();
            let mut outs = BTreeSet::new();
            for j in 0..fam.n {
                let m = sparsity_contract(&fam.body, &env.push_nat(j as u64))?;
                ins.extend(m.in_index_set);
                outs.extend(m.out_index_set);
            }
            c(ins, outs)
        }
    })
}

/// Random input dense on `ins`; other cells are structural zeros.
fn sample_input(rng: &mut sample::SampleRng, i: usize, ins: &BTreeSet<usize>) -> SparseVector {
    (0..i)
        .map(|k| {
            let v = sample::random_rational(rng);
            if ins.contains(&k) {
                Rtheta::val(v)
            } else {
                Rtheta::structural(zero())
            }
        })
        .collect()
}

/// Structural correctness: output flags match the contract, no collisions,
/// and union members write disjoint cells.
pub fn facts_check(e: &SHExpr, samples: usize, seed: u64, env: &Env) -> CheckReport {
    let mut rep = CheckReport::new("sigma facts");
    let contract = match sparsity_contract(e, env) {
        Ok(c) => c,
        Err(err) => {
            rep.violation(format!("contract: {err}"));
            return rep;
        }
    };
    let (i, _) = sh_dims(e).expect("contract implies dims");
    disjointness(e, env, &mut rep);
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        rep.samples += 1;
        let x = sample_input(&mut rng, i, &contract.in_index_set);
        match eval_shcol(e, &x, env) {
            Err(err) => rep.violation(format!("evaluation failed: {err}")),
            Ok(y) => {
                let nonstruct: BTreeSet<usize> = y
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !r.is_struct)
                    .map(|(k, _)| k)
                    .collect();
                if nonstruct != contract.out_index_set {
                    rep.violation(format!(
                        "non-structural cells {nonstruct:?} differ from out set {:?}",
                        contract.out_index_set
                    ));
                }
                if let Some(k) = y.iter().position(|r| r.is_collision) {
                    rep.violation(format!("collision at output cell {k}"));
                }
            }
        }
        if !rep.passed() {
            break;
        }
    }
    rep
}

fn disjointness(e: &SHExpr, env: &Env, rep: &mut CheckReport) {
    match e {
        SHExpr::Apply2Union { f, g, .. } => {
            if let (Ok(a), Ok(b)) = (sparsity_contract(f, env), sparsity_contract(g, env)) {
                let both: Vec<_> = a.out_index_set.intersection(&b.out_index_set).collect();
                if !both.is_empty() {
                    rep.violation(format!("Apply2Union members overlap on {both:?}"));
                }
            }
        }
        SHExpr::IUnion { fam, .. } => {
            let mut seen = BTreeSet::new();
            for j in 0..fam.n {
                if let Ok(m) = sparsity_contract(&fam.body, &env.push_nat(j as u64)) {
                    for k in m.out_index_set {
                        if !seen.insert(k) {
                            rep.violation(format!("IUnion member {j} overlaps on {k}"));
                        }
                    }
                }
            }
        }
        _ => {}
    }
    match e {
        SHExpr::IUnion { fam, .. } | SHExpr::IReduction { fam, .. } => {
            for j in 0..fam.n {
                disjointness(&fam.body, &env.push_nat(j as u64), rep);
            }
        }
        _ => {
            for c in e.children() {
                disjointness(c, env, rep);
            }
        }
    }
}

pub fn lift_hcol(h: &HExpr, s: CarrierValue) -> SHExpr {
    SHExpr::Lift { h: h.clone(), s }
}

pub type ShRuleFn = fn(&SHExpr) -> Option<SHExpr>;

#[derive(Clone)]
pub struct ShRule {
    pub name: &'static str,
    pub apply: ShRuleFn,
}

fn lifted(e: &SHExpr) -> Option<&HExpr> {
    match e {
        SHExpr::Lift { h, .. } => Some(h),
        _ => None,
    }
}

fn is_ac(f: &ScalarFn) -> bool {
    !f.indexed
        && matches!(
            f.as_builtin(),
            Some(CtOp::Plus | CtOp::Mult | CtOp::Min | CtOp::Max)
        )
}

fn idx_fn(op: CtOp) -> ScalarFn {
    ScalarFn::binary_ignore_index(op)
}

fn abs_fn() -> ScalarFn {
    ScalarFn::unary_abs().with_index()
}

fn var0() -> NatExpr {
    NatExpr::Var(0)
}

/// `j -> (v -> v * a[j]) . Inductor(j, mult, 1)` summed over `j`.
fn poly_reduction(a: &ConstVec) -> SHExpr {
    let a = a.shift(0, 1);
    let scale = ScalarFn {
        arity: 1,
        indexed: true,
        body: ScalarExpr::bin(
            CtOp::Mult,
            ScalarExpr::Arg(0),
            ScalarExpr::Nth(a.src.clone(), var0()),
        ),
    };
    SHExpr::ireduction(
        CtOp::Plus,
        CarrierValue::int(0),
        a.len,
        SHExpr::compose(
            SHExpr::Pointwise { n: 1, f: scale },
            SHExpr::Inductor {
                n: var0(),
                f: ScalarFn::binary(CtOp::Mult),
                z: CarrierValue::int(1),
            },
        ),
    )
}

fn cheb_reduction(n: usize) -> SHExpr {
    let map = NatExpr::plus(
        var0(),
        NatExpr::mult(NatExpr::Const(n as u64), NatExpr::Idx),
    );
    SHExpr::ireduction(
        CtOp::Max,
        CarrierValue::int(0),
        n,
        SHExpr::compose(
            SHExpr::Pointwise { n: 1, f: abs_fn() },
            SHExpr::compose(
                SHExpr::BinOp {
                    n: 1,
                    f: idx_fn(CtOp::Sub),
                },
                SHExpr::gather(2 * n, 2, map),
            ),
        ),
    )
}

fn fuse_poly(e: &SHExpr) -> Option<SHExpr> {
    match lifted(e)? {
        HExpr::EvalPolynomial { a } if a.len > 0 => Some(poly_reduction(a)),
        HExpr::Compose(sp, rest) => {
            let HExpr::ScalarProd { n: k } = **sp else {
                return None;
            };
            let HExpr::Compose(app, mon) = &**rest else {
                return None;
            };
            match (&**app, &**mon) {
                (HExpr::Append { n, a }, HExpr::MonomialEnumerator { n: d })
                    if *n == k && a.len == k && d + 1 == k =>
                {
                    Some(poly_reduction(a))
                }
                _ => None,
            }
        }
        _ => None,
    }
}

fn fuse_cheb(e: &SHExpr) -> Option<SHExpr> {
    match lifted(e)? {
        HExpr::ChebyshevDistance { n } => Some(cheb_reduction(*n)),
        HExpr::Compose(f, g) => match (&**f, &**g) {
            (HExpr::InfinityNorm { n }, HExpr::VMinus { n: m }) if n == m => {
                Some(cheb_reduction(*n))
            }
            _ => None,
        },
        _ => None,
    }
}

fn lift_compose(e: &SHExpr) -> Option<SHExpr> {
    let HExpr::Compose(f, g) = lifted(e)? else {
        return None;
    };
    Some(SHExpr::compose(
        SHExpr::lift((**f).clone()),
        SHExpr::lift((**g).clone()),
    ))
}

fn lift_leaf(e: &SHExpr) -> Option<SHExpr> {
    Some(match lifted(e)? {
        HExpr::Pointwise { n, f } => SHExpr::Pointwise {
            n: *n,
            f: f.clone(),
        },
        HExpr::Atomic { f } => SHExpr::Pointwise {
            n: 1,
            f: f.with_index(),
        },
        HExpr::BinOp { n, f } => SHExpr::BinOp {
            n: *n,
            f: f.clone(),
        },
        HExpr::Inductor { n, f, z } => SHExpr::Inductor {
            n: NatExpr::Const(*n as u64),
            f: f.clone(),
            z: z.clone(),
        },
        HExpr::VMinus { n } => SHExpr::BinOp {
            n: *n,
            f: idx_fn(CtOp::Sub),
        },
        _ => return None,
    })
}

fn lift_reduction(e: &SHExpr) -> Option<SHExpr> {
    Some(match lifted(e)? {
        HExpr::Reduction { n, f, z } if is_ac(f) && *n > 0 => SHExpr::IReduction {
            dot: f.clone(),
            z: z.clone(),
            fam: Family {
                n: *n,
                body: Box::new(SHExpr::pick(*n, var0())),
            },
        },
        HExpr::ScalarProd { n } if *n > 0 => {
            let map = NatExpr::plus(
                var0(),
                NatExpr::mult(NatExpr::Const(*n as u64), NatExpr::Idx),
            );
            SHExpr::ireduction(
                CtOp::Plus,
                CarrierValue::int(0),
                *n,
                SHExpr::compose(
                    SHExpr::BinOp {
                        n: 1,
                        f: idx_fn(CtOp::Mult),
                    },
                    SHExpr::gather(2 * n, 2, map),
                ),
            )
        }
        HExpr::InfinityNorm { n } if *n > 0 => SHExpr::ireduction(
            CtOp::Max,
            CarrierValue::int(0),
            *n,
            SHExpr::compose(
                SHExpr::Pointwise { n: 1, f: abs_fn() },
                SHExpr::pick(*n, var0()),
            ),
        ),
        _ => return None,
    })
}

fn lift_enumerators(e: &SHExpr) -> Option<SHExpr> {
    Some(match lifted(e)? {
        HExpr::MonomialEnumerator { n } => SHExpr::iunion(
            n + 1,
            SHExpr::compose(
                SHExpr::embed(n + 1, var0()),
                SHExpr::Inductor {
                    n: var0(),
                    f: ScalarFn::binary(CtOp::Mult),
                    z: CarrierValue::int(1),
                },
            ),
        ),
        HExpr::Induction { n, f, z } => SHExpr::iunion(
            *n,
            SHExpr::compose(
                SHExpr::embed(*n, var0()),
                SHExpr::Inductor {
                    n: var0(),
                    f: f.shift(0, 1),
                    z: z.clone(),
                },
            ),
        ),
        _ => return None,
    })
}

fn lift_append(e: &SHExpr) -> Option<SHExpr> {
    let (n, a, prepend) = match lifted(e)? {
        HExpr::Append { n, a } => (*n, a, false),
        HExpr::Prepend { n, a } => (*n, a, true),
        _ => return None,
    };
    if n == 0 {
        return None;
    }
    let m = a.len;
    let (off_x, off_a) = if prepend { (m, 0) } else { (0, n) };
    let a1 = a.shift(0, 1);
    let constant = ScalarFn {
        arity: 1,
        indexed: true,
        body: ScalarExpr::Nth(a1.src, var0()),
    };
    let x_part = SHExpr::scatter(
        n + m,
        n,
        NatExpr::plus(NatExpr::Idx, NatExpr::Const(off_x as u64)),
    );
    let a_part = SHExpr::iunion(
        m,
        SHExpr::compose(
            SHExpr::embed(n + m, NatExpr::plus(NatExpr::Const(off_a as u64), var0())),
            SHExpr::compose(
                SHExpr::Pointwise { n: 1, f: constant },
                SHExpr::pick(n, NatExpr::Const(0)),
            ),
        ),
    );
    Some(if prepend {
        SHExpr::apply2union(a_part, x_part)
    } else {
        SHExpr::apply2union(x_part, a_part)
    })
}

fn lift_pairs(e: &SHExpr) -> Option<SHExpr> {
    let id_plus = |k: usize| NatExpr::plus(NatExpr::Idx, NatExpr::Const(k as u64));
    match lifted(e)? {
        HExpr::Cross(f, g) => {
            let (m1, n1) = dims(f).ok()?;
            let (m2, n2) = dims(g).ok()?;
            let side = |h: &HExpr, ni: usize, mi: usize, off_out: usize, off_in: usize| {
                SHExpr::compose(
                    SHExpr::scatter(n1 + n2, ni, id_plus(off_out)),
                    SHExpr::compose(
                        SHExpr::lift(h.clone()),
                        SHExpr::gather(m1 + m2, mi, id_plus(off_in)),
                    ),
                )
            };
            Some(SHExpr::apply2union(
                side(f, n1, m1, 0, 0),
                side(g, n2, m2, n1, m1),
            ))
        }
        HExpr::Stack(f, g) => {
            let (_, n1) = dims(f).ok()?;
            let (_, n2) = dims(g).ok()?;
            Some(SHExpr::apply2union(
                SHExpr::compose(
                    SHExpr::scatter(n1 + n2, n1, id_plus(0)),
                    SHExpr::lift((**f).clone()),
                ),
                SHExpr::compose(
                    SHExpr::scatter(n1 + n2, n2, id_plus(n1)),
                    SHExpr::lift((**g).clone()),
                ),
            ))
        }
        HExpr::TLess(f, g) => {
            let (_, n) = dims(f).ok()?;
            Some(SHExpr::compose(
                SHExpr::BinOp {
                    n,
                    f: idx_fn(CtOp::Zless),
                },
                SHExpr::lift(HExpr::Cross(f.clone(), g.clone())),
            ))
        }
        _ => None,
    }
}

fn compose_assoc(e: &SHExpr) -> Option<SHExpr> {
    let SHExpr::Compose(fg, h) = e else {
        return None;
    };
    let SHExpr::Compose(f, g) = &**fg else {
        return None;
    };
    Some(SHExpr::compose(
        (**f).clone(),
        SHExpr::compose((**g).clone(), (**h).clone()),
    ))
}

fn is_selector(e: &SHExpr) -> bool {
    matches!(e, SHExpr::Pick { .. } | SHExpr::Gather { .. })
}

fn reduction_distribute(e: &SHExpr) -> Option<SHExpr> {
    let SHExpr::Compose(r, g) = e else {
        return None;
    };
    let SHExpr::IReduction { dot, z, fam } = &**r else {
        return None;
    };
    if !is_selector(g) {
        return None;
    }
    let body = SHExpr::compose((*fam.body).clone(), g.shift(0, 1));
    Some(SHExpr::IReduction {
        dot: dot.clone(),
        z: z.clone(),
        fam: Family {
            n: fam.n,
            body: Box::new(body),
        },
    })
}

/// Fuse `outer . inner` when both select cells; `None` if not applicable.
fn fuse_selectors(outer: &SHExpr, inner: &SHExpr) -> Option<SHExpr> {
    let SHExpr::Gather {
        s, n: n1, map: g, ..
    } = inner
    else {
        return None;
    };
    match outer {
        SHExpr::Gather { m: m2, map: f, .. } => Some(SHExpr::Gather {
            s: s.clone(),
            n: *n1,
            m: *m2,
            map: g.subst_idx(f).simplify(),
        }),
        SHExpr::Pick { b, .. } => Some(SHExpr::Pick {
            s: s.clone(),
            n: *n1,
            b: g.subst_idx(b).simplify(),
        }),
        _ => None,
    }
}

fn selector_fusion(e: &SHExpr) -> Option<SHExpr> {
    let SHExpr::Compose(a, rest) = e else {
        return None;
    };
    if let Some(fused) = fuse_selectors(a, rest) {
        return Some(fused);
    }
    let SHExpr::Compose(b, r) = &**rest else {
        return None;
    };
    fuse_selectors(a, b).map(|ab| SHExpr::compose(ab, (**r).clone()))
}

fn is_identity_map(e: &SHExpr) -> bool {
    match e {
        SHExpr::Gather { n, m, map, .. } | SHExpr::Scatter { n, m, map, .. } => {
            n == m && map.simplify() == NatExpr::Idx
        }
        _ => false,
    }
}

fn drop_identity(e: &SHExpr) -> Option<SHExpr> {
    let SHExpr::Compose(f, g) = e else {
        return None;
    };
    if is_identity_map(g) {
        Some((**f).clone())
    } else if is_identity_map(f) {
        Some((**g).clone())
    } else {
        None
    }
}

fn expand_selectors(e: &SHExpr) -> Option<SHExpr> {
    match e {
        SHExpr::Gather { s, n, m, map } => {
            if *m == 1 {
                return Some(SHExpr::Pick {
                    s: s.clone(),
                    n: *n,
                    b: map.subst_idx(&NatExpr::Const(0)).simplify(),
                });
            }
            let b = map.shift(0, 1).subst_idx(&var0()).simplify();
            Some(SHExpr::iunion(
                *m,
                SHExpr::compose(
                    SHExpr::embed(*m, var0()),
                    SHExpr::Pick {
                        s: s.clone(),
                        n: *n,
                        b,
                    },
                ),
            ))
        }
        SHExpr::Scatter { s, n, m, map } => {
            if *m == 1 {
                return Some(SHExpr::Embed {
                    s: s.clone(),
                    n: *n,
                    b: map.subst_idx(&NatExpr::Const(0)).simplify(),
                });
            }
            let b = map.shift(0, 1).subst_idx(&var0()).simplify();
            Some(SHExpr::iunion(
                *m,
                SHExpr::compose(
                    SHExpr::Embed {
                        s: s.clone(),
                        n: *n,
                        b,
                    },
                    SHExpr::pick(*m, var0()),
                ),
            ))
        }
        _ => None,
    }
}

pub fn sh_rules() -> Vec<ShRule> {
    vec![
        ShRule {
            name: "fuse_polynomial",
            apply: fuse_poly,
        },
        ShRule {
            name: "fuse_chebyshev",
            apply: fuse_cheb,
        },
        ShRule {
            name: "lift_compose",
            apply: lift_compose,
        },
        ShRule {
            name: "lift_leaf",
            apply: lift_leaf,
        },
        ShRule {
            name: "lift_reduction",
            apply: lift_reduction,
        },
        ShRule {
            name: "lift_enumerator",
            apply: lift_enumerators,
        },
        ShRule {
            name: "lift_append",
            apply: lift_append,
        },
        ShRule {
            name: "lift_pair",
            apply: lift_pairs,
        },
        ShRule {
            name: "compose_assoc",
            apply: compose_assoc,
        },
        ShRule {
            name: "reduction_distribute",
            apply: reduction_distribute,
        },
        ShRule {
            name: "selector_fusion",
            apply: selector_fusion,
        },
        ShRule {
            name: "drop_identity",
            apply: drop_identity,
        },
        ShRule {
            name: "expand_selector",
            apply: expand_selectors,
        },
    ]
}

pub fn find_sh_rule(name: &str) -> Option<ShRule> {
    sh_rules().into_iter().find(|r| r.name == name)
}

pub fn apply_sh_rewrites(
    e: &SHExpr,
    trace: &[hcol::TraceStep],
) -> Result<SHExpr, hcol::RewriteError> {
    let mut cur = e.clone();
    for (step, t) in trace.iter().enumerate() {
        let fail = |reason: String| hcol::RewriteError { step, reason };
        let rule = find_sh_rule(&t.rule).ok_or_else(|| fail(format!("unknown rule {}", t.rule)))?;
        let node = cur
            .at_path_mut(&t.path)
            .ok_or_else(|| fail(format!("no node at path {:?}", t.path)))?;
        let before = sh_dims(node).map_err(|e| fail(e.to_string()))?;
        let new = (rule.apply)(node)
            .ok_or_else(|| fail(format!("rule {} does not match {}", t.rule, node.name())))?;
        let after = sh_dims(&new).map_err(|e| fail(e.to_string()))?;
        if before != after {
            return Err(fail(format!(
                "rule {} changed dims {before:?} to {after:?}",
                t.rule
            )));
        }
        *node = new;
    }
    Ok(cur)
}

fn find_first(e: &SHExpr, rules: &[ShRule], path: &mut Vec<usize>) -> Option<hcol::TraceStep> {
    for r in rules {
        if (r.apply)(e).is_some() {
            return Some(hcol::TraceStep::new(r.name, path));
        }
    }
    for (i, c) in e.children().into_iter().enumerate() {
        path.push(i);
        let found = find_first(c, rules, path);
        path.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Rewrite to normal form: repeatedly apply the first rule (in registry
/// order) at the first pre-order node where one matches.
pub fn normalize(e: &SHExpr) -> (SHExpr, Vec<hcol::TraceStep>) {
    let rules = sh_rules();
    let mut cur = e.clone();
    let mut trace = Vec::new();
    for _ in 0..100_000 {
        let Some(step) = find_first(&cur, &rules, &mut Vec::new()) else {
            break;
        };
        cur = apply_sh_rewrites(&cur, std::slice::from_ref(&step)).expect("matched rule applies");
        trace.push(step);
    }
    (cur, trace)
}

/// Densified Σ-HCOL output equals HCOL output on random dense inputs.
pub fn check_against_hcol(
    h: &HExpr,
    se: &SHExpr,
    samples: usize,
    seed: u64,
    env: &Env,
) -> CheckReport {
    let mut rep = CheckReport::new("sigma vs hcol");
    let (i, _) = match dims(h) {
        Ok(d) => d,
        Err(e) => {
            rep.violation(e.to_string());
            return rep;
        }
    };
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        rep.samples += 1;
        let x = sample::random_rationals(&mut rng, i);
        let want = hcol::eval_hcol(h, &x, env);
        let got = eval_shcol(se, &sparsify(&x), env);
        match (want, got) {
            (Ok(a), Ok(b)) if a == densify(&b) => {}
            (Ok(a), Ok(b)) => {
                rep.violation(format!("on {x:?}: hcol {a:?} vs sigma {:?}", densify(&b)))
            }
            (Err(a), Err(_)) => rep.violation(format!("both failed: {a}")),
            (Ok(_), Err(b)) => rep.violation(format!("sigma failed: {b}")),
            (Err(a), Ok(_)) => rep.violation(format!("hcol failed: {a}")),
        }
        if !rep.passed() {
            break;
        }
    }
    rep
}

/// Convenience: scalar literal vector constant.
pub fn lit(xs: &[i64]) -> VecRef {
    VecRef::Lit(xs.iter().map(|&v| CarrierValue::int(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(xs: &[i64]) -> Vec<CarrierValue> {
        xs.iter().map(|&v| CarrierValue::int(v)).collect()
    }

    #[test]
    fn embed_and_gather() {
        let env = Env::default();
        let y = eval_shcol(
            &SHExpr::embed(3, NatExpr::Const(1)),
            &sparsify(&ints(&[7])),
            &env,
        )
        .unwrap();
        assert!(y[0].is_struct && !y[1].is_struct && y[2].is_struct);
        assert_eq!(y[1].value, CarrierValue::int(7));
        // map 0 -> 2, 1 -> 0 written as 2 - 2*idx
        let map = NatExpr::Minus(
            Box::new(NatExpr::Const(2)),
            Box::new(NatExpr::mult(NatExpr::Const(2), NatExpr::Idx)),
        );
        let y = eval_shcol(
            &SHExpr::gather(4, 2, map),
            &sparsify(&ints(&[1, 2, 3, 4])),
            &env,
        )
        .unwrap();
        assert_eq!(densify(&y), ints(&[3, 1]));
    }

    #[test]
    fn union_flags() {
        let env = Env::default();
        let plus = ScalarFn::binary(CtOp::Plus);
        let s = |v| Rtheta::structural(CarrierValue::int(v));
        let v = |x| Rtheta::val(CarrierValue::int(x));
        let y = vec2union(&plus, &[s(0), v(5)], &[v(3), s(0)], FlagsKind::Safe, &env).unwrap();
        assert_eq!(densify(&y), ints(&[3, 5]));
        assert!(y.iter().all(|r| !r.is_collision && !r.is_struct));
        let y = vec2union(&plus, &[v(4)], &[v(5)], FlagsKind::Safe, &env).unwrap();
        assert_eq!(y[0].value, CarrierValue::int(9));
        assert!(y[0].is_collision);
        let y = vec2union(&plus, &[v(4)], &[v(5)], FlagsKind::Unsafe, &env).unwrap();
        assert!(!y[0].is_collision);
    }

    #[test]
    fn scatter_must_be_injective() {
        let e = SHExpr::scatter(3, 2, NatExpr::Const(1));
        let err = eval_shcol(&e, &sparsify(&ints(&[1, 2])), &Env::default()).unwrap_err();
        assert_eq!(err, SigmaError::MapNotInjective(1));
    }

    #[test]
    fn overlapping_union_flagged() {
        let e = SHExpr::apply2union(
            SHExpr::embed(3, NatExpr::Const(1)),
            SHExpr::embed(3, NatExpr::Const(1)),
        );
        let rep = facts_check(&e, 5, 1, &Env::default());
        assert!(!rep.passed());
        let fam = SHExpr::iunion(
            4,
            SHExpr::compose(SHExpr::embed(4, var0()), SHExpr::pick(4, var0())),
        );
        assert!(facts_check(&fam, 20, 1, &Env::default()).passed());
    }
}
