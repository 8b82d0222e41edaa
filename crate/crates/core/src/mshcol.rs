//! MSHCOL: the Σ-HCOL final subset re-expressed over memory blocks. Reading
//! an absent cell is an error instead of a structural default.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierError, CarrierValue};
use crate::memory::MemBlock;
use crate::report::CheckReport;
use crate::sample;
use crate::scalar::{Env, NatExpr, ScalarError, ScalarFn};
use crate::sigma::{self, Rtheta, SHExpr, SigmaError, SparseVector, SparsityContract};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MshError {
    #[error("read of absent offset {0}")]
    SparseRead(usize),
    #[error("both members wrote offset {0}")]
    MergeCollision(usize),
    #[error("offset {0} is outside [0, {1})")]
    KeyOutOfRange(usize, usize),
    #[error("index {0} is outside [0, {1})")]
    IndexOutOfRange(u64, usize),
    #[error("ill-typed expression: {0}")]
    IllTyped(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Carrier(#[from] CarrierError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MFamily {
    pub n: usize,
    pub body: Box<MSHExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MSHExpr {
    Embed {
        n: usize,
        b: NatExpr,
    },
    Pick {
        n: usize,
        b: NatExpr,
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
        f: Box<MSHExpr>,
        g: Box<MSHExpr>,
    },
    Compose(Box<MSHExpr>, Box<MSHExpr>),
    IReduction {
        dot: ScalarFn,
        z: CarrierValue,
        fam: MFamily,
    },
    IUnion {
        fam: MFamily,
    },
}

impl MSHExpr {
    pub fn compose(f: MSHExpr, g: MSHExpr) -> MSHExpr {
        MSHExpr::Compose(Box::new(f), Box::new(g))
    }

    pub fn name(&self) -> &'static str {
        use MSHExpr::*;
        match self {
            Embed { .. } => "MSHEmbed",
            Pick { .. } => "MSHPick",
            Pointwise { .. } => "MSHPointwise",
            BinOp { .. } => "MSHBinOp",
            Inductor { .. } => "MSHInductor",
            Apply2Union { .. } => "MApply2Union",
            Compose(..) => "MSHCompose",
            IReduction { .. } => "MSHIReduction",
            IUnion { .. } => "MSHIUnion",
        }
    }

    pub fn children(&self) -> Vec<&MSHExpr> {
        use MSHExpr::*;
        match self {
            Apply2Union { f, g, .. } | Compose(f, g) => vec![f, g],
            IReduction { fam, .. } | IUnion { fam } => vec![&fam.body],
            _ => vec![],
        }
    }
}

pub fn msh_dims(e: &MSHExpr) -> Result<(usize, usize), MshError> {
    use MSHExpr::*;
    Ok(match e {
        Embed { n, .. } => (1, *n),
        Pick { n, .. } => (*n, 1),
        Pointwise { n, .. } => (*n, *n),
        BinOp { n, .. } => (2 * n, *n),
        Inductor { .. } => (1, 1),
        Apply2Union { f, g, .. } => {
            let (a, b) = (msh_dims(f)?, msh_dims(g)?);
            if a != b {
                return Err(MshError::IllTyped(format!(
                    "MApply2Union members differ: {a:?} vs {b:?}"
                )));
            }
            a
        }
        Compose(f, g) => {
            let (m1, n1) = msh_dims(f)?;
            let (m2, n2) = msh_dims(g)?;
            if m1 != n2 {
                return Err(MshError::IllTyped(format!(
                    "MSHCompose: outer input {m1} but inner output {n2}"
                )));
            }
            (m2, n1)
        }
        IReduction { fam, .. } | IUnion { fam } => msh_dims(&fam.body)?,
    })
}

fn index(e: &NatExpr, env: &Env, bound: usize) -> Result<usize, MshError> {
    let v = e.eval(env, None)?;
    usize::try_from(v)
        .ok()
        .filter(|&k| k < bound)
        .ok_or(MshError::IndexOutOfRange(v, bound))
}

fn read(x: &MemBlock, k: usize) -> Result<&CarrierValue, MshError> {
    x.lookup(k).ok_or(MshError::SparseRead(k))
}

pub fn eval_mshcol(e: &MSHExpr, x: &MemBlock, env: &Env) -> Result<MemBlock, MshError> {
    use MSHExpr::*;
    Ok(match e {
        Embed { n, b } => [(index(b, env, *n)?, read(x, 0)?.clone())]
            .into_iter()
            .collect(),
        Pick { n, b } => [(0, read(x, index(b, env, *n)?)?.clone())]
            .into_iter()
            .collect(),
        Pointwise { n, f } => {
            let mut y = MemBlock::new();
            for j in 0..*n {
                y.insert(
                    j,
                    f.apply(env, Some(j as u64), std::slice::from_ref(read(x, j)?))?,
                );
            }
            y
        }
        BinOp { n, f } => {
            let mut y = MemBlock::new();
            for j in 0..*n {
                let args = [read(x, j)?.clone(), read(x, n + j)?.clone()];
                y.insert(j, f.apply(env, Some(j as u64), &args)?);
            }
            y
        }
        Inductor { n, f, z } => {
            let v = read(x, 0)?;
            let mut acc = z.clone();
            for _ in 0..n.eval(env, None)? {
                acc = f.apply(env, None, &[acc, v.clone()])?;
            }
            [(0, acc)].into_iter().collect()
        }
        Apply2Union { f, g, .. } => {
            let a = eval_mshcol(f, x, env)?;
            let b = eval_mshcol(g, x, env)?;
            a.merge(&b).map_err(MshError::MergeCollision)?
        }
        Compose(f, g) => eval_mshcol(f, &eval_mshcol(g, x, env)?, env)?,
        IUnion { fam } => {
            let mut acc = MemBlock::new();
            for j in 0..fam.n {
                let y = eval_mshcol(&fam.body, x, &env.push_nat(j as u64))?;
                acc = acc.merge(&y).map_err(MshError::MergeCollision)?;
            }
            acc
        }
        IReduction { dot, z, fam } => {
            let mut acc = MemBlock::new();
            for j in 0..fam.n {
                let y = eval_mshcol(&fam.body, x, &env.push_nat(j as u64))?;
                for (k, v) in y.iter() {
                    let prev = acc.lookup(k).unwrap_or(z).clone();
                    acc.insert(k, dot.apply(env, None, &[prev, v.clone()])?);
                }
            }
            acc
        }
    })
}

pub fn svector_to_mem_block(v: &[Rtheta]) -> MemBlock {
    v.iter()
        .enumerate()
        .filter(|(_, r)| !r.is_struct)
        .map(|(k, r)| (k, r.value.clone()))
        .collect()
}

pub fn mem_block_to_svector(
    b: &MemBlock,
    n: usize,
    s: &CarrierValue,
) -> Result<SparseVector, MshError> {
    let mut out = vec![Rtheta::structural(s.clone()); n];
    for (k, v) in b.iter() {
        let cell = out.get_mut(k).ok_or(MshError::KeyOutOfRange(k, n))?;
        *cell = Rtheta::val(v.clone());
    }
    Ok(out)
}

fn range(n: usize) -> BTreeSet<usize> {
    (0..n).collect()
}

/// Input and output index sets, computed structurally.
pub fn msh_contract(e: &MSHExpr, env: &Env) -> Result<SparsityContract, MshError> {
    use MSHExpr::*;
    let (i, o) = msh_dims(e)?;
    let c = |a: BTreeSet<usize>, b: BTreeSet<usize>| SparsityContract {
        in_index_set: a,
        out_index_set: b,
    };
    Ok(match e {
        Embed { n, b } => c([0].into(), [index(b, env, *n)?].into()),
        Pick { n, b } => c([index(b, env, *n)?].into(), [0].into()),
        Pointwise { .. } | BinOp { .. } | Inductor { .. } => c(range(i), range(o)),
        Compose(f, g) => c(
            msh_contract(g, env)?.in_index_set,
            msh_contract(f, env)?.out_index_set,
        ),
        Apply2Union { f, g, .. } => {
            let (a, b) = (msh_contract(f, env)?, msh_contract(g, env)?);
            c(
                &a.in_index_set | &b.in_index_set,
                &a.out_index_set | &b.out_index_set,
            )
        }
        IReduction { fam, .. } | IUnion { fam } => {
            let (mut ins, mut outs) = (BTreeSet::new(), BTreeSet::new());
            for j in 0..fam.n {
                let m = msh_contract(&fam.body, &env.push_nat(j as u64))?;
                ins.extend(m.in_index_set);
                outs.extend(m.out_index_set);
            }
            c(ins, outs)
        }
    })
}

/// Random block holding every offset of `ins`, plus some stray offsets
/// below `i` the operator must ignore.
fn sample_block(rng: &mut sample::SampleRng, i: usize, ins: &BTreeSet<usize>) -> MemBlock {
    let mut b = MemBlock::new();
    for k in 0..i {
        if ins.contains(&k) || rng.gen_bool(0.3) {
            b.insert(k, sample::random_rational(rng));
        }
    }
    b
}

/// Executable memory-operator facts: inputs covering the in set never
/// error, and outputs hold exactly the out set, all below `o`.
pub fn msh_facts_check(e: &MSHExpr, samples: usize, seed: u64, env: &Env) -> CheckReport {
    let mut rep = CheckReport::new("mshcol facts");
    let (contract, (i, o)) = match msh_contract(e, env).and_then(|c| Ok((c, msh_dims(e)?))) {
        Ok(v) => v,
        Err(err) => {
            rep.violation(format!("contract: {err}"));
            return rep;
        }
    };
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        rep.samples += 1;
        let x = sample_block(&mut rng, i, &contract.in_index_set);
        match eval_mshcol(e, &x, env) {
            Err(err) => rep.violation(format!("error on covering input: {err}")),
            Ok(y) => {
                let keys: BTreeSet<usize> = y.keys().collect();
                if keys != contract.out_index_set {
                    rep.violation(format!(
                        "output keys {keys:?} differ from out set {:?}",
                        contract.out_index_set
                    ));
                }
                if let Some(k) = keys.iter().find(|&&k| k >= o) {
                    rep.violation(format!("output key {k} is not below {o}"));
                }
            }
        }
        if !rep.passed() {
            break;
        }
    }
    rep
}

/// Σ-HCOL and MSHCOL agree on random inputs dense on the in set, after
/// converting both sides to memory blocks.
pub fn check_sh_msh_compat(
    se: &SHExpr,
    me: &MSHExpr,
    samples: usize,
    seed: u64,
    env: &Env,
) -> CheckReport {
    let mut rep = CheckReport::new("sigma vs mshcol");
    let setup = || -> Result<(usize, SparsityContract), String> {
        let d1 = sigma::sh_dims(se).map_err(|e| e.to_string())?;
        let d2 = msh_dims(me).map_err(|e| e.to_string())?;
        if d1 != d2 {
            return Err(format!("dimension mismatch: {d1:?} vs {d2:?}"));
        }
        Ok((
            d1.0,
            sigma::sparsity_contract(se, env).map_err(|e: SigmaError| e.to_string())?,
        ))
    };
    let (i, contract) = match setup() {
        Ok(v) => v,
        Err(e) => {
            rep.violation(e);
            return rep;
        }
    };
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        rep.samples += 1;
        let x: SparseVector = (0..i)
            .map(|k| {
                let v = sample::random_rational(&mut rng);
                if contract.in_index_set.contains(&k) {
                    Rtheta::val(v)
                } else {
                    Rtheta::structural(CarrierValue::int(0))
                }
            })
            .collect();
        let want = sigma::eval_shcol(se, &x, env);
        let got = eval_mshcol(me, &svector_to_mem_block(&x), env);
        match (want, got) {
            (Ok(a), Ok(b)) => {
                let a = svector_to_mem_block(&a);
                if a != b {
                    rep.violation(format!("sigma gives {:?}, mshcol gives {:?}", a.0, b.0));
                }
            }
            (Ok(_), Err(e)) => rep.violation(format!("mshcol failed: {e}")),
            (Err(e), _) => rep.violation(format!("sigma failed: {e}")),
        }
        if !rep.passed() {
            break;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::CtOp;

    fn c(k: i64) -> CarrierValue {
        CarrierValue::int(k)
    }

    #[test]
    fn embed_pick_union() {
        let env = Env::default();
        let x: MemBlock = [(0, c(7))].into_iter().collect();
        let y = eval_mshcol(
            &MSHExpr::Embed {
                n: 3,
                b: NatExpr::Const(1),
            },
            &x,
            &env,
        )
        .unwrap();
        assert_eq!(y, [(1, c(7))].into_iter().collect());
        let e = MSHExpr::Pick {
            n: 3,
            b: NatExpr::Const(2),
        };
        assert_eq!(
            eval_mshcol(&e, &MemBlock::new(), &env),
            Err(MshError::SparseRead(2))
        );
    }

    #[test]
    fn svector_round_trip() {
        let v = vec![
            Rtheta::val(c(1)),
            Rtheta::structural(c(0)),
            Rtheta::val(c(2)),
            Rtheta::val(c(3)),
        ];
        let b = svector_to_mem_block(&v);
        assert_eq!(b.keys().collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(mem_block_to_svector(&b, 4, &c(0)).unwrap(), v);
        assert_eq!(
            mem_block_to_svector(&b, 3, &c(0)),
            Err(MshError::KeyOutOfRange(3, 3))
        );
    }

    #[test]
    fn overlapping_union_fails_facts() {
        let emb = || {
            Box::new(MSHExpr::Embed {
                n: 3,
                b: NatExpr::Const(1),
            })
        };
        let e = MSHExpr::Apply2Union {
            dot: ScalarFn::binary(CtOp::Plus),
            f: emb(),
            g: emb(),
        };
        let rep = msh_facts_check(&e, 5, 0, &Env::default());
        assert!(!rep.passed());
        assert!(rep.violations[0].contains("offset 1"));
    }
}
