//! HCOL: dense vector operators, their evaluator, breakdown rules and the
//! extensional equivalence checker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierError, CarrierKind, CarrierValue, CtOp};
use crate::sample;
use crate::scalar::{Env, ScalarError, ScalarFn, VecRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HcolError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("ill-typed expression: {0}")]
    IllTyped(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Carrier(#[from] CarrierError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("rewrite step {step} failed: {reason}")]
pub struct RewriteError {
    pub step: usize,
    pub reason: String,
}

/// Constant parameter vector: a literal or a reference to a global.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstVec {
    pub src: VecRef,
    pub len: usize,
}

impl ConstVec {
    pub fn lit(xs: Vec<CarrierValue>) -> Self {
        ConstVec {
            len: xs.len(),
            src: VecRef::Lit(xs),
        }
    }

    pub fn global(r: usize, len: usize) -> Self {
        ConstVec {
            src: VecRef::Global(r),
            len,
        }
    }

    pub fn values(&self, env: &Env) -> Result<Vec<CarrierValue>, HcolError> {
        let v = match &self.src {
            VecRef::Lit(xs) => xs.clone(),
            VecRef::Global(r) => env.vec(*r)?.as_ref().clone(),
        };
        if v.len() != self.len {
            return Err(HcolError::DimMismatch {
                expected: self.len,
                got: v.len(),
            });
        }
        Ok(v)
    }

    pub fn shift(&self, cutoff: usize, d: usize) -> ConstVec {
        match self.src {
            VecRef::Global(r) if r >= cutoff => ConstVec {
                src: VecRef::Global(r + d),
                len: self.len,
            },
            _ => self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HExpr {
    /// `f(i, x_i)` for every element.
    Pointwise {
        n: usize,
        f: ScalarFn,
    },
    Atomic {
        f: ScalarFn,
    },
    ScalarProd {
        n: usize,
    },
    /// `f(i, x_i, x_{n+i})`.
    BinOp {
        n: usize,
        f: ScalarFn,
    },
    Reduction {
        n: usize,
        f: ScalarFn,
        z: CarrierValue,
    },
    EvalPolynomial {
        a: ConstVec,
    },
    Prepend {
        n: usize,
        a: ConstVec,
    },
    Append {
        n: usize,
        a: ConstVec,
    },
    MonomialEnumerator {
        n: usize,
    },
    Inductor {
        n: usize,
        f: ScalarFn,
        z: CarrierValue,
    },
    Induction {
        n: usize,
        f: ScalarFn,
        z: CarrierValue,
    },
    InfinityNorm {
        n: usize,
    },
    ChebyshevDistance {
        n: usize,
    },
    VMinus {
        n: usize,
    },
    Cross(Box<HExpr>, Box<HExpr>),
    Stack(Box<HExpr>, Box<HExpr>),
    Compose(Box<HExpr>, Box<HExpr>),
    TLess(Box<HExpr>, Box<HExpr>),
}

impl HExpr {
    pub fn compose(f: HExpr, g: HExpr) -> HExpr {
        HExpr::Compose(Box::new(f), Box::new(g))
    }
    pub fn cross(f: HExpr, g: HExpr) -> HExpr {
        HExpr::Cross(Box::new(f), Box::new(g))
    }
    pub fn stack(f: HExpr, g: HExpr) -> HExpr {
        HExpr::Stack(Box::new(f), Box::new(g))
    }
    pub fn tless(f: HExpr, g: HExpr) -> HExpr {
        HExpr::TLess(Box::new(f), Box::new(g))
    }

    pub fn name(&self) -> &'static str {
        use HExpr::*;
        match self {
            Pointwise { .. } => "HPointwise",
            Atomic { .. } => "HAtomic",
            ScalarProd { .. } => "HScalarProd",
            BinOp { .. } => "HBinOp",
            Reduction { .. } => "HReduction",
            EvalPolynomial { .. } => "HEvalPolynomial",
            Prepend { .. } => "HPrepend",
            Append { .. } => "HAppend",
            MonomialEnumerator { .. } => "HMonomialEnumerator",
            Inductor { .. } => "HInductor",
            Induction { .. } => "HInduction",
            InfinityNorm { .. } => "HInfinityNorm",
            ChebyshevDistance { .. } => "HChebyshevDistance",
            VMinus { .. } => "HVMinus",
            Cross(..) => "HCross",
            Stack(..) => "HStack",
            Compose(..) => "HCompose",
            TLess(..) => "HTLess",
        }
    }

    pub fn children(&self) -> Vec<&HExpr> {
        match self {
            HExpr::Cross(f, g) | HExpr::Stack(f, g) | HExpr::Compose(f, g) | HExpr::TLess(f, g) => {
                vec![f, g]
            }
            _ => vec![],
        }
    }

    fn child_mut(&mut self, i: usize) -> Option<&mut HExpr> {
        match self {
            HExpr::Cross(f, g) | HExpr::Stack(f, g) | HExpr::Compose(f, g) | HExpr::TLess(f, g) => {
                match i {
                    0 => Some(f),
                    1 => Some(g),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&HExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children().get(*i).and_then(|c| c.at_path(rest)),
        }
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut HExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.child_mut(*i).and_then(|c| c.at_path_mut(rest)),
        }
    }

    /// Shift free variables of every parameter, used when the expression is
    /// moved under `d` new binders.
    pub fn shift(&self, cutoff: usize, d: usize) -> HExpr {
        use HExpr::*;
        let sf = |f: &ScalarFn| f.shift(cutoff, d);
        let b = |e: &HExpr| Box::new(e.shift(cutoff, d));
        match self {
            Pointwise { n, f } => Pointwise { n: *n, f: sf(f) },
            Atomic { f } => Atomic { f: sf(f) },
            BinOp { n, f } => BinOp { n: *n, f: sf(f) },
            Reduction { n, f, z } => Reduction {
                n: *n,
                f: sf(f),
                z: z.clone(),
            },
            EvalPolynomial { a } => EvalPolynomial {
                a: a.shift(cutoff, d),
            },
            Prepend { n, a } => Prepend {
                n: *n,
                a: a.shift(cutoff, d),
            },
            Append { n, a } => Append {
                n: *n,
                a: a.shift(cutoff, d),
            },
            Inductor { n, f, z } => Inductor {
                n: *n,
                f: sf(f),
                z: z.clone(),
            },
            Induction { n, f, z } => Induction {
                n: *n,
                f: sf(f),
                z: z.clone(),
            },
            ScalarProd { .. }
            | MonomialEnumerator { .. }
            | InfinityNorm { .. }
            | ChebyshevDistance { .. }
            | VMinus { .. } => self.clone(),
            Cross(f, g) => Cross(b(f), b(g)),
            Stack(f, g) => Stack(b(f), b(g)),
            Compose(f, g) => Compose(b(f), b(g)),
            TLess(f, g) => TLess(b(f), b(g)),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }
}

/// Input and output dimensions.
pub fn dims(e: &HExpr) -> Result<(usize, usize), HcolError> {
    use HExpr::*;
    Ok(match e {
        Pointwise { n, .. } => (*n, *n),
        Atomic { .. } => (1, 1),
        ScalarProd { n } => (2 * n, 1),
        BinOp { n, .. } => (2 * n, *n),
        Reduction { n, .. } => (*n, 1),
        EvalPolynomial { .. } => (1, 1),
        Prepend { n, a } | Append { n, a } => (*n, n + a.len),
        MonomialEnumerator { n } => (1, n + 1),
        Inductor { .. } => (1, 1),
        Induction { n, .. } => (1, *n),
        InfinityNorm { n } => (*n, 1),
        ChebyshevDistance { n } => (2 * n, 1),
        VMinus { n } => (2 * n, *n),
        Cross(f, g) => {
            let (m1, n1) = dims(f)?;
            let (m2, n2) = dims(g)?;
            (m1 + m2, n1 + n2)
        }
        Stack(f, g) => {
            let (m1, n1) = dims(f)?;
            let (m2, n2) = dims(g)?;
            if m1 != m2 {
                return Err(HcolError::IllTyped(format!(
                    "HStack inputs differ: {m1} vs {m2}"
                )));
            }
            (m1, n1 + n2)
        }
        Compose(f, g) => {
            let (m1, n1) = dims(f)?;
            let (m2, n2) = dims(g)?;
            if m1 != n2 {
                return Err(HcolError::IllTyped(format!(
                    "HCompose: outer input {m1} but inner output {n2}"
                )));
            }
            let _ = n1;
            (m2, n1)
        }
        TLess(f, g) => {
            let (m1, n1) = dims(f)?;
            let (m2, n2) = dims(g)?;
            if n1 != n2 {
                return Err(HcolError::IllTyped(format!(
                    "HTLess outputs differ: {n1} vs {n2}"
                )));
            }
            (m1 + m2, n1)
        }
    })
}

fn kind_of(x: &[CarrierValue]) -> CarrierKind {
    x.first().map(|v| v.kind()).unwrap_or(CarrierKind::Rational)
}

pub fn eval_hcol(e: &HExpr, x: &[CarrierValue], env: &Env) -> Result<Vec<CarrierValue>, HcolError> {
    use HExpr::*;
    let (i, _) = dims(e)?;
    if x.len() != i {
        return Err(HcolError::DimMismatch {
            expected: i,
            got: x.len(),
        });
    }
    let kind = kind_of(x);
    Ok(match e {
        Pointwise { f, .. } => {
            let mut out = Vec::with_capacity(x.len());
            for (j, v) in x.iter().enumerate() {
                out.push(f.apply(env, Some(j as u64), std::slice::from_ref(v))?);
            }
            out
        }
        Atomic { f } => vec![f.apply(env, None, &x[..1])?],
        ScalarProd { n } => {
            let mut acc = CarrierValue::zero(kind);
            for j in 0..*n {
                acc = acc.plus(&x[j].mult(&x[n + j])?)?;
            }
            vec![acc]
        }
        BinOp { n, f } => {
            let mut out = Vec::with_capacity(*n);
            for j in 0..*n {
                out.push(f.apply(env, Some(j as u64), &[x[j].clone(), x[n + j].clone()])?);
            }
            out
        }
        Reduction { f, z, .. } => {
            let mut acc = z.clone();
            for v in x.iter().rev() {
                acc = f.apply(env, None, &[v.clone(), acc])?;
            }
            vec![acc]
        }
        EvalPolynomial { a } => {
            let a = a.values(env)?;
            // Horner form; exact carriers make the order irrelevant.
            let mut acc = CarrierValue::zero(kind);
            for c in a.iter().rev() {
                acc = acc.mult(&x[0])?.plus(c)?;
            }
            vec![acc]
        }
        Prepend { a, .. } => {
            let mut out = a.values(env)?;
            out.extend_from_slice(x);
            out
        }
        Append { a, .. } => {
            let mut out = x.to_vec();
            out.extend(a.values(env)?);
            out
        }
        MonomialEnumerator { n } => {
            let mut out = vec![CarrierValue::one(kind)];
            for k in 0..*n {
                let next = out[k].mult(&x[0])?;
                out.push(next);
            }
            out
        }
        Inductor { n, f, z } => {
            let mut acc = z.clone();
            for _ in 0..*n {
                acc = f.apply(env, None, &[acc, x[0].clone()])?;
            }
            vec![acc]
        }
        Induction { n, f, z } => {
            let mut out = Vec::with_capacity(*n);
            let mut acc = z.clone();
            for k in 0..*n {
                if k > 0 {
                    acc = f.apply(env, None, &[acc, x[0].clone()])?;
                }
                out.push(acc.clone());
            }
            out
        }
        InfinityNorm { .. } => {
            let mut acc = CarrierValue::zero(kind);
            for v in x {
                acc = acc.max(&v.abs()?)?;
            }
            vec![acc]
        }
        ChebyshevDistance { n } => {
            let mut acc = CarrierValue::zero(kind);
            for j in 0..*n {
                acc = acc.max(&x[j].sub(&x[n + j])?.abs()?)?;
            }
            vec![acc]
        }
        VMinus { n } => (0..*n)
            .map(|j| x[j].sub(&x[n + j]))
            .collect::<Result<_, _>>()?,
        Cross(f, g) => {
            let (m1, _) = dims(f)?;
            let mut out = eval_hcol(f, &x[..m1], env)?;
            out.extend(eval_hcol(g, &x[m1..], env)?);
            out
        }
        Stack(f, g) => {
            let mut out = eval_hcol(f, x, env)?;
            out.extend(eval_hcol(g, x, env)?);
            out
        }
        Compose(f, g) => eval_hcol(f, &eval_hcol(g, x, env)?, env)?,
        TLess(f, g) => {
            let (m1, _) = dims(f)?;
            let a = eval_hcol(f, &x[..m1], env)?;
            let b = eval_hcol(g, &x[m1..], env)?;
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| p.zless(q))
                .collect::<Result<_, _>>()?
        }
    })
}

pub type RuleFn = fn(&HExpr) -> Option<HExpr>;

#[derive(Clone)]
pub struct BreakdownRule {
    pub name: &'static str,
    pub description: &'static str,
    pub apply: RuleFn,
}

impl std::fmt::Debug for BreakdownRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BreakdownRule({})", self.name)
    }
}

fn r1(e: &HExpr) -> Option<HExpr> {
    let HExpr::ScalarProd { n } = e else {
        return None;
    };
    Some(HExpr::compose(
        HExpr::Reduction {
            n: *n,
            f: ScalarFn::binary(CtOp::Plus),
            z: CarrierValue::int(0),
        },
        HExpr::BinOp {
            n: *n,
            f: ScalarFn::binary_ignore_index(CtOp::Mult),
        },
    ))
}

fn r2(e: &HExpr) -> Option<HExpr> {
    let HExpr::EvalPolynomial { a } = e else {
        return None;
    };
    if a.len == 0 {
        return None;
    }
    let k = a.len;
    Some(HExpr::compose(
        HExpr::ScalarProd { n: k },
        HExpr::compose(
            HExpr::Append { n: k, a: a.clone() },
            HExpr::MonomialEnumerator { n: k - 1 },
        ),
    ))
}

fn r3(e: &HExpr) -> Option<HExpr> {
    let HExpr::ChebyshevDistance { n } = e else {
        return None;
    };
    Some(HExpr::compose(
        HExpr::InfinityNorm { n: *n },
        HExpr::VMinus { n: *n },
    ))
}

fn r4(e: &HExpr) -> Option<HExpr> {
    let HExpr::TLess(f, g) = e else { return None };
    let (_, n) = dims(f).ok()?;
    Some(HExpr::compose(
        HExpr::BinOp {
            n,
            f: ScalarFn::binary_ignore_index(CtOp::Zless),
        },
        HExpr::Cross(f.clone(), g.clone()),
    ))
}

pub fn builtin_rules() -> Vec<BreakdownRule> {
    vec![
        BreakdownRule {
            name: "R1",
            description: "HScalarProd n = HReduction (+) 0 . HBinOp (mult ignoring index)",
            apply: r1,
        },
        BreakdownRule {
            name: "R2",
            description: "HEvalPolynomial a = HScalarProd . HAppend a . HMonomialEnumerator",
            apply: r2,
        },
        BreakdownRule {
            name: "R3",
            description: "HChebyshevDistance n = HInfinityNorm n . HVMinus n",
            apply: r3,
        },
        BreakdownRule {
            name: "R4",
            description: "HTLess f g = HBinOp zless . HCross f g",
            apply: r4,
        },
    ]
}

pub fn find_rule(name: &str) -> Option<BreakdownRule> {
    builtin_rules().into_iter().find(|r| r.name == name)
}

pub type Path = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule: String,
    pub path: Path,
}

impl TraceStep {
    pub fn new(rule: &str, path: &[usize]) -> Self {
        TraceStep {
            rule: rule.to_string(),
            path: path.to_vec(),
        }
    }
}

pub fn apply_breakdown_trace(e: &HExpr, trace: &[TraceStep]) -> Result<HExpr, RewriteError> {
    let mut cur = e.clone();
    for (step, t) in trace.iter().enumerate() {
        let fail = |reason: String| RewriteError { step, reason };
        let rule = find_rule(&t.rule).ok_or_else(|| fail(format!("unknown rule {}", t.rule)))?;
        let node = cur
            .at_path_mut(&t.path)
            .ok_or_else(|| fail(format!("no node at path {:?}", t.path)))?;
        let before = dims(node).map_err(|e| fail(e.to_string()))?;
        let new = (rule.apply)(node)
            .ok_or_else(|| fail(format!("rule {} does not match {}", t.rule, node.name())))?;
        let after = dims(&new).map_err(|e| fail(e.to_string()))?;
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

/// Apply the named rules wherever they match, first pre-order match first,
/// until none applies. Returns the result and the replayable trace.
pub fn auto_breakdown(e: &HExpr, rules: &[&str]) -> (HExpr, Vec<TraceStep>) {
    let rules: Vec<BreakdownRule> = rules.iter().filter_map(|r| find_rule(r)).collect();
    let mut cur = e.clone();
    let mut trace = Vec::new();
    loop {
        let mut found = None;
        preorder_find(
            &cur,
            &mut Vec::new(),
            &mut |node, path| {
                for r in &rules {
                    if (r.apply)(node).is_some() {
                        return Some(TraceStep::new(r.name, path));
                    }
                }
                None
            },
            &mut found,
        );
        match found {
            Some(step) => {
                cur = apply_breakdown_trace(&cur, std::slice::from_ref(&step))
                    .expect("matched rule applies");
                trace.push(step);
            }
            None => return (cur, trace),
        }
    }
}

fn preorder_find<T>(
    e: &HExpr,
    path: &mut Vec<usize>,
    f: &mut impl FnMut(&HExpr, &[usize]) -> Option<T>,
    found: &mut Option<T>,
) {
    if found.is_some() {
        return;
    }
    if let Some(t) = f(e, path) {
        *found = Some(t);
        return;
    }
    for (i, c) in e.children().into_iter().enumerate() {
        path.push(i);
        preorder_find(c, path, f, found);
        path.pop();
        if found.is_some() {
            return;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    Equal {
        samples: usize,
    },
    Counterexample {
        x: Vec<CarrierValue>,
        y1: Vec<CarrierValue>,
        y2: Vec<CarrierValue>,
    },
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Verdict::Equal { .. })
    }
}

/// Compare two operators on seeded random rational inputs.
pub fn check_extensional_equiv(
    e1: &HExpr,
    e2: &HExpr,
    samples: usize,
    seed: u64,
    env: &Env,
) -> Result<Verdict, HcolError> {
    let d1 = dims(e1)?;
    let d2 = dims(e2)?;
    if d1 != d2 {
        return Err(HcolError::DimMismatch {
            expected: d1.0,
            got: d2.0,
        });
    }
    let mut rng = sample::rng(seed);
    for _ in 0..samples {
        let x = sample::random_rationals(&mut rng, d1.0);
        if let Some(v) = compare_at(e1, e2, &x, env)? {
            return Ok(v);
        }
    }
    Ok(Verdict::Equal { samples })
}

/// Compare on one explicit input.
pub fn compare_at(
    e1: &HExpr,
    e2: &HExpr,
    x: &[CarrierValue],
    env: &Env,
) -> Result<Option<Verdict>, HcolError> {
    let y1 = eval_hcol(e1, x, env)?;
    let y2 = eval_hcol(e2, x, env)?;
    Ok((y1 != y2).then(|| Verdict::Counterexample {
        x: x.to_vec(),
        y1,
        y2,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(xs: &[i64]) -> Vec<CarrierValue> {
        xs.iter().map(|&v| CarrierValue::int(v)).collect()
    }

    #[test]
    fn induction_and_inductor() {
        let env = Env::default();
        let e = HExpr::Induction {
            n: 3,
            f: ScalarFn::binary(CtOp::Plus),
            z: CarrierValue::int(0),
        };
        assert_eq!(eval_hcol(&e, &ints(&[2]), &env).unwrap(), ints(&[0, 2, 4]));
        let e = HExpr::Inductor {
            n: 2,
            f: ScalarFn::binary(CtOp::Plus),
            z: CarrierValue::int(0),
        };
        assert_eq!(eval_hcol(&e, &ints(&[2]), &env).unwrap(), ints(&[4]));
    }

    #[test]
    fn reduction_is_right_fold() {
        let e = HExpr::Reduction {
            n: 3,
            f: ScalarFn::binary(CtOp::Sub),
            z: CarrierValue::int(0),
        };
        assert_eq!(
            eval_hcol(&e, &ints(&[1, 2, 3]), &Env::default()).unwrap(),
            ints(&[2])
        );
    }

    #[test]
    fn dims_of_composites() {
        let f = HExpr::InfinityNorm { n: 3 };
        let g = HExpr::VMinus { n: 3 };
        assert_eq!(dims(&HExpr::compose(f.clone(), g.clone())).unwrap(), (6, 1));
        assert!(dims(&HExpr::compose(g, f)).is_err());
        assert_eq!(dims(&HExpr::ChebyshevDistance { n: 2 }).unwrap(), (4, 1));
    }

    #[test]
    fn wrong_rule_rejected() {
        let e = HExpr::ScalarProd { n: 3 };
        let err = apply_breakdown_trace(&e, &[TraceStep::new("R3", &[])]).unwrap_err();
        assert_eq!(err.step, 0);
        assert!(r1(&HExpr::Pointwise {
            n: 1,
            f: ScalarFn::unary_abs().with_index()
        })
        .is_none());
    }
}
