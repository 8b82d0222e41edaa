//! First-order scalar and index expressions used as operator parameters in
//! HCOL, Σ-HCOL and MSHCOL. Free variables are de Bruijn indices into an
//! [`Env`] holding family binders (naturals) and global vectors.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierError, CarrierValue, CtOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalarError {
    #[error("unbound variable {0}")]
    Unbound(usize),
    #[error("variable {0} is not a natural")]
    NotNat(usize),
    #[error("variable {0} is not a vector")]
    NotVec(usize),
    #[error("index parameter used outside an indexed function")]
    NoIndex,
    #[error("argument {0} missing")]
    NoArg(usize),
    #[error("vector index {0} out of range {1}")]
    OutOfRange(u64, usize),
    #[error("natural arithmetic overflow")]
    Overflow,
    #[error("division by zero")]
    DivZero,
    #[error(transparent)]
    Carrier(#[from] CarrierError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NatExpr {
    Const(u64),
    Var(usize),
    /// The implicit position parameter: element index of an indexed
    /// function or position of an index map.
    Idx,
    Plus(Box<NatExpr>, Box<NatExpr>),
    Minus(Box<NatExpr>, Box<NatExpr>),
    Mult(Box<NatExpr>, Box<NatExpr>),
    Div(Box<NatExpr>, Box<NatExpr>),
    Mod(Box<NatExpr>, Box<NatExpr>),
    Min(Box<NatExpr>, Box<NatExpr>),
    Max(Box<NatExpr>, Box<NatExpr>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VecRef {
    Global(usize),
    Lit(Vec<CarrierValue>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarExpr {
    Const(CarrierValue),
    Arg(usize),
    Nth(VecRef, NatExpr),
    Bin(CtOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Abs(Box<ScalarExpr>),
}

/// A scalar function with `arity` value arguments; `indexed` functions also
/// receive the element index as [`NatExpr::Idx`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFn {
    pub arity: usize,
    pub indexed: bool,
    pub body: ScalarExpr,
}

#[derive(Debug, Clone)]
pub enum EnvVal {
    Nat(u64),
    Vec(Arc<Vec<CarrierValue>>),
}

/// Evaluation environment. The last pushed entry has de Bruijn index 0.
#[derive(Debug, Clone, Default)]
pub struct Env {
    stack: Vec<EnvVal>,
}

impl Env {
    /// Environment holding globals `g0, g1, ...`, with `g0` at index 0.
    pub fn with_globals(globals: &[Vec<CarrierValue>]) -> Self {
        let stack = globals
            .iter()
            .rev()
            .map(|g| EnvVal::Vec(Arc::new(g.clone())))
            .collect();
        Env { stack }
    }

    pub fn push_nat(&self, n: u64) -> Env {
        let mut e = self.clone();
        e.stack.push(EnvVal::Nat(n));
        e
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn lookup(&self, r: usize) -> Result<&EnvVal, ScalarError> {
        if r >= self.stack.len() {
            return Err(ScalarError::Unbound(r));
        }
        Ok(&self.stack[self.stack.len() - 1 - r])
    }

    pub fn nat(&self, r: usize) -> Result<u64, ScalarError> {
        match self.lookup(r)? {
            EnvVal::Nat(n) => Ok(*n),
            EnvVal::Vec(_) => Err(ScalarError::NotNat(r)),
        }
    }

    pub fn vec(&self, r: usize) -> Result<&Arc<Vec<CarrierValue>>, ScalarError> {
        match self.lookup(r)? {
            EnvVal::Vec(v) => Ok(v),
            EnvVal::Nat(_) => Err(ScalarError::NotVec(r)),
        }
    }
}

impl NatExpr {
    pub fn var(r: usize) -> Self {
        NatExpr::Var(r)
    }
    pub fn plus(a: NatExpr, b: NatExpr) -> Self {
        NatExpr::Plus(Box::new(a), Box::new(b))
    }
    pub fn mult(a: NatExpr, b: NatExpr) -> Self {
        NatExpr::Mult(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, env: &Env, idx: Option<u64>) -> Result<u64, ScalarError> {
        use NatExpr::*;
        let bin = |a: &NatExpr, b: &NatExpr| -> Result<(u64, u64), ScalarError> {
            Ok((a.eval(env, idx)?, b.eval(env, idx)?))
        };
        match self {
            Const(n) => Ok(*n),
            Var(r) => env.nat(*r),
            Idx => idx.ok_or(ScalarError::NoIndex),
            Plus(a, b) => {
                let (x, y) = bin(a, b)?;
                x.checked_add(y).ok_or(ScalarError::Overflow)
            }
            Minus(a, b) => {
                let (x, y) = bin(a, b)?;
                Ok(x.saturating_sub(y))
            }
            Mult(a, b) => {
                let (x, y) = bin(a, b)?;
                x.checked_mul(y).ok_or(ScalarError::Overflow)
            }
            Div(a, b) => {
                let (x, y) = bin(a, b)?;
                x.checked_div(y).ok_or(ScalarError::DivZero)
            }
            Mod(a, b) => {
                let (x, y) = bin(a, b)?;
                x.checked_rem(y).ok_or(ScalarError::DivZero)
            }
            Min(a, b) => {
                let (x, y) = bin(a, b)?;
                Ok(x.min(y))
            }
            Max(a, b) => {
                let (x, y) = bin(a, b)?;
                Ok(x.max(y))
            }
        }
    }

    fn map_children(&self, f: &mut impl FnMut(&NatExpr) -> NatExpr) -> NatExpr {
        use NatExpr::*;
        let b = |x: &NatExpr, f: &mut dyn FnMut(&NatExpr) -> NatExpr| Box::new(f(x));
        match self {
            Const(_) | Var(_) | Idx => self.clone(),
            Plus(x, y) => Plus(b(x, f), b(y, f)),
            Minus(x, y) => Minus(b(x, f), b(y, f)),
            Mult(x, y) => Mult(b(x, f), b(y, f)),
            Div(x, y) => Div(b(x, f), b(y, f)),
            Mod(x, y) => Mod(b(x, f), b(y, f)),
            Min(x, y) => Min(b(x, f), b(y, f)),
            Max(x, y) => Max(b(x, f), b(y, f)),
        }
    }

    /// Add `d` to every free variable with index at least `cutoff`.
    pub fn shift(&self, cutoff: usize, d: usize) -> NatExpr {
        match self {
            NatExpr::Var(r) if *r >= cutoff => NatExpr::Var(r + d),
            NatExpr::Var(_) | NatExpr::Const(_) | NatExpr::Idx => self.clone(),
            _ => self.map_children(&mut |c| c.shift(cutoff, d)),
        }
    }

    /// Replace the position parameter.
    pub fn subst_idx(&self, by: &NatExpr) -> NatExpr {
        match self {
            NatExpr::Idx => by.clone(),
            NatExpr::Var(_) | NatExpr::Const(_) => self.clone(),
            _ => self.map_children(&mut |c| c.subst_idx(by)),
        }
    }

    /// Substitute a closed expression for variable `r` and lower the
    /// variables above it, as when a binder is instantiated.
    pub fn instantiate(&self, r: usize, by: &NatExpr) -> NatExpr {
        match self {
            NatExpr::Var(v) if *v == r => by.clone(),
            NatExpr::Var(v) if *v > r => NatExpr::Var(v - 1),
            NatExpr::Var(_) | NatExpr::Const(_) | NatExpr::Idx => self.clone(),
            _ => self.map_children(&mut |c| c.instantiate(r, by)),
        }
    }

    pub fn uses_idx(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, NatExpr::Idx));
        found
    }

    pub fn free_vars(&self, out: &mut Vec<usize>) {
        self.visit(&mut |e| {
            if let NatExpr::Var(r) = e {
                out.push(*r)
            }
        });
    }

    pub fn visit(&self, f: &mut impl FnMut(&NatExpr)) {
        use NatExpr::*;
        f(self);
        match self {
            Const(_) | Var(_) | Idx => {}
            Plus(a, b)
            | Minus(a, b)
            | Mult(a, b)
            | Div(a, b)
            | Mod(a, b)
            | Min(a, b)
            | Max(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Constant folding and unit laws; never changes the value.
    pub fn simplify(&self) -> NatExpr {
        use NatExpr::*;
        let s = self.map_children(&mut |c| c.simplify());
        match &s {
            Plus(a, b) => match (&**a, &**b) {
                (Const(x), Const(y)) if x.checked_add(*y).is_some() => Const(x + y),
                (Const(0), _) => (**b).clone(),
                (_, Const(0)) => (**a).clone(),
                _ => s,
            },
            Mult(a, b) => match (&**a, &**b) {
                (Const(x), Const(y)) if x.checked_mul(*y).is_some() => Const(x * y),
                (Const(0), _) | (_, Const(0)) => Const(0),
                (Const(1), _) => (**b).clone(),
                (_, Const(1)) => (**a).clone(),
                _ => s,
            },
            Minus(a, b) => match (&**a, &**b) {
                (Const(x), Const(y)) => Const(x.saturating_sub(*y)),
                (_, Const(0)) => (**a).clone(),
                _ => s,
            },
            _ => s,
        }
    }
}

impl ScalarExpr {
    pub fn arg(k: usize) -> Self {
        ScalarExpr::Arg(k)
    }
    pub fn bin(op: CtOp, a: ScalarExpr, b: ScalarExpr) -> Self {
        ScalarExpr::Bin(op, Box::new(a), Box::new(b))
    }
    pub fn abs(a: ScalarExpr) -> Self {
        ScalarExpr::Abs(Box::new(a))
    }

    pub fn eval(
        &self,
        env: &Env,
        idx: Option<u64>,
        args: &[CarrierValue],
    ) -> Result<CarrierValue, ScalarError> {
        match self {
            ScalarExpr::Const(c) => Ok(c.clone()),
            ScalarExpr::Arg(k) => args.get(*k).cloned().ok_or(ScalarError::NoArg(*k)),
            ScalarExpr::Nth(v, i) => {
                let i = i.eval(env, idx)?;
                let get = |xs: &[CarrierValue]| {
                    usize::try_from(i)
                        .ok()
                        .and_then(|k| xs.get(k).cloned())
                        .ok_or(ScalarError::OutOfRange(i, xs.len()))
                };
                match v {
                    VecRef::Global(r) => get(env.vec(*r)?),
                    VecRef::Lit(xs) => get(xs),
                }
            }
            ScalarExpr::Bin(op, a, b) => {
                let x = a.eval(env, idx, args)?;
                let y = b.eval(env, idx, args)?;
                Ok(crate::carrier::ct_arith(*op, &x, Some(&y))?)
            }
            ScalarExpr::Abs(a) => Ok(a.eval(env, idx, args)?.abs()?),
        }
    }

    pub fn map_nat(
        &self,
        f: &impl Fn(&NatExpr) -> NatExpr,
        fv: &impl Fn(usize) -> usize,
    ) -> ScalarExpr {
        match self {
            ScalarExpr::Const(_) | ScalarExpr::Arg(_) => self.clone(),
            ScalarExpr::Nth(v, i) => {
                let v = match v {
                    VecRef::Global(r) => VecRef::Global(fv(*r)),
                    VecRef::Lit(_) => v.clone(),
                };
                ScalarExpr::Nth(v, f(i))
            }
            ScalarExpr::Bin(op, a, b) => ScalarExpr::bin(*op, a.map_nat(f, fv), b.map_nat(f, fv)),
            ScalarExpr::Abs(a) => ScalarExpr::abs(a.map_nat(f, fv)),
        }
    }

    pub fn shift(&self, cutoff: usize, d: usize) -> ScalarExpr {
        self.map_nat(&|n| n.shift(cutoff, d), &|r| {
            if r >= cutoff {
                r + d
            } else {
                r
            }
        })
    }

    pub fn instantiate(&self, r: usize, by: &NatExpr) -> ScalarExpr {
        self.map_nat(&|n| n.instantiate(r, by), &|v| {
            if v > r {
                v - 1
            } else {
                v
            }
        })
    }

    /// Free variable indices referenced by the expression (vectors and naturals).
    pub fn free_vars(&self, out: &mut Vec<usize>) {
        match self {
            ScalarExpr::Const(_) | ScalarExpr::Arg(_) => {}
            ScalarExpr::Nth(v, i) => {
                if let VecRef::Global(r) = v {
                    out.push(*r);
                }
                i.free_vars(out);
            }
            ScalarExpr::Bin(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            ScalarExpr::Abs(a) => a.free_vars(out),
        }
    }

    pub fn constants(&self, out: &mut Vec<CarrierValue>) {
        match self {
            ScalarExpr::Const(c) => out.push(c.clone()),
            ScalarExpr::Arg(_) => {}
            ScalarExpr::Nth(v, _) => {
                if let VecRef::Lit(xs) = v {
                    out.extend(xs.iter().cloned())
                }
            }
            ScalarExpr::Bin(_, a, b) => {
                a.constants(out);
                b.constants(out);
            }
            ScalarExpr::Abs(a) => a.constants(out),
        }
    }
}

impl ScalarFn {
    /// Binary builtin ignoring any index: `op(a, b)`.
    pub fn binary(op: CtOp) -> Self {
        ScalarFn {
            arity: 2,
            indexed: false,
            body: ScalarExpr::bin(op, ScalarExpr::Arg(0), ScalarExpr::Arg(1)),
        }
    }

    /// Binary builtin that receives (and ignores) an index.
    pub fn binary_ignore_index(op: CtOp) -> Self {
        ScalarFn {
            arity: 2,
            indexed: true,
            body: ScalarExpr::bin(op, ScalarExpr::Arg(0), ScalarExpr::Arg(1)),
        }
    }

    pub fn unary_abs() -> Self {
        ScalarFn {
            arity: 1,
            indexed: false,
            body: ScalarExpr::abs(ScalarExpr::Arg(0)),
        }
    }

    pub fn apply(
        &self,
        env: &Env,
        idx: Option<u64>,
        args: &[CarrierValue],
    ) -> Result<CarrierValue, ScalarError> {
        self.body
            .eval(env, if self.indexed { idx } else { None }, args)
    }

    pub fn with_index(&self) -> ScalarFn {
        ScalarFn {
            indexed: true,
            ..self.clone()
        }
    }

    pub fn shift(&self, cutoff: usize, d: usize) -> ScalarFn {
        ScalarFn {
            body: self.body.shift(cutoff, d),
            ..self.clone()
        }
    }

    pub fn instantiate(&self, r: usize, by: &NatExpr) -> ScalarFn {
        ScalarFn {
            body: self.body.instantiate(r, by),
            ..self.clone()
        }
    }

    /// The builtin binary operation this function denotes, if any.
    pub fn as_builtin(&self) -> Option<CtOp> {
        match &self.body {
            ScalarExpr::Bin(op, a, b) if self.arity == 2 => (matches!(**a, ScalarExpr::Arg(0))
                && matches!(**b, ScalarExpr::Arg(1)))
            .then_some(*op),
            _ => None,
        }
    }
}

/// Names for printing: `names[names.len() - 1 - r]` names variable `r`.
pub struct Names<'a> {
    pub vars: &'a [String],
}

impl Names<'_> {
    fn var(&self, r: usize) -> String {
        if r < self.vars.len() {
            self.vars[self.vars.len() - 1 - r].clone()
        } else {
            format!("(var {r})")
        }
    }
}

pub fn print_nat(e: &NatExpr, names: &Names, idx_name: &str) -> String {
    use NatExpr::*;
    let b = |op: &str, x: &NatExpr, y: &NatExpr| {
        format!(
            "({op} {} {})",
            print_nat(x, names, idx_name),
            print_nat(y, names, idx_name)
        )
    };
    match e {
        Const(n) => n.to_string(),
        Var(r) => names.var(*r),
        Idx => idx_name.to_string(),
        Plus(x, y) => b("add", x, y),
        Minus(x, y) => b("sub", x, y),
        Mult(x, y) => b("mul", x, y),
        Div(x, y) => b("div", x, y),
        Mod(x, y) => b("mod", x, y),
        Min(x, y) => b("min", x, y),
        Max(x, y) => b("max", x, y),
    }
}

pub fn print_scalar(e: &ScalarExpr, names: &Names, idx_name: &str, args: &[&str]) -> String {
    match e {
        ScalarExpr::Const(c) => c.to_string(),
        ScalarExpr::Arg(k) => args
            .get(*k)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("(arg {k})")),
        ScalarExpr::Nth(v, i) => {
            let v = match v {
                VecRef::Global(r) => names.var(*r),
                VecRef::Lit(xs) => {
                    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                    format!("(vec {})", items.join(" "))
                }
            };
            format!("(nth {v} {})", print_nat(i, names, idx_name))
        }
        ScalarExpr::Bin(op, a, b) => {
            let name = match op {
                CtOp::Plus => "add",
                CtOp::Sub => "sub",
                CtOp::Mult => "mul",
                CtOp::Min => "min",
                CtOp::Max => "max",
                CtOp::Zless => "lt",
                CtOp::Abs => "abs",
            };
            format!(
                "({name} {} {})",
                print_scalar(a, names, idx_name, args),
                print_scalar(b, names, idx_name, args)
            )
        }
        ScalarExpr::Abs(a) => format!("(abs {})", print_scalar(a, names, idx_name, args)),
    }
}

/// Parameter names used when printing functions.
pub const FN_ARGS: [&str; 3] = ["v", "w", "u"];

pub fn print_fn(f: &ScalarFn, names: &Names) -> String {
    if let Some(op) = f.as_builtin() {
        let base = match op {
            CtOp::Plus => "plus",
            CtOp::Sub => "sub",
            CtOp::Mult => "mult",
            CtOp::Min => "min",
            CtOp::Max => "max",
            CtOp::Zless => "zless",
            CtOp::Abs => "abs",
        };
        return base.to_string();
    }
    if f.arity == 1 && matches!(&f.body, ScalarExpr::Abs(a) if matches!(**a, ScalarExpr::Arg(0))) {
        return "abs".to_string();
    }
    let args: Vec<&str> = FN_ARGS[..f.arity.min(FN_ARGS.len())].to_vec();
    let mut params = Vec::new();
    if f.indexed {
        params.push("i");
    }
    params.extend(args.iter());
    format!(
        "(fun {} {})",
        params.join(" "),
        print_scalar(&f.body, names, "i", &args)
    )
}

impl fmt::Display for NatExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_nat(self, &Names { vars: &[] }, "idx"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_indices() {
        let env = Env::with_globals(&[vec![CarrierValue::int(7)], vec![CarrierValue::int(8)]]);
        assert_eq!(env.vec(0).unwrap()[0], CarrierValue::int(7));
        let env = env.push_nat(3);
        assert_eq!(env.nat(0).unwrap(), 3);
        assert_eq!(env.vec(1).unwrap()[0], CarrierValue::int(7));
        assert!(env.nat(1).is_err());
    }

    #[test]
    fn nat_ops() {
        let e = NatExpr::Minus(Box::new(NatExpr::Const(2)), Box::new(NatExpr::Const(5)));
        assert_eq!(e.eval(&Env::default(), None).unwrap(), 0);
        let e = NatExpr::plus(
            NatExpr::Idx,
            NatExpr::mult(NatExpr::Const(2), NatExpr::Var(0)),
        );
        let env = Env::default().push_nat(4);
        assert_eq!(e.eval(&env, Some(1)).unwrap(), 9);
        assert_eq!(
            e.subst_idx(&NatExpr::Const(0)).simplify(),
            NatExpr::mult(NatExpr::Const(2), NatExpr::Var(0))
        );
    }

    #[test]
    fn shift_and_instantiate() {
        let e = NatExpr::plus(NatExpr::Var(0), NatExpr::Var(2));
        assert_eq!(
            e.shift(1, 1),
            NatExpr::plus(NatExpr::Var(0), NatExpr::Var(3))
        );
        assert_eq!(
            e.instantiate(0, &NatExpr::Const(5)),
            NatExpr::plus(NatExpr::Const(5), NatExpr::Var(1))
        );
    }
}
