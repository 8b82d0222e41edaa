use crate::carrier::{CarrierValue, CtOp};
use crate::scalar::{NatExpr, ScalarExpr, ScalarFn, VecRef, FN_ARGS};

use super::reader::{ParseError, Sexp};

/// Names in scope: declared globals (with lengths) and family binders.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub globals: Vec<(String, usize)>,
    pub binders: Vec<String>,
}

impl Scope {
    pub fn with_globals(globals: Vec<(String, usize)>) -> Self {
        Scope {
            globals,
            binders: Vec::new(),
        }
    }

    pub fn push(&self, name: &str) -> Scope {
        let mut s = self.clone();
        s.binders.push(name.to_string());
        s
    }

    /// De Bruijn index of a binder name.
    pub fn binder(&self, name: &str) -> Option<usize> {
        self.binders.iter().rev().position(|b| b == name)
    }

    /// De Bruijn index and length of a global name.
    pub fn global(&self, name: &str) -> Option<(usize, usize)> {
        let k = self.globals.iter().position(|(g, _)| g == name)?;
        Some((self.binders.len() + k, self.globals[k].1))
    }

    /// Names for printing, innermost last.
    pub fn var_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.globals.iter().rev().map(|(g, _)| g.clone()).collect();
        v.extend(self.binders.iter().cloned());
        v
    }

    /// Fresh binder name for the current depth.
    pub fn fresh(&self) -> String {
        format!("j{}", self.binders.len())
    }

    /// Length of the global at de Bruijn index `r`, if it is one.
    pub fn global_len(&self, r: usize) -> Option<usize> {
        r.checked_sub(self.binders.len())
            .and_then(|k| self.globals.get(k))
            .map(|g| g.1)
    }
}

pub fn expect_args<'a>(s: &Sexp, args: &'a [Sexp], n: usize) -> Result<&'a [Sexp], ParseError> {
    if args.len() != n {
        return Err(s.err(format!("expected {n} arguments, got {}", args.len())));
    }
    Ok(args)
}

pub fn parse_usize(s: &Sexp) -> Result<usize, ParseError> {
    s.atom()
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| s.err("expected a natural number"))
}

pub fn parse_u64(s: &Sexp) -> Result<u64, ParseError> {
    s.atom()
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| s.err("expected a natural number"))
}

pub fn parse_carrier(s: &Sexp) -> Result<CarrierValue, ParseError> {
    let a = s.atom().ok_or_else(|| s.err("expected a constant"))?;
    a.parse().map_err(|e| s.err(format!("{e}")))
}

pub fn parse_nat(s: &Sexp, scope: &Scope, idx: Option<&str>) -> Result<NatExpr, ParseError> {
    match s {
        Sexp::Atom(a, _) => {
            if let Ok(n) = a.parse::<u64>() {
                return Ok(NatExpr::Const(n));
            }
            if Some(a.as_str()) == idx {
                return Ok(NatExpr::Idx);
            }
            scope
                .binder(a)
                .map(NatExpr::Var)
                .ok_or_else(|| s.err(format!("unbound natural `{a}`")))
        }
        Sexp::List(..) => {
            let (h, args) = s
                .form()
                .ok_or_else(|| s.err("expected a natural expression"))?;
            if h == "var" {
                let args = expect_args(s, args, 1)?;
                return Ok(NatExpr::Var(parse_usize(&args[0])?));
            }
            let args = expect_args(s, args, 2)?;
            let a = Box::new(parse_nat(&args[0], scope, idx)?);
            let b = Box::new(parse_nat(&args[1], scope, idx)?);
            Ok(match h {
                "add" | "plus" => NatExpr::Plus(a, b),
                "sub" | "minus" => NatExpr::Minus(a, b),
                "mul" | "mult" => NatExpr::Mult(a, b),
                "div" => NatExpr::Div(a, b),
                "mod" => NatExpr::Mod(a, b),
                "min" => NatExpr::Min(a, b),
                "max" => NatExpr::Max(a, b),
                _ => return Err(s.err(format!("unknown natural operator `{h}`"))),
            })
        }
    }
}

pub fn parse_vec(s: &Sexp, scope: &Scope) -> Result<(VecRef, usize), ParseError> {
    match s {
        Sexp::Atom(a, _) => {
            let (r, len) = scope
                .global(a)
                .ok_or_else(|| s.err(format!("unknown global `{a}`")))?;
            Ok((VecRef::Global(r), len))
        }
        Sexp::List(..) => {
            let (h, args) = s.form().ok_or_else(|| s.err("expected a vector"))?;
            if h != "vec" {
                return Err(s.err("expected `(vec ...)` or a global name"));
            }
            let xs = args
                .iter()
                .map(parse_carrier)
                .collect::<Result<Vec<_>, _>>()?;
            let n = xs.len();
            Ok((VecRef::Lit(xs), n))
        }
    }
}

fn binop_name(h: &str) -> Option<CtOp> {
    Some(match h {
        "add" | "plus" => CtOp::Plus,
        "sub" => CtOp::Sub,
        "mul" | "mult" => CtOp::Mult,
        "min" => CtOp::Min,
        "max" => CtOp::Max,
        "lt" | "zless" => CtOp::Zless,
        _ => return None,
    })
}

pub fn parse_scalar(
    s: &Sexp,
    scope: &Scope,
    params: &[String],
    idx: Option<&str>,
) -> Result<ScalarExpr, ParseError> {
    match s {
        Sexp::Atom(a, _) => {
            if let Some(k) = params.iter().position(|p| p == a) {
                return Ok(ScalarExpr::Arg(k));
            }
            parse_carrier(s)
                .map(ScalarExpr::Const)
                .map_err(|_| s.err(format!("unbound scalar `{a}`")))
        }
        Sexp::List(..) => {
            let (h, args) = s
                .form()
                .ok_or_else(|| s.err("expected a scalar expression"))?;
            match h {
                "abs" => {
                    let args = expect_args(s, args, 1)?;
                    Ok(ScalarExpr::abs(parse_scalar(&args[0], scope, params, idx)?))
                }
                "nth" => {
                    let args = expect_args(s, args, 2)?;
                    let (v, _) = parse_vec(&args[0], scope)?;
                    Ok(ScalarExpr::Nth(v, parse_nat(&args[1], scope, idx)?))
                }
                "arg" => {
                    let args = expect_args(s, args, 1)?;
                    Ok(ScalarExpr::Arg(parse_usize(&args[0])?))
                }
                _ => {
                    let op = binop_name(h)
                        .ok_or_else(|| s.err(format!("unknown scalar operator `{h}`")))?;
                    let args = expect_args(s, args, 2)?;
                    Ok(ScalarExpr::bin(
                        op,
                        parse_scalar(&args[0], scope, params, idx)?,
                        parse_scalar(&args[1], scope, params, idx)?,
                    ))
                }
            }
        }
    }
}

/// A scalar function: a builtin name or `(fun [i] a b BODY)`, where the
/// index parameter is present exactly when `indexed`.
pub fn parse_fn(
    s: &Sexp,
    scope: &Scope,
    arity: usize,
    indexed: bool,
) -> Result<ScalarFn, ParseError> {
    if let Some(a) = s.atom() {
        let mut f = if a == "abs" {
            if arity != 1 {
                return Err(s.err("`abs` is unary"));
            }
            ScalarFn::unary_abs()
        } else {
            let op = binop_name(a).ok_or_else(|| s.err(format!("unknown function `{a}`")))?;
            if arity != 2 {
                return Err(s.err(format!("`{a}` is binary, expected arity {arity}")));
            }
            ScalarFn::binary(op)
        };
        f.indexed = indexed;
        return Ok(f);
    }
    let (h, args) = s.form().ok_or_else(|| s.err("expected a function"))?;
    if h != "fun" {
        return Err(s.err("expected `(fun ...)` or a builtin function name"));
    }
    let want = arity + usize::from(indexed);
    if args.len() != want + 1 {
        return Err(s.err(format!("function needs {want} parameters and a body")));
    }
    let names = args[..want]
        .iter()
        .map(|p| {
            p.atom()
                .map(String::from)
                .ok_or_else(|| p.err("parameter must be a symbol"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (idx, params) = if indexed {
        (Some(names[0].as_str()), &names[1..])
    } else {
        (None, &names[..])
    };
    let body = parse_scalar(&args[want], scope, params, idx)?;
    Ok(ScalarFn {
        arity,
        indexed,
        body,
    })
}

/// Parse `(map k EXPR)` index maps.
pub fn parse_map(s: &Sexp, scope: &Scope) -> Result<NatExpr, ParseError> {
    let (h, args) = s.form().ok_or_else(|| s.err("expected `(map k EXPR)`"))?;
    if h != "map" {
        return Err(s.err("expected `(map k EXPR)`"));
    }
    let args = expect_args(s, args, 2)?;
    let k = args[0]
        .atom()
        .ok_or_else(|| args[0].err("expected a symbol"))?;
    parse_nat(&args[1], scope, Some(k))
}

/// Parse a `(j)` binder list with one name.
pub fn parse_binder(s: &Sexp) -> Result<String, ParseError> {
    match s.list() {
        Some([Sexp::Atom(a, _)]) => Ok(a.clone()),
        _ => Err(s.err("expected a binder `(name)`")),
    }
}

pub fn fn_param_names(f: &ScalarFn) -> Vec<&'static str> {
    FN_ARGS[..f.arity].to_vec()
}

/// Parse `(globals (a 3) (b 2))`.
pub fn parse_globals(s: &Sexp) -> Result<Vec<(String, usize)>, ParseError> {
    let (h, args) = s.form().ok_or_else(|| s.err("expected `(globals ...)`"))?;
    if h != "globals" {
        return Err(s.err("expected `(globals ...)`"));
    }
    args.iter()
        .map(|g| match g.list() {
            Some([Sexp::Atom(n, _), len]) => Ok((n.clone(), parse_usize(len)?)),
            _ => Err(g.err("expected `(name length)`")),
        })
        .collect()
}
