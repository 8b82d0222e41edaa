use crate::hcol::{dims, ConstVec, HExpr};
use crate::scalar::{print_fn, Names, VecRef};

use super::common::*;
use super::reader::{read_one, ParseError, Sexp};

/// A parsed HCOL program: declared globals and the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HProgram {
    pub globals: Vec<(String, usize)>,
    pub expr: HExpr,
}

pub fn parse_hcol_program(text: &str) -> Result<HProgram, ParseError> {
    let s = read_one(text)?;
    let (globals, body) = split_program(&s)?;
    let scope = Scope::with_globals(globals.clone());
    let expr = parse_hexpr(body, &scope)?;
    dims(&expr).map_err(|e| s.err(e.to_string()))?;
    Ok(HProgram { globals, expr })
}

/// `(program (globals ...) BODY)` or a bare body.
pub fn split_program(s: &Sexp) -> Result<(Vec<(String, usize)>, &Sexp), ParseError> {
    match s.form() {
        Some(("program", args)) => match args {
            [g, body] => Ok((parse_globals(g)?, body)),
            [body] => Ok((Vec::new(), body)),
            _ => Err(s.err("expected `(program (globals ...) BODY)`")),
        },
        _ => Ok((Vec::new(), s)),
    }
}

fn parse_cv(s: &Sexp, scope: &Scope) -> Result<ConstVec, ParseError> {
    let (src, len) = parse_vec(s, scope)?;
    Ok(ConstVec { src, len })
}

pub fn parse_hexpr(s: &Sexp, scope: &Scope) -> Result<HExpr, ParseError> {
    let (h, args) = s
        .form()
        .ok_or_else(|| s.err("expected an HCOL operator form"))?;
    let a = |n| expect_args(s, args, n);
    let sub = |x: &Sexp| parse_hexpr(x, scope).map(Box::new);
    Ok(match h {
        "pointwise" => {
            let a = a(2)?;
            HExpr::Pointwise {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 1, true)?,
            }
        }
        "atomic" => HExpr::Atomic {
            f: parse_fn(&a(1)?[0], scope, 1, false)?,
        },
        "scalarprod" => HExpr::ScalarProd {
            n: parse_usize(&a(1)?[0])?,
        },
        "binop" => {
            let a = a(2)?;
            HExpr::BinOp {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 2, true)?,
            }
        }
        "reduction" => {
            let a = a(3)?;
            HExpr::Reduction {
                f: parse_fn(&a[0], scope, 2, false)?,
                z: parse_carrier(&a[1])?,
                n: parse_usize(&a[2])?,
            }
        }
        "evalpoly" => HExpr::EvalPolynomial {
            a: parse_cv(&a(1)?[0], scope)?,
        },
        "prepend" | "append" => {
            let a = a(2)?;
            let (n, v) = (parse_usize(&a[0])?, parse_cv(&a[1], scope)?);
            if h == "prepend" {
                HExpr::Prepend { n, a: v }
            } else {
                HExpr::Append { n, a: v }
            }
        }
        "monomials" => HExpr::MonomialEnumerator {
            n: parse_usize(&a(1)?[0])?,
        },
        "inductor" | "induction" => {
            let a = a(3)?;
            let (n, f, z) = (
                parse_usize(&a[0])?,
                parse_fn(&a[1], scope, 2, false)?,
                parse_carrier(&a[2])?,
            );
            if h == "inductor" {
                HExpr::Inductor { n, f, z }
            } else {
                HExpr::Induction { n, f, z }
            }
        }
        "infnorm" => HExpr::InfinityNorm {
            n: parse_usize(&a(1)?[0])?,
        },
        "chebyshev" => HExpr::ChebyshevDistance {
            n: parse_usize(&a(1)?[0])?,
        },
        "vminus" => HExpr::VMinus {
            n: parse_usize(&a(1)?[0])?,
        },
        "cross" | "stack" | "compose" | "tless" => {
            let a = a(2)?;
            let (f, g) = (sub(&a[0])?, sub(&a[1])?);
            match h {
                "cross" => HExpr::Cross(f, g),
                "stack" => HExpr::Stack(f, g),
                "compose" => HExpr::Compose(f, g),
                _ => HExpr::TLess(f, g),
            }
        }
        _ => return Err(s.err(format!("unknown HCOL operator `{h}`"))),
    })
}

pub fn print_vecref(v: &VecRef, names: &Names) -> String {
    match v {
        VecRef::Global(r) => names
            .vars
            .get(names.vars.len().wrapping_sub(1 + r))
            .cloned()
            .unwrap_or(format!("(var {r})")),
        VecRef::Lit(xs) => {
            let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("(vec {})", items.join(" "))
        }
    }
}

pub fn print_hexpr(e: &HExpr, scope: &Scope) -> String {
    let vars = scope.var_names();
    let names = Names { vars: &vars };
    let p = |x: &HExpr| print_hexpr(x, scope);
    match e {
        HExpr::Pointwise { n, f } => format!("(pointwise {n} {})", print_fn(f, &names)),
        HExpr::Atomic { f } => format!("(atomic {})", print_fn(f, &names)),
        HExpr::ScalarProd { n } => format!("(scalarprod {n})"),
        HExpr::BinOp { n, f } => format!("(binop {n} {})", print_fn(f, &names)),
        HExpr::Reduction { n, f, z } => format!("(reduction {} {z} {n})", print_fn(f, &names)),
        HExpr::EvalPolynomial { a } => format!("(evalpoly {})", print_vecref(&a.src, &names)),
        HExpr::Prepend { n, a } => format!("(prepend {n} {})", print_vecref(&a.src, &names)),
        HExpr::Append { n, a } => format!("(append {n} {})", print_vecref(&a.src, &names)),
        HExpr::MonomialEnumerator { n } => format!("(monomials {n})"),
        HExpr::Inductor { n, f, z } => format!("(inductor {n} {} {z})", print_fn(f, &names)),
        HExpr::Induction { n, f, z } => format!("(induction {n} {} {z})", print_fn(f, &names)),
        HExpr::InfinityNorm { n } => format!("(infnorm {n})"),
        HExpr::ChebyshevDistance { n } => format!("(chebyshev {n})"),
        HExpr::VMinus { n } => format!("(vminus {n})"),
        HExpr::Cross(f, g) => format!("(cross {} {})", p(f), p(g)),
        HExpr::Stack(f, g) => format!("(stack {} {})", p(f), p(g)),
        HExpr::Compose(f, g) => format!("(compose {} {})", p(f), p(g)),
        HExpr::TLess(f, g) => format!("(tless {} {})", p(f), p(g)),
    }
}

pub fn print_hcol_program(p: &HProgram) -> String {
    let scope = Scope::with_globals(p.globals.clone());
    let body = print_hexpr(&p.expr, &scope);
    if p.globals.is_empty() {
        body
    } else {
        let gs: Vec<String> = p
            .globals
            .iter()
            .map(|(n, l)| format!("({n} {l})"))
            .collect();
        format!("(program (globals {}) {body})", gs.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_scalarprod() {
        let p = parse_hcol_program("(scalarprod 3)").unwrap();
        assert_eq!(p.expr, HExpr::ScalarProd { n: 3 });
        assert_eq!(dims(&p.expr).unwrap(), (6, 1));
    }

    #[test]
    fn parse_r1_rhs() {
        let p =
            parse_hcol_program("(compose (reduction plus 0 3) (binop 3 (fun i a b (mul a b))))")
                .unwrap();
        let rhs = crate::hcol::builtin_rules()[0].apply;
        let want = rhs(&HExpr::ScalarProd { n: 3 }).unwrap();
        let env = crate::scalar::Env::default();
        let v = crate::hcol::check_extensional_equiv(&p.expr, &want, 50, 3, &env).unwrap();
        assert!(v.is_equal());
    }

    #[test]
    fn truncated_input_fails() {
        assert!(parse_hcol_program("(compose (reduction").is_err());
        let e = parse_hcol_program("(scalarprod x)").unwrap_err();
        assert_eq!((e.line, e.col), (1, 13));
    }

    #[test]
    fn round_trip_with_globals() {
        let text = "(program (globals (a 3)) (tless (evalpoly a) (chebyshev 2)))";
        let p = parse_hcol_program(text).unwrap();
        assert_eq!(print_hcol_program(&p), text);
    }
}
