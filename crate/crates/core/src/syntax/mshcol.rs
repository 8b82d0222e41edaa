use crate::mshcol::{msh_dims, MFamily, MSHExpr};
use crate::scalar::{print_fn, print_nat, Names, NatExpr};

use super::common::*;
use super::hcol::split_program;
use super::reader::{read_one, ParseError, Sexp};

/// A parsed MSHCOL program.
#[derive(Debug, Clone, PartialEq)]
pub struct MProgram {
    pub globals: Vec<(String, usize)>,
    pub expr: MSHExpr,
}

pub fn parse_mshcol_program(text: &str) -> Result<MProgram, ParseError> {
    let s = read_one(text)?;
    let (globals, body) = split_program(&s)?;
    let scope = Scope::with_globals(globals.clone());
    let expr = parse_mshexpr(body, &scope)?;
    msh_dims(&expr).map_err(|e| s.err(e.to_string()))?;
    Ok(MProgram { globals, expr })
}

pub fn print_mshexpr(e: &MSHExpr, scope: &Scope) -> String {
    let vars = scope.var_names();
    let names = Names { vars: &vars };
    let nat = |x: &NatExpr| print_nat(x, &names, "k");
    let p = |x: &MSHExpr| print_mshexpr(x, scope);
    let fam = |f: &MFamily| {
        let j = scope.fresh();
        format!("{} ({j}) {}", f.n, print_mshexpr(&f.body, &scope.push(&j)))
    };
    match e {
        MSHExpr::Embed { n, b } => format!("(embed {n} {})", nat(b)),
        MSHExpr::Pick { n, b } => format!("(pick {n} {})", nat(b)),
        MSHExpr::Pointwise { n, f } => format!("(mpointwise {n} {})", print_fn(f, &names)),
        MSHExpr::BinOp { n, f } => format!("(mbinop {n} {})", print_fn(f, &names)),
        MSHExpr::Inductor { n, f, z } => {
            format!("(minductor {} {} {z})", nat(n), print_fn(f, &names))
        }
        MSHExpr::Apply2Union { dot, f, g } => {
            format!("(apply2union {} {} {})", print_fn(dot, &names), p(f), p(g))
        }
        MSHExpr::Compose(f, g) => format!("(mcompose {} {})", p(f), p(g)),
        MSHExpr::IReduction { dot, z, fam: f } => {
            format!("(ireduction {} {z} {})", print_fn(dot, &names), fam(f))
        }
        MSHExpr::IUnion { fam: f } => format!("(iunion {})", fam(f)),
    }
}

pub fn print_mshcol_program(p: &MProgram) -> String {
    let scope = Scope::with_globals(p.globals.clone());
    let body = print_mshexpr(&p.expr, &scope);
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

fn parse_family(
    n: &Sexp,
    binder: &Sexp,
    body: &Sexp,
    scope: &Scope,
) -> Result<MFamily, ParseError> {
    let n = parse_usize(n)?;
    let j = parse_binder(binder)?;
    Ok(MFamily {
        n,
        body: Box::new(parse_mshexpr(body, &scope.push(&j))?),
    })
}

pub fn parse_mshexpr(s: &Sexp, scope: &Scope) -> Result<MSHExpr, ParseError> {
    let (h, args) = s
        .form()
        .ok_or_else(|| s.err("expected an MSHCOL operator form"))?;
    let a = |n| expect_args(s, args, n);
    let sub = |x: &Sexp| parse_mshexpr(x, scope).map(Box::new);
    Ok(match h {
        "embed" | "pick" => {
            let a = a(2)?;
            let (n, b) = (parse_usize(&a[0])?, parse_nat(&a[1], scope, None)?);
            if h == "embed" {
                MSHExpr::Embed { n, b }
            } else {
                MSHExpr::Pick { n, b }
            }
        }
        "mpointwise" => {
            let a = a(2)?;
            MSHExpr::Pointwise {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 1, true)?,
            }
        }
        "mbinop" => {
            let a = a(2)?;
            MSHExpr::BinOp {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 2, true)?,
            }
        }
        "minductor" => {
            let a = a(3)?;
            MSHExpr::Inductor {
                n: parse_nat(&a[0], scope, None)?,
                f: parse_fn(&a[1], scope, 2, false)?,
                z: parse_carrier(&a[2])?,
            }
        }
        "apply2union" => {
            let a = a(3)?;
            MSHExpr::Apply2Union {
                dot: parse_fn(&a[0], scope, 2, false)?,
                f: sub(&a[1])?,
                g: sub(&a[2])?,
            }
        }
        "mcompose" => {
            let a = a(2)?;
            MSHExpr::Compose(sub(&a[0])?, sub(&a[1])?)
        }
        "ireduction" => {
            let a = a(5)?;
            MSHExpr::IReduction {
                dot: parse_fn(&a[0], scope, 2, false)?,
                z: parse_carrier(&a[1])?,
                fam: parse_family(&a[2], &a[3], &a[4], scope)?,
            }
        }
        "iunion" => {
            let a = a(3)?;
            MSHExpr::IUnion {
                fam: parse_family(&a[0], &a[1], &a[2], scope)?,
            }
        }
        _ => return Err(s.err(format!("unknown MSHCOL operator `{h}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "(program (globals (a 3)) (ireduction plus 0 3 (j0) (mcompose (mpointwise 1 (fun i v (mul v (nth a j0)))) (minductor j0 mult 1))))";
        let p = parse_mshcol_program(text).unwrap();
        assert_eq!(print_mshcol_program(&p), text);
        let text = "(iunion 2 (j0) (mcompose (embed 2 j0) (pick 5 (add 1 (mul 2 j0)))))";
        let p = parse_mshcol_program(text).unwrap();
        assert_eq!(print_mshcol_program(&p), text);
    }

    #[test]
    fn sigma_only_forms_are_rejected() {
        let e = parse_mshcol_program("(lift (scalarprod 2))").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
    }
}
