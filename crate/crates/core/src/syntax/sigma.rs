use crate::carrier::CarrierValue;
use crate::scalar::{print_fn, print_nat, Names, NatExpr};
use crate::sigma::{Family, SHExpr};

use super::common::*;
use super::hcol::{parse_hexpr, print_hexpr};
use super::reader::{ParseError, Sexp};

fn opt_s(s: &CarrierValue) -> String {
    if s.is_zero() {
        String::new()
    } else {
        format!(" {s}")
    }
}

pub fn print_shexpr(e: &SHExpr, scope: &Scope) -> String {
    let vars = scope.var_names();
    let names = Names { vars: &vars };
    let nat = |x: &NatExpr| print_nat(x, &names, "k");
    let p = |x: &SHExpr| print_shexpr(x, scope);
    let fam = |f: &Family| {
        let j = scope.fresh();
        format!("{} ({j}) {}", f.n, print_shexpr(&f.body, &scope.push(&j)))
    };
    match e {
        SHExpr::Embed { s, n, b } => format!("(embed {n} {}{})", nat(b), opt_s(s)),
        SHExpr::Pick { s, n, b } => format!("(pick {n} {}{})", nat(b), opt_s(s)),
        SHExpr::Scatter { s, n, m, map } => {
            format!("(scatter {n} {m} (map k {}){})", nat(map), opt_s(s))
        }
        SHExpr::Gather { s, n, m, map } => {
            format!("(gather {n} {m} (map k {}){})", nat(map), opt_s(s))
        }
        SHExpr::Lift { h, s } => format!("(lift {}{})", print_hexpr(h, scope), opt_s(s)),
        SHExpr::Pointwise { n, f } => format!("(shpointwise {n} {})", print_fn(f, &names)),
        SHExpr::BinOp { n, f } => format!("(shbinop {n} {})", print_fn(f, &names)),
        SHExpr::Inductor { n, f, z } => {
            format!("(shinductor {} {} {z})", nat(n), print_fn(f, &names))
        }
        SHExpr::Apply2Union { dot, f, g } => {
            format!("(apply2union {} {} {})", print_fn(dot, &names), p(f), p(g))
        }
        SHExpr::SafeCast(f) => format!("(safecast {})", p(f)),
        SHExpr::UnSafeCast(f) => format!("(unsafecast {})", p(f)),
        SHExpr::Compose(f, g) => format!("(shcompose {} {})", p(f), p(g)),
        SHExpr::IReduction { dot, z, fam: f } => {
            format!("(ireduction {} {z} {})", print_fn(dot, &names), fam(f))
        }
        SHExpr::IUnion { dot, fam: f } => format!("(iunion {} {})", print_fn(dot, &names), fam(f)),
    }
}

fn parse_family(n: &Sexp, binder: &Sexp, body: &Sexp, scope: &Scope) -> Result<Family, ParseError> {
    let n = parse_usize(n)?;
    let j = parse_binder(binder)?;
    Ok(Family {
        n,
        body: Box::new(parse_shexpr(body, &scope.push(&j))?),
    })
}

fn opt_carrier(args: &[Sexp], k: usize) -> Result<CarrierValue, ParseError> {
    match args.get(k) {
        Some(s) => parse_carrier(s),
        None => Ok(CarrierValue::int(0)),
    }
}

pub fn parse_shexpr(s: &Sexp, scope: &Scope) -> Result<SHExpr, ParseError> {
    let (h, args) = s
        .form()
        .ok_or_else(|| s.err("expected a Σ-HCOL operator form"))?;
    let between = |lo: usize, hi: usize| {
        if args.len() < lo || args.len() > hi {
            Err(s.err(format!(
                "expected {lo} to {hi} arguments, got {}",
                args.len()
            )))
        } else {
            Ok(args)
        }
    };
    let sub = |x: &Sexp| parse_shexpr(x, scope).map(Box::new);
    Ok(match h {
        "embed" | "pick" => {
            let a = between(2, 3)?;
            let (n, b, sv) = (
                parse_usize(&a[0])?,
                parse_nat(&a[1], scope, None)?,
                opt_carrier(a, 2)?,
            );
            if h == "embed" {
                SHExpr::Embed { s: sv, n, b }
            } else {
                SHExpr::Pick { s: sv, n, b }
            }
        }
        "scatter" | "gather" => {
            let a = between(3, 4)?;
            let (n, m, map, sv) = (
                parse_usize(&a[0])?,
                parse_usize(&a[1])?,
                parse_map(&a[2], scope)?,
                opt_carrier(a, 3)?,
            );
            if h == "scatter" {
                SHExpr::Scatter { s: sv, n, m, map }
            } else {
                SHExpr::Gather { s: sv, n, m, map }
            }
        }
        "lift" => {
            let a = between(1, 2)?;
            SHExpr::Lift {
                h: parse_hexpr(&a[0], scope)?,
                s: opt_carrier(a, 1)?,
            }
        }
        "shpointwise" => {
            let a = expect_args(s, args, 2)?;
            SHExpr::Pointwise {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 1, true)?,
            }
        }
        "shbinop" => {
            let a = expect_args(s, args, 2)?;
            SHExpr::BinOp {
                n: parse_usize(&a[0])?,
                f: parse_fn(&a[1], scope, 2, true)?,
            }
        }
        "shinductor" => {
            let a = expect_args(s, args, 3)?;
            SHExpr::Inductor {
                n: parse_nat(&a[0], scope, None)?,
                f: parse_fn(&a[1], scope, 2, false)?,
                z: parse_carrier(&a[2])?,
            }
        }
        "apply2union" => {
            let a = expect_args(s, args, 3)?;
            SHExpr::Apply2Union {
                dot: parse_fn(&a[0], scope, 2, false)?,
                f: sub(&a[1])?,
                g: sub(&a[2])?,
            }
        }
        "safecast" => SHExpr::SafeCast(sub(&expect_args(s, args, 1)?[0])?),
        "unsafecast" => SHExpr::UnSafeCast(sub(&expect_args(s, args, 1)?[0])?),
        "shcompose" => {
            let a = expect_args(s, args, 2)?;
            SHExpr::Compose(sub(&a[0])?, sub(&a[1])?)
        }
        "ireduction" => {
            let a = expect_args(s, args, 5)?;
            SHExpr::IReduction {
                dot: parse_fn(&a[0], scope, 2, false)?,
                z: parse_carrier(&a[1])?,
                fam: parse_family(&a[2], &a[3], &a[4], scope)?,
            }
        }
        "iunion" => {
            let a = expect_args(s, args, 4)?;
            SHExpr::IUnion {
                dot: parse_fn(&a[0], scope, 2, false)?,
                fam: parse_family(&a[1], &a[2], &a[3], scope)?,
            }
        }
        _ => return Err(s.err(format!("unknown Σ-HCOL operator `{h}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::reader::read_one;

    #[test]
    fn round_trip() {
        let scope = Scope::with_globals(vec![("a".into(), 3)]);
        let text = "(ireduction plus 0 3 (j0) (shcompose (shpointwise 1 (fun i v (mul v (nth a j0)))) (shinductor j0 mult 1)))";
        let e = parse_shexpr(&read_one(text).unwrap(), &scope).unwrap();
        assert_eq!(print_shexpr(&e, &scope), text);
        let text =
            "(iunion plus 2 (j0) (shcompose (embed 2 j0) (pick 5 (add 1 (add j0 (mul 2 j0))))))";
        let e = parse_shexpr(&read_one(text).unwrap(), &scope).unwrap();
        assert_eq!(print_shexpr(&e, &scope), text);
    }
}
