use num_bigint::BigUint;

use crate::carrier::{CtOp, NatValue};
use crate::dhcol::{aop_name, AExpr, DSHOperator, MExpr, MemRef, NExpr, NOp, PExpr};
use crate::lowering::{Compiled, DSHType};
use crate::memory::MemBlock;

use super::common::*;
use super::reader::{read_one, ParseError, Sexp};

const AOPS: [CtOp; 6] = [
    CtOp::Plus,
    CtOp::Sub,
    CtOp::Mult,
    CtOp::Min,
    CtOp::Max,
    CtOp::Zless,
];

/// `(program [(globals (a 3) ...)] (io I O) OP)` with globals as pointers
/// in front of X and Y.
pub fn parse_dhcol_program(text: &str) -> Result<Compiled, ParseError> {
    let s = read_one(text)?;
    let args = match s.form() {
        Some(("program", args)) => args,
        _ => return Err(s.err("expected `(program [(globals ...)] (io I O) OP)`")),
    };
    let (globals, rest) = match args {
        [g, rest @ ..] if matches!(g.form(), Some(("globals", _))) => (parse_globals(g)?, rest),
        _ => (Vec::new(), args),
    };
    let [io, body] = rest else {
        return Err(s.err("expected `(io I O)` and an operator"));
    };
    let (i, o) = match io.form() {
        Some(("io", [i, o])) => (parse_usize(i)?, parse_usize(o)?),
        _ => return Err(io.err("expected `(io I O)`")),
    };
    Ok(Compiled {
        globals: globals
            .into_iter()
            .map(|(n, l)| (n, DSHType::Ptr(l)))
            .collect(),
        i,
        o,
        op: parse_dop(body)?,
    })
}

pub fn print_dhcol_program(c: &Compiled) -> String {
    let gs: Vec<String> = c
        .globals
        .iter()
        .map(|(n, t)| match t {
            DSHType::Ptr(l) => format!(" ({n} {l})"),
            DSHType::Nat => format!(" ({n} nat)"),
            DSHType::CType => format!(" ({n} ctype)"),
        })
        .collect();
    let globals = if gs.is_empty() {
        String::new()
    } else {
        format!("(globals{}) ", gs.concat())
    };
    format!(
        "(program {globals}(io {} {}) {})",
        c.i,
        c.o,
        print_dop(&c.op)
    )
}

fn nat(s: &Sexp) -> Result<NatValue, ParseError> {
    s.atom()
        .and_then(|a| a.parse::<BigUint>().ok())
        .map(NatValue::BigNat)
        .ok_or_else(|| s.err("expected a natural number"))
}

fn head<'a>(s: &'a Sexp, what: &str) -> Result<(&'a str, &'a [Sexp]), ParseError> {
    s.form().ok_or_else(|| s.err(format!("expected {what}")))
}

pub fn parse_nexpr(s: &Sexp) -> Result<NExpr, ParseError> {
    let (h, args) = head(s, "a natural expression")?;
    match h {
        "NVar" => Ok(NExpr::Var(parse_usize(&expect_args(s, args, 1)?[0])?)),
        "NConst" => Ok(NExpr::Const(nat(&expect_args(s, args, 1)?[0])?)),
        _ => {
            let op = NOp::ALL
                .into_iter()
                .find(|o| o.name() == h)
                .ok_or_else(|| s.err(format!("unknown natural operator `{h}`")))?;
            let a = expect_args(s, args, 2)?;
            Ok(NExpr::bin(op, parse_nexpr(&a[0])?, parse_nexpr(&a[1])?))
        }
    }
}

pub fn parse_pexpr(s: &Sexp) -> Result<PExpr, ParseError> {
    match s.form() {
        Some(("PVar", [k])) => Ok(PExpr(parse_usize(k)?)),
        _ => Err(s.err("expected `(PVar k)`")),
    }
}

pub fn parse_mexpr(s: &Sexp) -> Result<MExpr, ParseError> {
    let (h, args) = head(s, "a memory expression")?;
    match h {
        "MPtrDeref" => Ok(MExpr::PtrDeref(parse_pexpr(&expect_args(s, args, 1)?[0])?)),
        "MConst" => {
            let a = expect_args(s, args, 2)?;
            let cells = match a[0].form() {
                Some(("block", cells)) => cells,
                _ => return Err(a[0].err("expected `(block (k v) ...)`")),
            };
            let mut b = MemBlock::new();
            for c in cells {
                match c.list() {
                    Some([k, v]) => b.insert(parse_usize(k)?, parse_carrier(v)?),
                    _ => return Err(c.err("expected `(offset value)`")),
                }
            }
            Ok(MExpr::Const(b, nat(&a[1])?))
        }
        _ => Err(s.err(format!("unknown memory expression `{h}`"))),
    }
}

pub fn parse_aexpr(s: &Sexp) -> Result<AExpr, ParseError> {
    let (h, args) = head(s, "a value expression")?;
    match h {
        "AVar" => Ok(AExpr::Var(parse_usize(&expect_args(s, args, 1)?[0])?)),
        "AConst" => Ok(AExpr::Const(parse_carrier(&expect_args(s, args, 1)?[0])?)),
        "ANth" => {
            let a = expect_args(s, args, 2)?;
            Ok(AExpr::Nth(parse_mexpr(&a[0])?, parse_nexpr(&a[1])?))
        }
        "AAbs" => Ok(AExpr::Abs(Box::new(parse_aexpr(
            &expect_args(s, args, 1)?[0],
        )?))),
        _ => {
            let op = AOPS
                .into_iter()
                .find(|o| aop_name(*o) == h)
                .ok_or_else(|| s.err(format!("unknown value operator `{h}`")))?;
            let a = expect_args(s, args, 2)?;
            Ok(AExpr::bin(op, parse_aexpr(&a[0])?, parse_aexpr(&a[1])?))
        }
    }
}

fn parse_memref(s: &Sexp) -> Result<MemRef, ParseError> {
    match s.list() {
        Some([p, n]) => Ok(MemRef::new(parse_pexpr(p)?, parse_nexpr(n)?)),
        _ => Err(s.err("expected `((PVar k) OFFSET)`")),
    }
}

pub fn parse_dop(s: &Sexp) -> Result<DSHOperator, ParseError> {
    use DSHOperator::*;
    let (h, args) = head(s, "a DHCOL operator")?;
    let a = |n| expect_args(s, args, n);
    let sub = |x: &Sexp| parse_dop(x).map(Box::new);
    Ok(match h {
        "DSHNop" => {
            a(0)?;
            Nop
        }
        "DSHAssign" => {
            let a = a(2)?;
            Assign {
                src: parse_memref(&a[0])?,
                dst: parse_memref(&a[1])?,
            }
        }
        "DSHIMap" | "DSHBinOp" => {
            let a = a(4)?;
            let (n, x, y, f) = (
                nat(&a[0])?,
                parse_pexpr(&a[1])?,
                parse_pexpr(&a[2])?,
                parse_aexpr(&a[3])?,
            );
            if h == "DSHIMap" {
                IMap { n, x, y, f }
            } else {
                BinOp { n, x, y, f }
            }
        }
        "DSHMemMap2" => {
            let a = a(5)?;
            MemMap2 {
                n: nat(&a[0])?,
                x0: parse_pexpr(&a[1])?,
                x1: parse_pexpr(&a[2])?,
                y: parse_pexpr(&a[3])?,
                f: parse_aexpr(&a[4])?,
            }
        }
        "DSHPower" => {
            let a = a(5)?;
            Power {
                n: parse_nexpr(&a[0])?,
                src: parse_memref(&a[1])?,
                dst: parse_memref(&a[2])?,
                f: parse_aexpr(&a[3])?,
                init: parse_carrier(&a[4])?,
            }
        }
        "DSHLoop" => {
            let a = a(2)?;
            Loop {
                n: nat(&a[0])?,
                body: sub(&a[1])?,
            }
        }
        "DSHAlloc" => {
            let a = a(2)?;
            Alloc {
                size: nat(&a[0])?,
                body: sub(&a[1])?,
            }
        }
        "DSHMemInit" => {
            let a = a(2)?;
            MemInit {
                y: parse_pexpr(&a[0])?,
                value: parse_carrier(&a[1])?,
            }
        }
        "DSHSeq" => {
            let a = a(2)?;
            Seq(sub(&a[0])?, sub(&a[1])?)
        }
        _ => return Err(s.err(format!("unknown DHCOL operator `{h}`"))),
    })
}

pub fn print_nexpr(e: &NExpr) -> String {
    match e {
        NExpr::Var(k) => format!("(NVar {k})"),
        NExpr::Const(n) => format!("(NConst {n})"),
        NExpr::Bin(op, a, b) => format!("({} {} {})", op.name(), print_nexpr(a), print_nexpr(b)),
    }
}

fn print_mexpr(e: &MExpr) -> String {
    match e {
        MExpr::PtrDeref(p) => format!("(MPtrDeref (PVar {}))", p.0),
        MExpr::Const(b, n) => {
            let cells: String = b.iter().map(|(k, v)| format!(" ({k} {v})")).collect();
            format!("(MConst (block{cells}) {n})")
        }
    }
}

pub fn print_aexpr(e: &AExpr) -> String {
    match e {
        AExpr::Var(k) => format!("(AVar {k})"),
        AExpr::Const(c) => format!("(AConst {c})"),
        AExpr::Nth(m, n) => format!("(ANth {} {})", print_mexpr(m), print_nexpr(n)),
        AExpr::Abs(a) => format!("(AAbs {})", print_aexpr(a)),
        AExpr::Bin(op, a, b) => {
            format!("({} {} {})", aop_name(*op), print_aexpr(a), print_aexpr(b))
        }
    }
}

fn print_memref(r: &MemRef) -> String {
    format!("((PVar {}) {})", r.ptr.0, print_nexpr(&r.off))
}

pub fn print_dop(op: &DSHOperator) -> String {
    use DSHOperator::*;
    let p = |x: &PExpr| format!("(PVar {})", x.0);
    match op {
        Nop => "(DSHNop)".into(),
        Assign { src, dst } => format!("(DSHAssign {} {})", print_memref(src), print_memref(dst)),
        IMap { n, x, y, f } => format!("(DSHIMap {n} {} {} {})", p(x), p(y), print_aexpr(f)),
        BinOp { n, x, y, f } => format!("(DSHBinOp {n} {} {} {})", p(x), p(y), print_aexpr(f)),
        MemMap2 { n, x0, x1, y, f } => format!(
            "(DSHMemMap2 {n} {} {} {} {})",
            p(x0),
            p(x1),
            p(y),
            print_aexpr(f)
        ),
        Power {
            n,
            src,
            dst,
            f,
            init,
        } => {
            format!(
                "(DSHPower {} {} {} {} {init})",
                print_nexpr(n),
                print_memref(src),
                print_memref(dst),
                print_aexpr(f)
            )
        }
        Loop { n, body } => format!("(DSHLoop {n} {})", print_dop(body)),
        Alloc { size, body } => format!("(DSHAlloc {size} {})", print_dop(body)),
        MemInit { y, value } => format!("(DSHMemInit {} {value})", p(y)),
        Seq(a, b) => format!("(DSHSeq {} {})", print_dop(a), print_dop(b)),
    }
}
