use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Arithmetic S-expression produced by symbolic execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SExpr {
    ConstZero,
    ConstOne,
    Var(usize),
    Plus(Arc<SExpr>, Arc<SExpr>),
    Sub(Arc<SExpr>, Arc<SExpr>),
    Mult(Arc<SExpr>, Arc<SExpr>),
    Abs(Arc<SExpr>),
    Min(Arc<SExpr>, Arc<SExpr>),
    Max(Arc<SExpr>, Arc<SExpr>),
    ZLess(Arc<SExpr>, Arc<SExpr>),
}

impl SExpr {
    pub fn var(i: usize) -> Arc<SExpr> {
        Arc::new(SExpr::Var(i))
    }

    pub fn children(&self) -> Vec<&Arc<SExpr>> {
        use SExpr::*;
        match self {
            ConstZero | ConstOne | Var(_) => vec![],
            Abs(a) => vec![a],
            Plus(a, b) | Sub(a, b) | Mult(a, b) | Min(a, b) | Max(a, b) | ZLess(a, b) => vec![a, b],
        }
    }

    fn tag(&self) -> &'static str {
        use SExpr::*;
        match self {
            ConstZero => "SConstZero",
            ConstOne => "SConstOne",
            Var(_) => "SVar",
            Plus(..) => "SPlus",
            Sub(..) => "SSub",
            Mult(..) => "SMult",
            Abs(_) => "SAbs",
            Min(..) => "SMin",
            Max(..) => "SMax",
            ZLess(..) => "SZLess",
        }
    }

    /// Variables in order of first occurrence (left to right).
    pub fn vars_in_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        if let SExpr::Var(i) = self {
            if !out.contains(i) {
                out.push(*i);
            }
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    /// Structural equality up to a consistent bijective renaming of variables.
    pub fn alpha_eq(&self, other: &SExpr) -> bool {
        let mut fwd = std::collections::HashMap::new();
        let mut bwd = std::collections::HashMap::new();
        alpha(self, other, &mut fwd, &mut bwd)
    }
}

fn alpha(
    a: &SExpr,
    b: &SExpr,
    fwd: &mut std::collections::HashMap<usize, usize>,
    bwd: &mut std::collections::HashMap<usize, usize>,
) -> bool {
    match (a, b) {
        (SExpr::Var(x), SExpr::Var(y)) => {
            let f = *fwd.entry(*x).or_insert(*y);
            let g = *bwd.entry(*y).or_insert(*x);
            f == *y && g == *x
        }
        _ => {
            if a.tag() != b.tag() {
                return false;
            }
            let (ca, cb) = (a.children(), b.children());
            ca.len() == cb.len() && ca.iter().zip(cb.iter()).all(|(x, y)| alpha(x, y, fwd, bwd))
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::ConstZero | SExpr::ConstOne => f.write_str(self.tag()),
            SExpr::Var(i) => write!(f, "(SVar {i})"),
            _ => {
                write!(f, "({}", self.tag())?;
                for c in self.children() {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Parse the textual form printed by `Display`, e.g.
/// `(SPlus SConstZero (SVar 3))`.
pub fn parse_sexpr(s: &str) -> Option<SExpr> {
    let toks: Vec<String> = s
        .replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(String::from)
        .collect();
    let mut pos = 0;
    let e = parse_at(&toks, &mut pos)?;
    (pos == toks.len()).then_some(e)
}

fn parse_at(t: &[String], pos: &mut usize) -> Option<SExpr> {
    let tok = t.get(*pos)?.clone();
    *pos += 1;
    match tok.as_str() {
        "SConstZero" => Some(SExpr::ConstZero),
        "SConstOne" => Some(SExpr::ConstOne),
        "(" => {
            let head = t.get(*pos)?.clone();
            *pos += 1;
            let e = if head == "SVar" {
                let i = t.get(*pos)?.parse().ok()?;
                *pos += 1;
                SExpr::Var(i)
            } else if head == "SAbs" {
                SExpr::Abs(Arc::new(parse_at(t, pos)?))
            } else {
                let a = Arc::new(parse_at(t, pos)?);
                let b = Arc::new(parse_at(t, pos)?);
                match head.as_str() {
                    "SPlus" => SExpr::Plus(a, b),
                    "SSub" => SExpr::Sub(a, b),
                    "SMult" => SExpr::Mult(a, b),
                    "SMin" => SExpr::Min(a, b),
                    "SMax" => SExpr::Max(a, b),
                    "SZLess" => SExpr::ZLess(a, b),
                    _ => return None,
                }
            };
            (t.get(*pos)? == ")").then_some(())?;
            *pos += 1;
            Some(e)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_parse_round_trip() {
        let s =
            "(SZLess (SPlus SConstZero (SVar 0)) (SMax (SAbs (SSub (SVar 1) (SVar 2))) SConstOne))";
        let e = parse_sexpr(s).unwrap();
        assert_eq!(e.to_string(), s);
    }

    #[test]
    fn alpha_equivalence() {
        let a = parse_sexpr("(SPlus (SVar 0) (SMult (SVar 1) (SVar 0)))").unwrap();
        let b = parse_sexpr("(SPlus (SVar 7) (SMult (SVar 3) (SVar 7)))").unwrap();
        let c = parse_sexpr("(SPlus (SVar 7) (SMult (SVar 7) (SVar 7)))").unwrap();
        assert!(a.alpha_eq(&b));
        assert!(!a.alpha_eq(&c));
        assert!(!c.alpha_eq(&a));
    }
}
