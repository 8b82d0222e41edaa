use std::collections::BTreeMap;
use std::fmt::Write;

use super::error::Interval;
use super::SExpr;
use crate::carrier::rational_to_f64;

fn term(e: &SExpr, names: &dyn Fn(usize) -> String, rounded: bool) -> String {
    use SExpr::*;
    let r = |a: &SExpr| term(a, names, rounded);
    let rnd = |s: String| if rounded { format!("rnd({s})") } else { s };
    match e {
        ConstZero => "0".into(),
        ConstOne => "1".into(),
        Var(i) => names(*i),
        Plus(a, b) => rnd(format!("({} + {})", r(a), r(b))),
        Sub(a, b) => rnd(format!("({} - {})", r(a), r(b))),
        Mult(a, b) => rnd(format!("({} * {})", r(a), r(b))),
        Abs(a) => format!("|{}|", r(a)),
        // Gappa has no min/max; the caller splits these cases by hand.
        Min(a, b) => format!("min({}, {})", r(a), r(b)),
        Max(a, b) => format!("max({}, {})", r(a), r(b)),
        ZLess(a, b) => format!("({} < {})", r(a), r(b)),
    }
}

/// A Gappa problem asking for the absolute error of `e` over the given
/// input ranges. Export only: the text is for users who have Gappa.
pub fn gappa_problem(
    name: &str,
    e: &SExpr,
    env: &BTreeMap<usize, Interval>,
    var_names: &BTreeMap<usize, String>,
) -> String {
    let names = |i: usize| {
        var_names
            .get(&i)
            .cloned()
            .unwrap_or_else(|| format!("x{i}"))
    };
    let mut s = String::new();
    let _ = writeln!(s, "@rnd = float<ieee_64, ne>;");
    let _ = writeln!(s);
    let _ = writeln!(s, "{name} = {};", term(e, &names, true));
    let _ = writeln!(s, "M{name} = {};", term(e, &names, false));
    let _ = writeln!(s);
    let hyps: Vec<String> = env
        .iter()
        .map(|(i, r)| {
            format!(
                "{} in [{:e}, {:e}]",
                names(*i),
                rational_to_f64(&r.lo),
                rational_to_f64(&r.hi)
            )
        })
        .collect();
    let _ = writeln!(
        s,
        "{{ {}\n  -> |{name} - M{name}| in ? }}",
        hyps.join("\n  /\\ ")
    );
    s
}
