//! The dynamic window monitor: `p(v_r) < d_inf(p_r, p_o)` with
//! `p(x) = a2 x^2 + a1 x + a0`, input `[v_r, x_r, y_r, x_o, y_o]`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rand::Rng;

use crate::analysis::error::{
    interval_error_bound_traced, rational_up_f64, safety_margin, BoundSummary, Interval,
};
use crate::analysis::gappa::gappa_problem;
use crate::analysis::SExpr;
use crate::carrier::CarrierValue;
use crate::hcol::{ConstVec, HExpr, TraceStep};
use crate::sample::SampleRng;

pub const INPUT_DIM: usize = 5;
pub const OUTPUT_DIM: usize = 1;

/// Global parameter vector `a`, de Bruijn index 0.
pub fn globals() -> Vec<(String, usize)> {
    vec![("a".to_string(), 3)]
}

pub fn hcol() -> HExpr {
    HExpr::tless(
        HExpr::EvalPolynomial {
            a: ConstVec::global(0, 3),
        },
        HExpr::ChebyshevDistance { n: 2 },
    )
}

/// Breakdown trace: split the comparison, then each side.
pub fn breakdown_trace() -> Vec<TraceStep> {
    vec![
        TraceStep::new("R4", &[]),
        TraceStep::new("R2", &[1, 0]),
        TraceStep::new("R3", &[1, 1]),
    ]
}

/// Polynomial side alone (input `v_r`).
pub fn lhs_hcol() -> HExpr {
    HExpr::EvalPolynomial {
        a: ConstVec::global(0, 3),
    }
}

/// Distance side alone (input `[x_r, y_r, x_o, y_o]`).
pub fn rhs_hcol() -> HExpr {
    HExpr::ChebyshevDistance { n: 2 }
}

/// Closed interval with rational endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Range {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl Range {
    pub fn new(lo: (i64, i64), hi: (i64, i64)) -> Self {
        Range {
            lo: rat(lo.0, lo.1),
            hi: rat(hi.0, hi.1),
        }
    }

    pub fn sample(&self, rng: &mut SampleRng) -> f64 {
        let lo = crate::carrier::rational_to_f64(&self.lo);
        let hi = crate::carrier::rational_to_f64(&self.hi);
        rng.gen_range(lo..=hi)
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Problem constants and dynamic inputs with their admissible ranges.
pub struct Ranges {
    pub v_max: Range,
    pub accel: Range,
    pub brake: Range,
    pub eps: Range,
    pub v_r: Range,
    pub coord: Range,
}

pub fn ranges() -> Ranges {
    Ranges {
        v_max: Range::new((0, 1), (20, 1)),
        accel: Range::new((0, 1), (5, 1)),
        brake: Range::new((1, 1), (6, 1)),
        eps: Range::new((1, 100), (1, 10)),
        v_r: Range::new((0, 1), (20, 1)),
        coord: Range::new((-5000, 1), (5000, 1)),
    }
}

/// Coefficients from the problem constants, evaluated with the same
/// expression shape in any exact or floating carrier.
pub fn coefficients_f64(v: f64, a: f64, b: f64, e: f64) -> [f64; 3] {
    let k = a / b + 1.0;
    [
        k * (a / 2.0 * e * e + e * v),
        v / b + e * k,
        1.0 / (2.0 * b),
    ]
}

pub fn coefficients_exact(
    v: &BigRational,
    a: &BigRational,
    b: &BigRational,
    e: &BigRational,
) -> [BigRational; 3] {
    let one = rat(1, 1);
    let two = rat(2, 1);
    let k = a / b + &one;
    [
        &k * (a / &two * e * e + e * v),
        v / b + e * &k,
        one / (two * b),
    ]
}

/// Coefficient ranges by enumerating the corners of the constant box.
/// Every coefficient is monotone in each constant over the box, so corner
/// extremes are the true extremes.
pub fn coefficient_ranges() -> [(BigRational, BigRational); 3] {
    let r = ranges();
    let mut lo: [Option<BigRational>; 3] = [None, None, None];
    let mut hi: [Option<BigRational>; 3] = [None, None, None];
    for v in [&r.v_max.lo, &r.v_max.hi] {
        for a in [&r.accel.lo, &r.accel.hi] {
            for b in [&r.brake.lo, &r.brake.hi] {
                for e in [&r.eps.lo, &r.eps.hi] {
                    let c = coefficients_exact(v, a, b, e);
                    for k in 0..3 {
                        if lo[k].as_ref().is_none_or(|x| c[k] < *x) {
                            lo[k] = Some(c[k].clone());
                        }
                        if hi[k].as_ref().is_none_or(|x| c[k] > *x) {
                            hi[k] = Some(c[k].clone());
                        }
                    }
                }
            }
        }
    }
    let take = |k: usize| (lo[k].clone().unwrap(), hi[k].clone().unwrap());
    [take(0), take(1), take(2)]
}

/// One random admissible problem: coefficients in binary64 and the input.
pub struct Sample {
    pub a: [f64; 3],
    pub x: [f64; 5],
}

pub fn random_sample(rng: &mut SampleRng) -> Sample {
    let r = ranges();
    let a = coefficients_f64(
        r.v_max.sample(rng),
        r.accel.sample(rng),
        r.brake.sample(rng),
        r.eps.sample(rng),
    );
    let x = [
        r.v_r.sample(rng),
        r.coord.sample(rng),
        r.coord.sample(rng),
        r.coord.sample(rng),
        r.coord.sample(rng),
    ];
    Sample { a, x }
}

pub fn exact(xs: &[f64]) -> Vec<CarrierValue> {
    xs.iter()
        .map(|&x| CarrierValue::exact_of_f64(x).expect("finite sample"))
        .collect()
}

/// The monitor evaluated directly over rationals: 1 when safe.
pub fn direct_formula(a: &[BigRational], x: &[BigRational]) -> BigRational {
    let v = &x[0];
    let p = &a[2] * v * v + &a[1] * v + &a[0];
    let dx = (&x[1] - &x[3]).abs();
    let dy = (&x[2] - &x[4]).abs();
    let d = if dx < dy { dy } else { dx };
    if p < d {
        rat(1, 1)
    } else {
        rat(0, 1)
    }
}

/// The monitor compiled to RHCOL through the standard pipeline.
pub fn rhcol() -> crate::lowering::Compiled {
    let b =
        crate::hcol::apply_breakdown_trace(&hcol(), &breakdown_trace()).expect("breakdown applies");
    let (n, _) = crate::sigma::normalize(&crate::sigma::lift_hcol(&b, CarrierValue::int(0)));
    let m = crate::lowering::shcol_to_mshcol(&n).expect("normal form is lowerable");
    crate::lowering::mshcol_to_dhcol(&m, &[3]).expect("DynWin compiles")
}

pub fn fhcol() -> crate::lowering::Compiled {
    let mut c = rhcol();
    c.op = crate::dhcol::translate_rhcol_to_fhcol(&c.op).expect("only 0 and 1 constants");
    c
}

/// Symbolic result with `a` at address 0 and X at address 1, so `SVar 0..2`
/// are the coefficients and `SVar 3..7` the input.
pub fn symbolic() -> Result<std::sync::Arc<SExpr>, crate::analysis::SymbolicError> {
    let c = fhcol();
    let tl = c.top_level(
        vec![vec![CarrierValue::int(0); 3]],
        crate::memory::MemBlock::new(),
        crate::memory::MemBlock::new(),
    );
    let (ctx, _) = tl.build();
    crate::analysis::symbolic_exec(
        &c.op,
        &ctx,
        &[(0, 3), (tl.x_addr(), INPUT_DIM)],
        tl.y_addr(),
        0,
    )
}

/// Input ranges per symbolic variable. Coefficient ranges come from the
/// constant box and are widened outward by a relative `2^-40` so that
/// coefficients computed in binary64 stay inside them.
pub fn var_ranges() -> BTreeMap<usize, Interval> {
    let widen = BigRational::new(BigInt::one(), BigInt::one() << 40usize);
    let mut env = BTreeMap::new();
    for (k, (lo, hi)) in coefficient_ranges().into_iter().enumerate() {
        env.insert(
            k,
            Interval::exact(&lo - lo.abs() * &widen, &hi + hi.abs() * &widen),
        );
    }
    let r = ranges();
    env.insert(3, Interval::exact(r.v_r.lo.clone(), r.v_r.hi.clone()));
    for k in 4..8 {
        env.insert(k, Interval::exact(r.coord.lo.clone(), r.coord.hi.clone()));
    }
    env
}

pub fn var_names() -> BTreeMap<usize, String> {
    ["a0", "a1", "a2", "v", "xr", "yr", "xo", "yo"]
        .iter()
        .enumerate()
        .map(|(k, s)| (k, s.to_string()))
        .collect()
}

/// Both sides of the comparison with their bounds and the margin.
#[derive(Debug, Clone)]
pub struct ErrorAnalysis {
    pub sexpr: std::sync::Arc<SExpr>,
    pub lhs: std::sync::Arc<SExpr>,
    pub rhs: std::sync::Arc<SExpr>,
    pub lhs_bound: Interval,
    pub rhs_bound: Interval,
    pub lhs_subterms: Vec<(String, Interval)>,
    pub rhs_subterms: Vec<(String, Interval)>,
    pub eps: BigRational,
}

pub fn error_analysis() -> Result<ErrorAnalysis, String> {
    let sexpr = symbolic().map_err(|e| e.to_string())?;
    let (lhs, rhs) = match &*sexpr {
        SExpr::ZLess(a, b) => (a.clone(), b.clone()),
        other => return Err(format!("expected a comparison, got {other}")),
    };
    let env = var_ranges();
    let (lhs_bound, lhs_subterms) =
        interval_error_bound_traced(&lhs, &env).map_err(|e| e.to_string())?;
    let (rhs_bound, rhs_subterms) =
        interval_error_bound_traced(&rhs, &env).map_err(|e| e.to_string())?;
    let eps = safety_margin(&lhs_bound.e, &rhs_bound.e);
    Ok(ErrorAnalysis {
        sexpr,
        lhs,
        rhs,
        lhs_bound,
        rhs_bound,
        lhs_subterms,
        rhs_subterms,
        eps,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SubtermBound {
    pub expr: String,
    #[serde(flatten)]
    pub bound: BoundSummary,
}

/// JSON form of [`ErrorAnalysis`]; error bounds are rounded upward.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AnalysisReport {
    pub sexpr: String,
    pub inputs: Vec<(String, BoundSummary)>,
    pub lhs: BoundSummary,
    pub rhs: BoundSummary,
    pub eps: f64,
    pub lhs_subterms: Vec<SubtermBound>,
    pub rhs_subterms: Vec<SubtermBound>,
}

impl ErrorAnalysis {
    pub fn report(&self) -> AnalysisReport {
        let subs = |v: &[(String, Interval)]| {
            v.iter()
                .map(|(e, i)| SubtermBound {
                    expr: e.clone(),
                    bound: i.into(),
                })
                .collect()
        };
        let names = var_names();
        AnalysisReport {
            sexpr: self.sexpr.to_string(),
            inputs: var_ranges()
                .iter()
                .map(|(k, i)| (names[k].clone(), i.into()))
                .collect(),
            lhs: (&self.lhs_bound).into(),
            rhs: (&self.rhs_bound).into(),
            eps: rational_up_f64(&self.eps),
            lhs_subterms: subs(&self.lhs_subterms),
            rhs_subterms: subs(&self.rhs_subterms),
        }
    }

    /// Gappa problems for both sides of the comparison.
    pub fn gappa(&self) -> String {
        let (env, names) = (var_ranges(), var_names());
        format!(
            "{}\n{}",
            gappa_problem("lhs", &self.lhs, &env, &names),
            gappa_problem("rhs", &self.rhs, &env, &names)
        )
    }
}
