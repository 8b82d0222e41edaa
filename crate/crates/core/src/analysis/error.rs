use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use super::SExpr;
use crate::carrier::{f64_to_rational, rational_to_f64};

/// Exact binary value `m * 2^e`; every finite double is one.
#[derive(Debug, Clone)]
pub struct Dyadic {
    pub m: BigInt,
    pub e: i64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic {
            m: BigInt::zero(),
            e: 0,
        }
    }

    pub fn one() -> Self {
        Dyadic {
            m: BigInt::one(),
            e: 0,
        }
    }

    pub fn of_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let m = BigInt::from(m);
        Some(Dyadic {
            m: if neg { -m } else { m },
            e,
        })
    }

    fn align(&self, other: &Dyadic) -> (BigInt, BigInt, i64) {
        match self.e.cmp(&other.e) {
            Ordering::Equal => (self.m.clone(), other.m.clone(), self.e),
            Ordering::Greater => (
                &self.m << (self.e - other.e) as usize,
                other.m.clone(),
                other.e,
            ),
            Ordering::Less => (
                self.m.clone(),
                &other.m << (other.e - self.e) as usize,
                self.e,
            ),
        }
    }

    pub fn add(&self, o: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(o);
        Dyadic { m: a + b, e }
    }

    pub fn sub(&self, o: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(o);
        Dyadic { m: a - b, e }
    }

    pub fn mul(&self, o: &Dyadic) -> Dyadic {
        Dyadic {
            m: &self.m * &o.m,
            e: self.e + o.e,
        }
    }

    pub fn abs(&self) -> Dyadic {
        Dyadic {
            m: self.m.abs(),
            e: self.e,
        }
    }

    pub fn cmp_value(&self, o: &Dyadic) -> Ordering {
        let (a, b, _) = self.align(o);
        a.cmp(&b)
    }

    pub fn to_rational(&self) -> BigRational {
        let two = BigInt::from(2);
        if self.e >= 0 {
            BigRational::from_integer(&self.m * num_traits::pow(two, self.e as usize))
        } else {
            BigRational::new(self.m.clone(), num_traits::pow(two, (-self.e) as usize))
        }
    }

    /// `|self| <= p/q` for a non-negative rational bound.
    pub fn abs_le(&self, bound: &BigRational) -> bool {
        let m = self.m.abs();
        let (p, q) = (bound.numer(), bound.denom());
        if self.e >= 0 {
            (m << self.e as usize) * q <= *p
        } else {
            m * q <= p << (-self.e) as usize
        }
    }
}

/// Exact evaluation; `SZLess` yields one or zero.
pub fn eval_exact(e: &SExpr, env: &[Dyadic]) -> Option<Dyadic> {
    use SExpr::*;
    Some(match e {
        ConstZero => Dyadic::zero(),
        ConstOne => Dyadic::one(),
        Var(i) => env.get(*i)?.clone(),
        Plus(a, b) => eval_exact(a, env)?.add(&eval_exact(b, env)?),
        Sub(a, b) => eval_exact(a, env)?.sub(&eval_exact(b, env)?),
        Mult(a, b) => eval_exact(a, env)?.mul(&eval_exact(b, env)?),
        Abs(a) => eval_exact(a, env)?.abs(),
        Min(a, b) | Max(a, b) => {
            let (x, y) = (eval_exact(a, env)?, eval_exact(b, env)?);
            let x_first = match (e, x.cmp_value(&y)) {
                (Min(..), Ordering::Greater) | (Max(..), Ordering::Less) => false,
                _ => true,
            };
            if x_first {
                x
            } else {
                y
            }
        }
        ZLess(a, b) => {
            if eval_exact(a, env)?.cmp_value(&eval_exact(b, env)?) == Ordering::Less {
                Dyadic::one()
            } else {
                Dyadic::zero()
            }
        }
    })
}

/// Binary64 evaluation, one rounding per arithmetic node.
pub fn eval_f64(e: &SExpr, env: &[f64]) -> Option<f64> {
    use SExpr::*;
    Some(match e {
        ConstZero => 0.0,
        ConstOne => 1.0,
        Var(i) => *env.get(*i)?,
        Plus(a, b) => eval_f64(a, env)? + eval_f64(b, env)?,
        Sub(a, b) => eval_f64(a, env)? - eval_f64(b, env)?,
        Mult(a, b) => eval_f64(a, env)? * eval_f64(b, env)?,
        Abs(a) => eval_f64(a, env)?.abs(),
        Min(a, b) => {
            let (x, y) = (eval_f64(a, env)?, eval_f64(b, env)?);
            if y < x {
                y
            } else {
                x
            }
        }
        Max(a, b) => {
            let (x, y) = (eval_f64(a, env)?, eval_f64(b, env)?);
            if x < y {
                y
            } else {
                x
            }
        }
        ZLess(a, b) => {
            if eval_f64(a, env)? < eval_f64(b, env)? {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Range of the exact value plus an absolute bound `e` on the distance of
/// the binary64 value from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: BigRational,
    pub hi: BigRational,
    pub e: BigRational,
}

impl Interval {
    pub fn exact(lo: BigRational, hi: BigRational) -> Self {
        assert!(lo <= hi, "empty interval");
        Interval {
            lo,
            hi,
            e: BigRational::zero(),
        }
    }

    pub fn point(v: BigRational) -> Self {
        Interval::exact(v.clone(), v)
    }

    pub fn of_f64(lo: f64, hi: f64) -> Self {
        Interval::exact(
            f64_to_rational(lo).expect("finite"),
            f64_to_rational(hi).expect("finite"),
        )
    }

    pub fn mag(&self) -> BigRational {
        std::cmp::max(self.lo.abs(), self.hi.abs())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:e}, {:e}] ± {:e}",
            rational_to_f64(&self.lo),
            rational_to_f64(&self.hi),
            rational_to_f64(&self.e)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("no range for SVar {0}")]
    UnboundedRange(usize),
    #[error("comparisons are analyzed by the safety margin, not bounded")]
    Comparison,
}

/// Unit roundoff of binary64, round to nearest.
pub fn unit_roundoff() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << 53usize)
}

/// Smallest subnormal spacing over two: the absolute error of a product
/// that lands in the subnormal range.
fn underflow_slack() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << 1075usize)
}

fn min_max(xs: [BigRational; 4]) -> (BigRational, BigRational) {
    let mut lo = xs[0].clone();
    let mut hi = xs[0].clone();
    for x in &xs[1..] {
        if *x < lo {
            lo = x.clone();
        }
        if *x > hi {
            hi = x.clone();
        }
    }
    (lo, hi)
}

/// Forward propagation with the standard rounding model. Additions of an
/// exact zero and multiplications by an exact one are exact; every other
/// `+`, `-`, `*` adds `u` times the largest magnitude the computed result
/// can take. `abs`, `min` and `max` add no rounding.
pub fn interval_error_bound(
    e: &SExpr,
    env: &BTreeMap<usize, Interval>,
) -> Result<Interval, BoundError> {
    let mut sub = Vec::new();
    bound_rec(e, env, &mut sub)
}

/// As [`interval_error_bound`], also listing the interval of every
/// subterm in post-order.
pub fn interval_error_bound_traced(
    e: &SExpr,
    env: &BTreeMap<usize, Interval>,
) -> Result<(Interval, Vec<(String, Interval)>), BoundError> {
    let mut sub = Vec::new();
    let r = bound_rec(e, env, &mut sub)?;
    Ok((r, sub))
}

fn bound_rec(
    e: &SExpr,
    env: &BTreeMap<usize, Interval>,
    sub: &mut Vec<(String, Interval)>,
) -> Result<Interval, BoundError> {
    use SExpr::*;
    let u = unit_roundoff();
    let rounded = |lo: BigRational, hi: BigRational, prop: BigRational| {
        let mag = std::cmp::max(lo.abs(), hi.abs());
        let e = &prop + &u * (mag + &prop);
        Interval { lo, hi, e }
    };
    let r = match e {
        ConstZero => Interval::point(BigRational::zero()),
        ConstOne => Interval::point(BigRational::one()),
        Var(i) => env.get(i).cloned().ok_or(BoundError::UnboundedRange(*i))?,
        Plus(a, b) | Sub(a, b) => {
            let (x, y) = (bound_rec(a, env, sub)?, bound_rec(b, env, sub)?);
            let (lo, hi) = match e {
                Plus(..) => (&x.lo + &y.lo, &x.hi + &y.hi),
                _ => (&x.lo - &y.hi, &x.hi - &y.lo),
            };
            let prop = &x.e + &y.e;
            if matches!(**b, ConstZero) || (matches!(e, Plus(..)) && matches!(**a, ConstZero)) {
                Interval { lo, hi, e: prop }
            } else {
                rounded(lo, hi, prop)
            }
        }
        Mult(a, b) => {
            let (x, y) = (bound_rec(a, env, sub)?, bound_rec(b, env, sub)?);
            let (lo, hi) = min_max([&x.lo * &y.lo, &x.lo * &y.hi, &x.hi * &y.lo, &x.hi * &y.hi]);
            if matches!(**a, ConstOne) {
                Interval { lo, hi, e: y.e }
            } else if matches!(**b, ConstOne) {
                Interval { lo, hi, e: x.e }
            } else {
                let prop = x.mag() * &y.e + y.mag() * &x.e + &x.e * &y.e;
                let mut r = rounded(lo, hi, prop);
                r.e += underflow_slack();
                r
            }
        }
        Abs(a) => {
            let x = bound_rec(a, env, sub)?;
            let (lo, hi) = if x.lo >= BigRational::zero() {
                (x.lo.clone(), x.hi.clone())
            } else if x.hi <= BigRational::zero() {
                (-x.hi.clone(), -x.lo.clone())
            } else {
                (BigRational::zero(), x.mag())
            };
            Interval { lo, hi, e: x.e }
        }
        Min(a, b) | Max(a, b) => {
            let (x, y) = (bound_rec(a, env, sub)?, bound_rec(b, env, sub)?);
            let (lo, hi) = match e {
                Min(..) => (
                    std::cmp::min(&x.lo, &y.lo).clone(),
                    std::cmp::min(&x.hi, &y.hi).clone(),
                ),
                _ => (
                    std::cmp::max(&x.lo, &y.lo).clone(),
                    std::cmp::max(&x.hi, &y.hi).clone(),
                ),
            };
            Interval {
                lo,
                hi,
                e: std::cmp::max(x.e, y.e),
            }
        }
        ZLess(..) => return Err(BoundError::Comparison),
    };
    sub.push((e.to_string(), r.clone()));
    Ok(r)
}

/// Sum of the two sides' error bounds.
pub fn safety_margin(lhs_err: &BigRational, rhs_err: &BigRational) -> BigRational {
    lhs_err + rhs_err
}

/// One iff `b - a`, computed in binary64, is strictly above `eps`.
pub fn safe_zless(a: f64, b: f64, eps: f64) -> f64 {
    if b - a > eps {
        1.0
    } else {
        0.0
    }
}

/// Summary of a bound for reports.
#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub lo: f64,
    pub hi: f64,
    pub abs_error: f64,
}

impl From<&Interval> for BoundSummary {
    fn from(i: &Interval) -> Self {
        BoundSummary {
            lo: rational_to_f64(&i.lo),
            hi: rational_to_f64(&i.hi),
            abs_error: rational_up_f64(&i.e),
        }
    }
}

/// Upward-rounded double of a non-negative rational.
pub fn rational_up_f64(r: &BigRational) -> f64 {
    let f = rational_to_f64(r);
    match f64_to_rational(f) {
        Ok(q) if q >= *r => f,
        _ => f64::from_bits(f.to_bits() + 1),
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn v(i: usize) -> Arc<SExpr> {
        SExpr::var(i)
    }

    #[test]
    fn dyadic_round_trips_doubles() {
        for x in [0.0, -0.0, 1.5, -3.25e-300, 5e-324, f64::MAX, 0.1] {
            let d = Dyadic::of_f64(x).unwrap();
            assert_eq!(d.to_rational(), f64_to_rational(x).unwrap());
        }
    }

    #[test]
    fn exact_sum_differs_from_rounded_sum() {
        let e = SExpr::Plus(v(0), v(1));
        let env = [0.1, 0.2];
        let exact = eval_exact(
            &e,
            &[Dyadic::of_f64(0.1).unwrap(), Dyadic::of_f64(0.2).unwrap()],
        )
        .unwrap();
        let diff = Dyadic::of_f64(eval_f64(&e, &env).unwrap())
            .unwrap()
            .sub(&exact);
        assert!(!diff.m.is_zero());
        // 0.30000000000000004 is off by less than one half ulp of 0.3.
        assert!(diff.abs_le(&BigRational::new(1.into(), BigInt::one() << 55usize)));
    }

    #[test]
    fn single_sum_in_unit_box() {
        let e = SExpr::Plus(v(0), v(1));
        let env: BTreeMap<_, _> = [
            (0, Interval::of_f64(0.0, 1.0)),
            (1, Interval::of_f64(0.0, 1.0)),
        ]
        .into_iter()
        .collect();
        let r = interval_error_bound(&e, &env).unwrap();
        assert_eq!(r.e, unit_roundoff() * BigRational::from_integer(2.into()));
    }

    #[test]
    fn lone_variable_keeps_its_error() {
        let mut i = Interval::of_f64(-1.0, 1.0);
        i.e = BigRational::new(3.into(), 1000.into());
        let env: BTreeMap<_, _> = [(4, i.clone())].into_iter().collect();
        assert_eq!(interval_error_bound(&SExpr::Var(4), &env).unwrap(), i);
        assert_eq!(
            interval_error_bound(&SExpr::Var(5), &env),
            Err(BoundError::UnboundedRange(5))
        );
    }

    #[test]
    fn exact_neutral_elements() {
        let env: BTreeMap<_, _> = [(0, Interval::of_f64(-2.0, 3.0))].into_iter().collect();
        let e = SExpr::Plus(
            Arc::new(SExpr::ConstZero),
            Arc::new(SExpr::Mult(Arc::new(SExpr::ConstOne), v(0))),
        );
        assert!(interval_error_bound(&e, &env).unwrap().e.is_zero());
    }

    #[test]
    fn safe_zless_cases() {
        assert_eq!(safe_zless(1.0, 2.0, 1e-12), 1.0);
        assert_eq!(safe_zless(1.0, 1.0 + f64::EPSILON / 4.0, 1e-12), 0.0);
        assert_eq!(safe_zless(2.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn published_margin_sum() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let eps = safety_margin(&r(2, 10_000_000_000_000), &r(91, 100_000_000_000_000));
        assert_eq!(eps, r(111, 100_000_000_000_000));
        assert!(safety_margin(&r(0, 1), &r(0, 1)).is_zero());
    }
}
