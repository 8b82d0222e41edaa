use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use proptest::prelude::*;

use hcolc::analysis::error::{
    eval_exact, eval_f64, interval_error_bound, safe_zless, Dyadic, Interval,
};
use hcolc::analysis::{closure_trace, DSHIndexRange, SExpr};
use hcolc::carrier::{f64_to_rational, CarrierValue, CtOp, NatValue};
use hcolc::dhcol::{
    estimate_fuel, eval_dshoperator, eval_nexpr, translate_rhcol_to_fhcol, AExpr, Context,
    DSHOperator, NExpr, NOp, PExpr, TranslateError,
};
use hcolc::gen::{random_dhcol, random_hcol, DshGenConfig};
use hcolc::hcol::{auto_breakdown, check_extensional_equiv, dims, eval_hcol, HExpr};
use hcolc::llvmgen::{compile_w_main, emit_text, CodegenOptions, FSHCOLProgram};
use hcolc::lowering::{mshcol_to_dhcol, shcol_to_mshcol, VarResolver};
use hcolc::mshcol::{mem_block_to_svector, svector_to_mem_block};
use hcolc::sample;
use hcolc::scalar::{Env, ScalarFn};
use hcolc::sigma::{self, combine_flags, densify, sparsify, FlagsKind, Rtheta};

fn rat(n: i64, d: i64) -> CarrierValue {
    CarrierValue::rat(n, d.max(1))
}

fn flags(bits: u8) -> Rtheta {
    Rtheta {
        value: CarrierValue::int(0),
        is_struct: bits & 1 != 0,
        is_collision: bits & 2 != 0,
    }
}

fn with(f: (bool, bool)) -> Rtheta {
    Rtheta {
        value: CarrierValue::int(0),
        is_struct: f.0,
        is_collision: f.1,
    }
}

/// Small random arithmetic tree over variables 0..4.
fn sexpr() -> impl Strategy<Value = SExpr> {
    let leaf = prop_oneof![
        Just(SExpr::ConstZero),
        Just(SExpr::ConstOne),
        (0usize..4).prop_map(SExpr::Var)
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let b = (inner.clone(), inner.clone()).prop_map(|(a, b)| (Arc::new(a), Arc::new(b)));
        prop_oneof![
            b.clone().prop_map(|(a, b)| SExpr::Plus(a, b)),
            b.clone().prop_map(|(a, b)| SExpr::Sub(a, b)),
            b.clone().prop_map(|(a, b)| SExpr::Mult(a, b)),
            b.clone().prop_map(|(a, b)| SExpr::Min(a, b)),
            b.prop_map(|(a, b)| SExpr::Max(a, b)),
            inner.prop_map(|a| SExpr::Abs(Arc::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rationals_form_a_commutative_ring(a in -50i64..50, b in 1i64..9, c in -50i64..50, d in 1i64..9, e in -50i64..50) {
        let (x, y, z) = (rat(a, b), rat(c, d), rat(e, 7));
        prop_assert_eq!(x.plus(&y).unwrap(), y.plus(&x).unwrap());
        prop_assert_eq!(x.mult(&y).unwrap(), y.mult(&x).unwrap());
        prop_assert_eq!(x.plus(&y).unwrap().plus(&z).unwrap(), x.plus(&y.plus(&z).unwrap()).unwrap());
        prop_assert_eq!(x.mult(&y).unwrap().mult(&z).unwrap(), x.mult(&y.mult(&z).unwrap()).unwrap());
        prop_assert_eq!(x.mult(&y.plus(&z).unwrap()).unwrap(), x.mult(&y).unwrap().plus(&x.mult(&z).unwrap()).unwrap());
        prop_assert_eq!(x.plus(&CarrierValue::int(0)).unwrap(), x.clone());
        prop_assert_eq!(x.mult(&CarrierValue::int(1)).unwrap(), x.clone());
        prop_assert_eq!(x.plus(&x.mult(&CarrierValue::int(-1)).unwrap()).unwrap(), CarrierValue::int(0));
    }

    #[test]
    fn zless_is_irreflexive_and_abs_nonnegative(a in -1000i64..1000, b in 1i64..100, f in -1e6f64..1e6) {
        for v in [rat(a, b), CarrierValue::Binary64(f)] {
            prop_assert!(v.zless(&v).unwrap().is_zero());
            let zero = CarrierValue::zero(v.kind());
            prop_assert_ne!(v.abs().unwrap().partial_cmp_value(&zero), Some(std::cmp::Ordering::Less));
        }
    }

    #[test]
    fn flags_combine_is_a_monoid(a in 0u8..4, b in 0u8..4, c in 0u8..4) {
        for kind in [FlagsKind::Safe, FlagsKind::Unsafe] {
            let (x, y, z) = (flags(a), flags(b), flags(c));
            let left = combine_flags(kind, &with(combine_flags(kind, &x, &y)), &z);
            let right = combine_flags(kind, &x, &with(combine_flags(kind, &y, &z)));
            prop_assert_eq!(left, right);
            // A structural, collision-free cell is neutral.
            let unit = flags(1);
            prop_assert_eq!(combine_flags(kind, &unit, &x), (x.is_struct, x.is_collision));
            prop_assert_eq!(combine_flags(kind, &x, &unit), (x.is_struct, x.is_collision));
            let fresh = !x.is_struct && !y.is_struct && !x.is_collision && !y.is_collision;
            if fresh {
                prop_assert_eq!(combine_flags(kind, &x, &y).1, kind == FlagsKind::Safe);
            }
        }
    }

    #[test]
    fn svector_mem_block_round_trip(cells in prop::collection::vec(prop::option::of(-20i64..20), 0..12)) {
        let s = CarrierValue::int(0);
        let v: Vec<Rtheta> = cells
            .iter()
            .map(|c| match c {
                Some(k) => Rtheta::val(CarrierValue::int(*k)),
                None => Rtheta::structural(s.clone()),
            })
            .collect();
        let b = svector_to_mem_block(&v);
        prop_assert!(b.keys().all(|k| k < v.len()));
        prop_assert_eq!(mem_block_to_svector(&b, v.len(), &s).unwrap(), v);
    }

    #[test]
    fn resolver_algebra(r in 0usize..=64, n in 0usize..8, m in 1usize..8) {
        prop_assert_eq!(VarResolver::Id.resolve(r), r);
        prop_assert_eq!(VarResolver::Id.fake(1).resolve(r), r + 1);
        let parent = VarResolver::Id.fake(m);
        let lam = parent.clone().lambda(n);
        if r < n {
            prop_assert_eq!(lam.resolve(r), r);
        } else {
            prop_assert_eq!(lam.resolve(r), parent.resolve(r - n) + n);
        }
        prop_assert_eq!(parent.clone().fake(n).resolve(r), parent.resolve(r) + n);
    }

    #[test]
    fn nat_minus_truncates_or_wraps(a in any::<u64>(), b in any::<u64>()) {
        let e = |k: fn(u64) -> NatValue| NExpr::bin(NOp::Minus, NExpr::Const(k(a)), NExpr::Const(k(b)));
        let ctx = Context::new();
        let big = eval_nexpr(&e(NatValue::big), &ctx).unwrap();
        prop_assert_eq!(big, NatValue::big(a.saturating_sub(b)));
        let small = eval_nexpr(&e(NatValue::U64), &ctx).unwrap();
        prop_assert_eq!(small, NatValue::U64(a.wrapping_sub(b)));
    }

    #[test]
    fn translation_rejects_wide_naturals(extra in any::<u64>(), n in any::<u64>()) {
        let lp = |v: BigUint| DSHOperator::Loop { n: NatValue::BigNat(v), body: Box::new(DSHOperator::Nop) };
        let wide = BigUint::from(u64::MAX) + 1u32 + BigUint::from(extra);
        prop_assert_eq!(translate_rhcol_to_fhcol(&lp(wide.clone())), Err(TranslateError::NatOverflow(wide)));
        let ok = translate_rhcol_to_fhcol(&lp(BigUint::from(n)));
        let fits = matches!(ok, Ok(DSHOperator::Loop { n: NatValue::U64(k), .. }) if k == n);
        prop_assert!(fits);
    }

    #[test]
    fn translation_rejects_constants_other_than_zero_and_one(p in -100i64..100, q in 1i64..20) {
        let c = rat(p, q);
        let op = DSHOperator::IMap {
            n: NatValue::big(1),
            x: PExpr(0),
            y: PExpr(1),
            f: AExpr::bin(CtOp::Plus, AExpr::Var(0), AExpr::Const(c.clone())),
        };
        let r = translate_rhcol_to_fhcol(&op);
        if c.is_zero() || c.is_one() {
            prop_assert!(r.is_ok());
        } else {
            prop_assert!(matches!(r, Err(TranslateError::UnknownConstant(_))));
        }
    }

    #[test]
    fn dyadics_agree_with_rationals(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let (x, y) = (Dyadic::of_f64(a).unwrap(), Dyadic::of_f64(b).unwrap());
        let (ra, rb) = (f64_to_rational(a).unwrap(), f64_to_rational(b).unwrap());
        prop_assert_eq!(x.to_rational(), ra.clone());
        prop_assert_eq!(x.add(&y).to_rational(), &ra + &rb);
        prop_assert_eq!(x.sub(&y).to_rational(), &ra - &rb);
        prop_assert_eq!(x.mul(&y).to_rational(), &ra * &rb);
        prop_assert_eq!(x.cmp_value(&y), ra.cmp(&rb));
    }

    #[test]
    fn error_bound_holds_on_random_expressions(e in sexpr(), xs in prop::collection::vec(-8.0f64..8.0, 4)) {
        let env: BTreeMap<usize, Interval> = (0..4).map(|i| (i, Interval::of_f64(-8.0, 8.0))).collect();
        let bound = interval_error_bound(&e, &env).unwrap();
        let f = eval_f64(&e, &xs).unwrap();
        let exact = eval_exact(&e, &xs.iter().map(|&v| Dyadic::of_f64(v).unwrap()).collect::<Vec<_>>()).unwrap();
        let x = exact.to_rational();
        prop_assert!(bound.lo <= x && x <= bound.hi);
        prop_assert!(Dyadic::of_f64(f).unwrap().sub(&exact).abs_le(&bound.e));
    }

    #[test]
    fn safe_zless_is_sound_at_the_boundary(a in -1e3f64..1e3, gap in -1e-9f64..1e-9, eps in 0.0f64..1e-9, split in 0u32..=8, ulps in -2i64..=2) {
        // Sweep b around a + eps, down to a few ulps either side.
        let b0 = a + eps + gap;
        let b = f64::from_bits((b0.to_bits() as i64 + ulps) as u64);
        if safe_zless(a, b, eps) == 1.0 {
            let eps_r = f64_to_rational(eps).unwrap();
            let le = &eps_r * BigRational::new(BigInt::from(split), BigInt::from(8));
            let re = &eps_r - &le;
            // Worst case: a pushed up, b pushed down.
            let (a_star, b_star) = (f64_to_rational(a).unwrap() + le, f64_to_rational(b).unwrap() - re);
            prop_assert!(a_star < b_star);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn breakdown_preserves_semantics(seed in any::<u64>(), n in 1usize..6) {
        let h = random_hcol(&mut sample::rng(seed), n, 3);
        let (b, _) = auto_breakdown(&h, &["R1", "R2", "R3", "R4"]);
        prop_assert_eq!(dims(&b).unwrap(), dims(&h).unwrap());
        let v = check_extensional_equiv(&h, &b, 50, seed, &Env::default()).unwrap();
        prop_assert!(v.is_equal(), "{:?}", v);
    }

    #[test]
    fn output_length_matches_dims(seed in any::<u64>(), n in 1usize..6) {
        let h = random_hcol(&mut sample::rng(seed), n, 3);
        let (i, o) = dims(&h).unwrap();
        let x: Vec<CarrierValue> = (0..i as i64).map(|k| rat(k * 3 - 5, 2)).collect();
        prop_assert_eq!(eval_hcol(&h, &x, &Env::default()).unwrap().len(), o);
    }

    #[test]
    fn densified_sigma_matches_hcol(seed in any::<u64>(), n in 1usize..6) {
        let env = Env::default();
        let h = random_hcol(&mut sample::rng(seed), n, 3);
        let (b, _) = auto_breakdown(&h, &["R1", "R2", "R3", "R4"]);
        let (se, _) = sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0)));
        let (i, _) = dims(&h).unwrap();
        let x: Vec<CarrierValue> = (0..i as i64).map(|k| rat(7 - k * k, 3)).collect();
        let got = densify(&sigma::eval_shcol(&se, &sparsify(&x), &env).unwrap());
        prop_assert_eq!(got, eval_hcol(&h, &x, &env).unwrap());
    }

    #[test]
    fn inductor_is_last_step_of_induction(n in 0usize..6, x in -5i64..5) {
        let f = ScalarFn::binary(CtOp::Mult);
        let z = CarrierValue::int(1);
        let env = Env::default();
        let xs = [CarrierValue::int(x)];
        let a = eval_hcol(&HExpr::Inductor { n, f: f.clone(), z: z.clone() }, &xs, &env).unwrap();
        let b = eval_hcol(&HExpr::Induction { n: n + 1, f, z }, &xs, &env).unwrap();
        prop_assert_eq!(a.last(), b.last());
    }

    #[test]
    fn dhcol_evaluation_is_deterministic_scoped_and_fueled(seed in any::<u64>()) {
        let (op, tl) = random_dhcol(&mut sample::rng(seed), DshGenConfig::default());
        let (ctx, m) = tl.build();
        let fuel = estimate_fuel(&op);
        let r1 = eval_dshoperator(&ctx, &op, &m, fuel);
        let r2 = eval_dshoperator(&ctx, &op, &m, fuel);
        prop_assert!(r1.is_some());
        prop_assert_eq!(&r1, &r2);
        if let Some(Ok(out)) = r1 {
            // Temporaries never leak out of their Alloc.
            prop_assert!(out.0.keys().eq(m.0.keys()));
        }
    }

    #[test]
    fn closure_trace_is_deterministic(seed in any::<u64>()) {
        let (op, _) = random_dhcol(&mut sample::rng(seed), DshGenConfig::default());
        let ranges = [DSHIndexRange::Other, DSHIndexRange::Other, DSHIndexRange::Other];
        let a: Vec<String> = closure_trace(&op, &ranges).iter().map(|c| c.to_string()).collect();
        let b: Vec<String> = closure_trace(&op, &ranges).iter().map(|c| c.to_string()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn compilation_and_codegen_are_deterministic(seed in any::<u64>(), n in 1usize..5) {
        let h = random_hcol(&mut sample::rng(seed), n, 3);
        let (b, _) = auto_breakdown(&h, &["R1", "R2", "R3", "R4"]);
        let (se, _) = sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0)));
        let me = shcol_to_mshcol(&se).unwrap();
        let c1 = mshcol_to_dhcol(&me, &[]).unwrap();
        let c2 = mshcol_to_dhcol(&me, &[]).unwrap();
        prop_assert_eq!(&c1.op, &c2.op);
        // Programs with constants other than 0 and 1 have no float counterpart.
        let f = translate_rhcol_to_fhcol(&c1.op);
        prop_assume!(f.is_ok());
        let f = f.unwrap();
        let mut c = c1.clone();
        c.op = f;
        let p = FSHCOLProgram::from_compiled("prop", &c);
        let data: Vec<f64> = (0..p.data_len()).map(|k| k as f64 * 0.25).collect();
        let ir = |_| emit_text(&compile_w_main(&p, &data, CodegenOptions::default()).unwrap());
        prop_assert_eq!(ir(0), ir(1));
    }
}
