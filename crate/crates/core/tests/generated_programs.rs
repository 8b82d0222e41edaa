use hcolc::carrier::CarrierValue;
use hcolc::dhcol::{estimate_fuel, eval_dshoperator};
use hcolc::gen::{random_dhcol, random_hcol, DshGenConfig};
use hcolc::hcol::dims;
use hcolc::lowering::{
    check_dsh_pure_sampled, check_msh_dsh_compat, mshcol_to_dhcol, shcol_to_mshcol,
};
use hcolc::mshcol::{check_sh_msh_compat, msh_contract};
use hcolc::sample::rng;
use hcolc::scalar::Env;
use hcolc::sigma;

#[test]
fn generated_hcol_survives_every_stage() {
    let mut r = rng(31);
    let env = Env::with_globals(&[]);
    for k in 0..12u64 {
        let h = random_hcol(&mut r, 1 + (k as usize % 6), 3);
        let se = sigma::normalize(&sigma::lift_hcol(&h, CarrierValue::int(0))).0;
        let rep = sigma::check_against_hcol(&h, &se, 100, k, &env);
        assert!(rep.passed(), "{h:?}: {:?}", rep.violations);
        let me = shcol_to_mshcol(&se).unwrap();
        let rep = check_sh_msh_compat(&se, &me, 100, k, &env);
        assert!(rep.passed(), "{h:?}: {:?}", rep.violations);
        let c = mshcol_to_dhcol(&me, &[]).unwrap();
        assert_eq!((c.i, c.o), dims(&h).unwrap());
        let rep = check_msh_dsh_compat(&me, &c, &[], 100, k);
        assert!(rep.passed(), "{h:?}: {:?}", rep.violations);
        let ins = msh_contract(&me, &env).unwrap().in_index_set;
        let rep = check_dsh_pure_sampled(&c, &[], &ins, 100, k);
        assert!(rep.passed(), "{h:?}: {:?}", rep.violations);
    }
}

#[test]
fn estimated_fuel_is_never_exhausted() {
    let mut r = rng(32);
    for _ in 0..1000 {
        let (op, tl) = random_dhcol(&mut r, DshGenConfig::default());
        let (ctx, m) = tl.build();
        assert!(
            eval_dshoperator(&ctx, &op, &m, estimate_fuel(&op)).is_some(),
            "{op:?}"
        );
    }
}

#[test]
fn most_generated_dhcol_programs_run_cleanly() {
    let mut r = rng(33);
    let ok = (0..500)
        .filter(|_| {
            let (op, tl) = random_dhcol(&mut r, DshGenConfig::default());
            let (ctx, m) = tl.build();
            matches!(
                eval_dshoperator(&ctx, &op, &m, estimate_fuel(&op)),
                Some(Ok(_))
            )
        })
        .count();
    assert!(ok > 250, "{ok}");
}
