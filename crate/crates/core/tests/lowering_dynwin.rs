use hcolc::carrier::CarrierValue;
use hcolc::dhcol::{estimate_fuel, eval_dshoperator};
use hcolc::lowering::{
    check_dsh_pure_sampled, check_msh_dsh_compat, mshcol_to_dhcol, shcol_to_mshcol,
};
use hcolc::memory::MemBlock;
use hcolc::mshcol::{check_sh_msh_compat, msh_contract, msh_facts_check};
use hcolc::scalar::Env;
use hcolc::{dynwin, hcol, sigma};

fn globals() -> Vec<Vec<CarrierValue>> {
    vec![vec![
        CarrierValue::rat(1, 2),
        CarrierValue::int(-3),
        CarrierValue::rat(7, 4),
    ]]
}

fn normal_form() -> sigma::SHExpr {
    let b = hcol::apply_breakdown_trace(&dynwin::hcol(), &dynwin::breakdown_trace()).unwrap();
    sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0))).0
}

#[test]
fn dynwin_mshcol_agrees_with_sigma() {
    let se = normal_form();
    let me = shcol_to_mshcol(&se).unwrap();
    let env = Env::with_globals(&globals());
    let rep = check_sh_msh_compat(&se, &me, 500, 21, &env);
    assert!(rep.passed(), "{:?}", rep.violations);
    let rep = msh_facts_check(&me, 500, 22, &env);
    assert!(rep.passed(), "{:?}", rep.violations);
}

#[test]
fn dynwin_dhcol_agrees_with_mshcol() {
    let me = shcol_to_mshcol(&normal_form()).unwrap();
    let c = mshcol_to_dhcol(&me, &[3]).unwrap();
    assert_eq!((c.i, c.o), (5, 1));
    let rep = check_msh_dsh_compat(&me, &c, &globals(), 500, 23);
    assert!(rep.passed(), "{:?}", rep.violations);
    let ins = msh_contract(&me, &Env::with_globals(&globals()))
        .unwrap()
        .in_index_set;
    let rep = check_dsh_pure_sampled(&c, &globals(), &ins, 500, 24);
    assert!(rep.passed(), "{:?}", rep.violations);
}

#[test]
fn dynwin_dhcol_computes_the_monitor() {
    let me = shcol_to_mshcol(&normal_form()).unwrap();
    let c = mshcol_to_dhcol(&me, &[3]).unwrap();
    // p(2) = 1/2 - 6 + 7 = 3/2 against max(|1-4|, |0-1|) = 3: safe.
    let x: Vec<CarrierValue> = [2, 1, 0, 4, 1]
        .iter()
        .map(|&v| CarrierValue::int(v))
        .collect();
    let tl = c.top_level(globals(), MemBlock::dense(&x), MemBlock::new());
    let (ctx, m) = tl.build();
    let out = eval_dshoperator(&ctx, &c.op, &m, estimate_fuel(&c.op))
        .unwrap()
        .unwrap();
    assert_eq!(
        out.lookup(tl.y_addr()).unwrap().lookup(0),
        Some(&CarrierValue::int(1))
    );
}
