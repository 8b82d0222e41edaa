use hcolc::carrier::CarrierValue;
use hcolc::scalar::Env;
use hcolc::syntax::sigma::{parse_shexpr, print_shexpr};
use hcolc::syntax::{read_one, Scope};
use hcolc::{dynwin, hcol, sigma};

const NORMAL_FORM: &str = "(shcompose (shbinop 1 zless) (apply2union plus \
(shcompose (embed 2 0) (ireduction plus 0 3 (j0) (shcompose (shpointwise 1 (fun i v (mul v (nth a j0)))) (shcompose (shinductor j0 mult 1) (pick 5 0))))) \
(shcompose (embed 2 1) (ireduction max 0 2 (j0) (shcompose (shpointwise 1 abs) (shcompose (shbinop 1 sub) \
(iunion plus 2 (j1) (shcompose (embed 2 j1) (pick 5 (add (add j0 (mul 2 j1)) 1))))))))))";

fn env() -> Env {
    Env::with_globals(&[vec![
        CarrierValue::rat(1, 2),
        CarrierValue::int(-3),
        CarrierValue::rat(7, 4),
    ]])
}

fn normal_form() -> sigma::SHExpr {
    let b = hcol::apply_breakdown_trace(&dynwin::hcol(), &dynwin::breakdown_trace()).unwrap();
    sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0))).0
}

#[test]
fn dynwin_normal_form_is_frozen() {
    let n = normal_form();
    assert!(n.is_final());
    let scope = Scope::with_globals(dynwin::globals());
    assert_eq!(print_shexpr(&n, &scope), NORMAL_FORM);
    let parsed = parse_shexpr(&read_one(NORMAL_FORM).unwrap(), &scope).unwrap();
    assert_eq!(parsed, n);
    assert_eq!(sigma::sh_dims(&n).unwrap(), (5, 1));
}

#[test]
fn dynwin_normal_form_matches_hcol() {
    let n = normal_form();
    let rep = sigma::check_against_hcol(&dynwin::hcol(), &n, 300, 11, &env());
    assert!(rep.passed(), "{:?}", rep.violations);
    let rep = sigma::facts_check(&n, 100, 12, &env());
    assert!(rep.passed(), "{:?}", rep.violations);
}
