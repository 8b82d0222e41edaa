//! One line per acceptance criterion. Tolerances are pinned here; the
//! process exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_rational::BigRational;

use hcolc::analysis::error::{eval_exact, eval_f64, to_f64, Dyadic};
use hcolc::analysis::{check_trace_no_overflow, closure_trace, parse_sexpr, DSHIndexRange};
use hcolc::carrier::{CarrierValue, CtOp, NatValue};
use hcolc::dhcol::{
    check_rf_equiv, estimate_fuel, eval_dshoperator, translate_rhcol_to_fhcol, AExpr, DSHOperator,
    MExpr, NExpr, NOp, PExpr, TranslateError,
};
use hcolc::dynwin;
use hcolc::gen::{random_dhcol, random_hcol, DshGenConfig};
use hcolc::harness::{harness_programs, run_test_harness, Status};
use hcolc::hcol::{
    apply_breakdown_trace, auto_breakdown, builtin_rules, check_extensional_equiv, ConstVec, HExpr,
    TraceStep,
};
use hcolc::llvmgen::detect_runner;
use hcolc::lowering::{
    check_dsh_pure_sampled, check_msh_dsh_compat, mshcol_to_dhcol, shcol_to_mshcol, Compiled,
};
use hcolc::memory::MemBlock;
use hcolc::mshcol::{check_sh_msh_compat, msh_contract};
use hcolc::pipeline::{run_pipeline, PipelineConfig, Source};
use hcolc::sample;
use hcolc::scalar::Env;
use hcolc::sigma;
use hcolc::syntax::{parse_program, Language};

const REWRITE_SAMPLES: usize = 1000;
const REWRITE_BUDGET: Duration = Duration::from_secs(10);
const STAGE_SAMPLES: usize = 500;
const GENERATED_PROGRAMS: usize = 12;
const STAGE_BUDGET: Duration = Duration::from_secs(120);
const FUEL_PROGRAMS: usize = 10_000;
const BOUND_SAMPLES: usize = 1_000_000;
const LHS_RANGE: (f64, f64) = (2e-13, 2e-11);
const RHS_RANGE: (f64, f64) = (9.1e-13, 9.1e-11);
const EPS_MIN: f64 = 1.11e-12;
const RF_SAMPLES: usize = 10_000;
const LL_LINES: (usize, usize) = (250, 500);

const PUBLISHED_SEXPR: &str = "(SZLess (SPlus (SPlus (SPlus SConstZero (SMult SConstOne (SVar 0))) \
(SMult (SMult SConstOne (SVar 3)) (SVar 1))) (SMult (SMult (SMult SConstOne (SVar 3)) (SVar 3)) (SVar 2))) \
(SMax (SMax SConstZero (SAbs (SSub (SVar 4) (SVar 6)))) (SAbs (SSub (SVar 5) (SVar 7)))))";

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dyadic_globals(seed: u64, lens: &[usize]) -> Vec<Vec<CarrierValue>> {
    let mut rng = sample::rng(seed);
    lens.iter()
        .map(|&n| hcolc::pipeline::random_dyadics(&mut rng, n))
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut instances: Vec<(&str, HExpr, Vec<usize>)> = Vec::new();
    for n in 1..=4 {
        instances.push(("R1", HExpr::ScalarProd { n }, vec![]));
        instances.push((
            "R2",
            HExpr::EvalPolynomial {
                a: ConstVec::global(0, n),
            },
            vec![n],
        ));
        instances.push(("R3", HExpr::ChebyshevDistance { n }, vec![]));
    }
    instances.push(("R4", dynwin::hcol(), vec![3]));
    instances.push((
        "R4",
        HExpr::tless(HExpr::ScalarProd { n: 2 }, HExpr::InfinityNorm { n: 3 }),
        vec![],
    ));
    let rules = builtin_rules();
    for (k, (name, e, lens)) in instances.iter().enumerate() {
        let env = Env::with_globals(&dyadic_globals(k as u64, lens));
        let rule = rules.iter().find(|r| r.name == *name).unwrap();
        let rhs = (rule.apply)(e).ok_or_else(|| format!("{name} does not match {}", e.name()))?;
        let v = check_extensional_equiv(e, &rhs, REWRITE_SAMPLES, 100 + k as u64, &env)
            .map_err(|e| e.to_string())?;
        ensure(v.is_equal(), || format!("{name} on {e:?}: {v:?}"))?;
    }
    let t = start.elapsed();
    ensure(t < REWRITE_BUDGET, || format!("took {t:?}"))?;
    Ok(format!(
        "{} instances x {REWRITE_SAMPLES} samples, all Equal, {:.2}s",
        instances.len(),
        t.as_secs_f64()
    ))
}

/// Every stage check on one HCOL program (already broken down in `b`).
fn stage_chain(
    h: &HExpr,
    b: &HExpr,
    globals: &[Vec<CarrierValue>],
    seed: u64,
) -> Result<(), String> {
    let env = Env::with_globals(globals);
    let lens: Vec<usize> = globals.iter().map(|g| g.len()).collect();
    let (se, _) = sigma::normalize(&sigma::lift_hcol(b, CarrierValue::int(0)));
    let r = sigma::check_against_hcol(h, &se, STAGE_SAMPLES, seed, &env);
    ensure(r.passed() && r.samples == STAGE_SAMPLES, || {
        format!("sigma vs hcol: {:?}", r.violations)
    })?;
    let me = shcol_to_mshcol(&se).map_err(|e| e.to_string())?;
    let r = check_sh_msh_compat(&se, &me, STAGE_SAMPLES, seed + 1, &env);
    ensure(r.passed() && r.samples == STAGE_SAMPLES, || {
        format!("sigma vs mshcol: {:?}", r.violations)
    })?;
    let c = mshcol_to_dhcol(&me, &lens).map_err(|e| e.to_string())?;
    let r = check_msh_dsh_compat(&me, &c, globals, STAGE_SAMPLES, seed + 2);
    ensure(r.passed() && r.samples == STAGE_SAMPLES, || {
        format!("mshcol vs dhcol: {:?}", r.violations)
    })?;
    let ins = msh_contract(&me, &env)
        .map_err(|e| e.to_string())?
        .in_index_set;
    let r = check_dsh_pure_sampled(&c, globals, &ins, STAGE_SAMPLES, seed + 3);
    ensure(r.passed() && r.samples == STAGE_SAMPLES, || {
        format!("dhcol purity: {:?}", r.violations)
    })?;
    Ok(())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let a = vec![vec![
        CarrierValue::rat(1, 2),
        CarrierValue::int(-3),
        CarrierValue::rat(7, 4),
    ]];
    let b = apply_breakdown_trace(&dynwin::hcol(), &dynwin::breakdown_trace())
        .map_err(|e| e.to_string())?;
    stage_chain(&dynwin::hcol(), &b, &a, 10).map_err(|e| format!("dynwin: {e}"))?;
    let mut rng = sample::rng(20);
    let mut names = Vec::new();
    for k in 0..GENERATED_PROGRAMS {
        // Leaves alone say little about the lowering; insist on composite programs.
        let h = loop {
            let h = random_hcol(&mut rng, 1 + k % 6, 4);
            if h.size() >= 4 {
                break h;
            }
        };
        let (b, _) = auto_breakdown(&h, &["R1", "R2", "R3", "R4"]);
        stage_chain(&h, &b, &[], 100 + 10 * k as u64)
            .map_err(|e| format!("generated #{k} {h:?}: {e}"))?;
        names.push(h.size());
    }
    let t = start.elapsed();
    ensure(t < STAGE_BUDGET, || format!("took {t:?}"))?;
    Ok(format!(
        "dynwin + {GENERATED_PROGRAMS} generated programs (sizes {names:?}), 4 checks x {STAGE_SAMPLES} samples each, {:.1}s",
        t.as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = sample::rng(30);
    let cfg = DshGenConfig::default();
    let (mut ok, mut err, mut deepest, mut most_loops) = (0, 0, 0, 0);
    for k in 0..FUEL_PROGRAMS {
        let (op, tl) = random_dhcol(&mut rng, cfg);
        deepest = deepest.max(hcolc::gen::depth(&op));
        most_loops = most_loops.max(hcolc::gen::loop_count(&op));
        let (ctx, m) = tl.build();
        match eval_dshoperator(&ctx, &op, &m, estimate_fuel(&op)) {
            None => return Err(format!("program #{k} ran out of fuel: {op}")),
            Some(Ok(_)) => ok += 1,
            Some(Err(_)) => err += 1,
        }
    }
    Ok(format!("{FUEL_PROGRAMS} programs ({ok} completed, {err} errors, none out of fuel; max nesting {deepest}, max loops {most_loops})"))
}

fn indexed_sum_loop() -> DSHOperator {
    let nth = |p, e| AExpr::Nth(MExpr::PtrDeref(PExpr(p)), e);
    let three = NExpr::Const(NatValue::big(3));
    DSHOperator::Loop {
        n: NatValue::big(3),
        body: Box::new(DSHOperator::IMap {
            n: NatValue::big(3),
            x: PExpr(1),
            y: PExpr(2),
            f: AExpr::bin(
                CtOp::Plus,
                nth(3, NExpr::Var(1)),
                nth(5, NExpr::bin(NOp::Mult, three, NExpr::Var(2))),
            ),
        }),
    }
}

fn criterion_4() -> Outcome {
    let t = closure_trace(
        &indexed_sum_loop(),
        &[
            DSHIndexRange::Other,
            DSHIndexRange::Other,
            DSHIndexRange::Other,
        ],
    );
    let mut expected = Vec::new();
    for k in [2, 1, 0] {
        for e in ["NVar 1", "NMult (NConst 3) (NVar 2)"] {
            expected.push(format!("([DSHOtherVar; DSHIndex 3; DSHIndex {k}; DSHOtherVar; DSHOtherVar; DSHOtherVar], {e})"));
        }
    }
    let got: Vec<String> = t.iter().map(|c| c.to_string()).collect();
    ensure(got == expected, || format!("trace differs: {got:#?}"))?;
    let v = check_trace_no_overflow(&t, 64);
    ensure(v.passed(), || format!("{v:?}"))?;
    Ok(format!(
        "{} closures verbatim, no overflow at 64 bits",
        t.len()
    ))
}

fn criterion_5() -> Outcome {
    let s = dynwin::symbolic().map_err(|e| e.to_string())?;
    let expected = parse_sexpr(PUBLISHED_SEXPR).ok_or("expected expression does not parse")?;
    ensure(s.alpha_eq(&expected), || format!("got {s}"))?;
    Ok(format!(
        "alpha-equivalent ({} variables)",
        s.vars_in_order().len()
    ))
}

fn criterion_6() -> Outcome {
    let a = dynwin::error_analysis()?;
    let (l, r, e) = (
        to_f64(&a.lhs_bound.e),
        to_f64(&a.rhs_bound.e),
        to_f64(&a.eps),
    );
    ensure((LHS_RANGE.0..=LHS_RANGE.1).contains(&l), || {
        format!("lhs bound {l:e} outside {LHS_RANGE:?}")
    })?;
    ensure((RHS_RANGE.0..=RHS_RANGE.1).contains(&r), || {
        format!("rhs bound {r:e} outside {RHS_RANGE:?}")
    })?;
    ensure(e >= EPS_MIN, || format!("eps {e:e} < {EPS_MIN:e}"))?;
    let mut rng = sample::rng(60);
    let (mut worst_l, mut worst_r) = (0f64, 0f64);
    for k in 0..BOUND_SAMPLES {
        let s = dynwin::random_sample(&mut rng);
        let env: Vec<f64> = s.a.iter().chain(s.x.iter()).copied().collect();
        let exact: Vec<Dyadic> = env.iter().map(|&v| Dyadic::of_f64(v).unwrap()).collect();
        for (side, bound, worst) in [
            (&a.lhs, &a.lhs_bound.e, &mut worst_l),
            (&a.rhs, &a.rhs_bound.e, &mut worst_r),
        ] {
            let f = Dyadic::of_f64(eval_f64(side, &env).ok_or("float evaluation failed")?)
                .ok_or("non-finite result")?;
            let x = eval_exact(side, &exact).ok_or("exact evaluation failed")?;
            let d = f.sub(&x).abs();
            ensure(d.abs_le(bound), || {
                format!("sample #{k} {env:?} exceeds the bound")
            })?;
            *worst = worst.max(to_f64(&d.to_rational()));
        }
    }
    Ok(format!(
        "lhs {l:.4e}, rhs {r:.4e}, eps {e:.4e}; {BOUND_SAMPLES} samples, worst observed {worst_l:.3e} / {worst_r:.3e}"
    ))
}

fn compile_fhcol(
    h: &HExpr,
    trace: &[TraceStep],
    lens: &[usize],
) -> Result<(Compiled, DSHOperator), String> {
    let b = apply_breakdown_trace(h, trace).map_err(|e| e.to_string())?;
    let (se, _) = sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0)));
    let me = shcol_to_mshcol(&se).map_err(|e| e.to_string())?;
    let c = mshcol_to_dhcol(&me, lens).map_err(|e| e.to_string())?;
    let f = translate_rhcol_to_fhcol(&c.op).map_err(|e| format!("{e:?}"))?;
    Ok((c, f))
}

fn criterion_7() -> Outcome {
    let a = dynwin::error_analysis()?;
    let zero = BigRational::from_integer(0.into());
    let parts: [(&str, HExpr, Vec<TraceStep>, Vec<usize>, &BigRational); 3] = [
        (
            "lhs",
            dynwin::lhs_hcol(),
            vec![TraceStep::new("R2", &[])],
            vec![3],
            &a.lhs_bound.e,
        ),
        (
            "rhs",
            dynwin::rhs_hcol(),
            vec![TraceStep::new("R3", &[])],
            vec![],
            &a.rhs_bound.e,
        ),
        // The decision itself: no admissible sample may flip it.
        (
            "monitor",
            dynwin::hcol(),
            dynwin::breakdown_trace(),
            vec![3],
            &zero,
        ),
    ];
    let mut out = Vec::new();
    for (name, h, trace, lens, tol) in parts {
        let (c, f) = compile_fhcol(&h, &trace, &lens)?;
        let mut rng = sample::rng(70);
        let inputs: Vec<_> = (0..RF_SAMPLES)
            .map(|_| {
                let s = dynwin::random_sample(&mut rng);
                let x = match name {
                    "lhs" => &s.x[..1],
                    "rhs" => &s.x[1..],
                    _ => &s.x[..],
                };
                let g = if lens.is_empty() {
                    vec![]
                } else {
                    vec![dynwin::exact(&s.a)]
                };
                c.top_level(g, MemBlock::dense(&dynwin::exact(x)), MemBlock::new())
                    .build()
            })
            .collect();
        let rep = check_rf_equiv(&c.op, &f, &inputs, lens.len() + 1, tol);
        ensure(
            rep.report.passed() && rep.report.samples == RF_SAMPLES,
            || format!("{name}: {:?}", rep.report.violations),
        )?;
        out.push(format!(
            "{name} max {:.3e} <= {:.3e}",
            rep.max_deviation,
            to_f64(tol)
        ));
    }
    Ok(format!("{RF_SAMPLES} samples each; {}", out.join(", ")))
}

fn criterion_8() -> Outcome {
    let runner = detect_runner();
    let programs = harness_programs();
    ensure(programs.len() == 12, || {
        format!("{} programs", programs.len())
    })?;
    let mut dynwin_lines = 0;
    for p in &programs {
        let r = run_test_harness(p, 80, runner.as_ref(), None);
        for step in ["pool", "compile", "evaluate"] {
            ensure(r.status(step) == Some(&Status::Pass), || {
                format!("{}: {step} {:?}", p.name, r.status(step))
            })?;
        }
        for step in ["execute", "compare"] {
            let s = r.status(step);
            match &runner {
                Some(_) => ensure(s == Some(&Status::Pass), || {
                    format!("{}: {step} {s:?}", p.name)
                })?,
                None => ensure(matches!(s, Some(Status::Skipped(_))), || {
                    format!("{}: {step} {s:?}", p.name)
                })?,
            }
        }
        if p.name == "dynwin" {
            dynwin_lines = r.ir_lines;
        }
    }
    ensure((LL_LINES.0..=LL_LINES.1).contains(&dynwin_lines), || {
        format!("dynwin module has {dynwin_lines} lines")
    })?;
    Ok(match runner {
        Some(r) => format!("12 programs bit-exact via {r:?}; dynwin module {dynwin_lines} lines"),
        None => format!("no runner: 12 programs compile and evaluate, execute/compare Skipped; dynwin module {dynwin_lines} lines"),
    })
}

fn criterion_9() -> Outcome {
    let imap = |c: CarrierValue| DSHOperator::IMap {
        n: NatValue::big(2),
        x: PExpr(0),
        y: PExpr(1),
        f: AExpr::bin(CtOp::Mult, AExpr::Var(0), AExpr::Const(c)),
    };
    for c in [
        CarrierValue::rat(1, 3),
        CarrierValue::int(2),
        CarrierValue::int(-1),
        CarrierValue::rat(1, 2),
    ] {
        let r = translate_rhcol_to_fhcol(&imap(c.clone()));
        ensure(matches!(r, Err(TranslateError::UnknownConstant(_))), || {
            format!("constant {c}: {r:?}")
        })?;
    }
    for c in [CarrierValue::int(0), CarrierValue::int(1)] {
        ensure(translate_rhcol_to_fhcol(&imap(c.clone())).is_ok(), || {
            format!("constant {c} rejected")
        })?;
    }
    let big = BigUint::from(u64::MAX) + 1u32;
    let lp = |n: BigUint| DSHOperator::Loop {
        n: NatValue::BigNat(n),
        body: Box::new(DSHOperator::Nop),
    };
    let r = translate_rhcol_to_fhcol(&lp(big.clone()));
    ensure(r == Err(TranslateError::NatOverflow(big.clone())), || {
        format!("2^64: {r:?}")
    })?;
    let r = translate_rhcol_to_fhcol(&DSHOperator::MemInit {
        y: PExpr(0),
        value: CarrierValue::int(0),
    });
    ensure(r.is_ok(), || format!("{r:?}"))?;
    let ok = translate_rhcol_to_fhcol(&lp(BigUint::from(u64::MAX)));
    ensure(
        matches!(
            ok,
            Ok(DSHOperator::Loop {
                n: NatValue::U64(u64::MAX),
                ..
            })
        ),
        || format!("2^64-1: {ok:?}"),
    )?;
    let off = DSHOperator::Assign {
        src: hcolc::dhcol::MemRef::new(PExpr(0), NExpr::Const(NatValue::BigNat(big.clone()))),
        dst: hcolc::dhcol::MemRef::new(PExpr(1), NExpr::Const(NatValue::big(0))),
    };
    ensure(
        matches!(
            translate_rhcol_to_fhcol(&off),
            Err(TranslateError::NatOverflow(_))
        ),
        || "offset 2^64 accepted".into(),
    )?;
    let p = parse_program("(pointwise 2 (fun i v (mul v 1/3)))", Language::Hcol)
        .map_err(|e| e.to_string())?;
    let rep = run_pipeline(&PipelineConfig::new("third", Source::Program(p)));
    let f = rep.failure.ok_or("pipeline accepted 1/3")?;
    ensure(
        f.stage == "rf-translate" && f.detail.starts_with("UnknownConstant"),
        || format!("{f}"),
    )?;
    Ok("1/3, 2, -1, 1/2 -> UnknownConstant; 2^64 -> NatOverflow; 0, 1, 2^64-1 accepted; pipeline stops at rf-translate".into())
}

fn criterion_10() -> Outcome {
    let dir = std::env::temp_dir().join(format!("hcolc-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<(String, Vec<u8>), String> {
        let mut cfg = PipelineConfig::new("dynwin", Source::DynWin);
        cfg.seed = 100;
        cfg.samples = 200;
        cfg.rf_samples = 200;
        let ll = dir.join(format!("{tag}.ll"));
        cfg.out_ll = Some(ll.clone());
        let mut rep = run_pipeline(&cfg);
        rep.ll_path = None;
        let bytes = std::fs::read(&ll).map_err(|e| e.to_string())?;
        let analysis = serde_json::to_string(&dynwin::error_analysis()?.report())
            .map_err(|e| e.to_string())?;
        Ok((rep.to_json() + &analysis, bytes))
    };
    let (j1, l1) = run("a")?;
    let (j2, l2) = run("b")?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(j1 == j2, || "JSON reports differ".into())?;
    ensure(l1 == l2, || ".ll files differ".into())?;
    Ok(format!(
        "two runs: {} JSON bytes and {} IR bytes identical",
        j1.len(),
        l1.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("rewrite soundness", criterion_1),
        ("stage equivalence chain", criterion_2),
        ("fuel sufficiency", criterion_3),
        ("closure trace exactness", criterion_4),
        ("dynwin symbolic execution", criterion_5),
        ("error-bound soundness and tightness", criterion_6),
        ("rhcol to fhcol deviation", criterion_7),
        ("codegen equivalence", criterion_8),
        ("translation failures", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.1}s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
