use hcolc::hcol::TraceStep;
use hcolc::llvmgen::detect_runner;
use hcolc::pipeline::{dynwin_brute_force, run_pipeline, PipelineConfig, Source};
use hcolc::syntax::{parse_program, Language};

#[test]
fn dynwin_end_to_end() {
    let mut cfg = PipelineConfig::new("dynwin", Source::DynWin);
    cfg.seed = 11;
    cfg.runner = detect_runner();
    let out = std::env::temp_dir().join("hcolc-pipeline-dynwin.ll");
    cfg.out_ll = Some(out.clone());
    let rep = run_pipeline(&cfg);
    assert!(rep.ok(), "{}", rep.to_json());
    let stages: Vec<&str> = rep.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        stages,
        [
            "parse",
            "breakdown",
            "sigma",
            "mshcol",
            "dhcol",
            "rf-translate",
            "llvm"
        ]
    );
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(Some(lines), rep.ll_lines);
    assert!((250..=500).contains(&lines), "{lines}");
}

#[test]
fn non_matching_rule_fails_at_breakdown() {
    let mut cfg = PipelineConfig::new("dynwin", Source::DynWin);
    cfg.trace = Some(vec![TraceStep::new("R1", &[])]);
    let rep = run_pipeline(&cfg);
    let f = rep.failure.clone().expect("breakdown must fail");
    assert_eq!(f.stage, "breakdown");
    assert!(f.detail.contains("does not match"), "{}", f.detail);
    assert!(!rep.ok());
}

#[test]
fn one_third_fails_translation() {
    let p = parse_program("(pointwise 2 (fun i v (mul v 1/3)))", Language::Hcol).unwrap();
    let rep = run_pipeline(&PipelineConfig::new("third", Source::Program(p)));
    let f = rep.failure.clone().expect("translation must fail");
    assert_eq!(f.stage, "rf-translate");
    assert!(f.detail.starts_with("UnknownConstant"), "{}", f.detail);
    // Everything before the translation still validated.
    assert!(rep
        .stages
        .iter()
        .flat_map(|s| &s.validators)
        .all(|v| v.status.ok()));
}

#[test]
fn every_language_enters_the_pipeline() {
    let texts = [
        (
            Language::Hcol,
            "(compose (infnorm 2) (binop 2 (fun i a b (sub a b))))",
        ),
        (Language::Shcol, "(lift (scalarprod 2))"),
        (
            Language::Mshcol,
            "(mcompose (mpointwise 1 (fun i v (abs v))) (pick 3 2))",
        ),
        (
            Language::Dhcol,
            "(program (io 2 1) (DSHBinOp 1 (PVar 0) (PVar 1) (AMax (AVar 0) (AAbs (AVar 1)))))",
        ),
    ];
    for (lang, text) in texts {
        let p = parse_program(text, lang).unwrap();
        let mut cfg = PipelineConfig::new("op", Source::Program(p));
        cfg.samples = 100;
        cfg.rf_samples = 100;
        let rep = run_pipeline(&cfg);
        assert!(rep.ok(), "{lang}: {}", rep.to_json());
        assert_eq!(rep.stages.last().unwrap().stage, "llvm");
    }
}

#[test]
fn same_seed_same_report() {
    let run = || {
        let mut cfg = PipelineConfig::new("dynwin", Source::DynWin);
        cfg.seed = 5;
        cfg.samples = 50;
        cfg.rf_samples = 50;
        let rep = run_pipeline(&cfg);
        (rep.to_json(), rep.harness.unwrap().ir)
    };
    assert_eq!(run(), run());
}

#[test]
fn dynwin_fixture_matches_formula() {
    let rep = dynwin_brute_force(20_000, 3);
    assert!(rep.passed(), "{:?}", rep.violations);
}
