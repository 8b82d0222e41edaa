use hcolc::dynwin;
use hcolc::harness::{harness_programs, run_test_harness, Status};
use hcolc::llvmgen::{compile_w_main, detect_runner, emit_text, CodegenOptions, FSHCOLProgram};

#[test]
fn suite_is_bit_exact_or_skipped() {
    let runner = detect_runner();
    for p in harness_programs() {
        for seed in [1, 2] {
            let r = run_test_harness(&p, seed, runner.as_ref(), None);
            assert!(r.ok(), "{}: {:?}", p.name, r.steps);
            match &runner {
                Some(_) => assert_eq!(r.status("compare"), Some(&Status::Pass), "{}", p.name),
                None => assert!(matches!(r.status("compare"), Some(Status::Skipped(_)))),
            }
        }
    }
}

#[test]
fn short_pool_still_runs() {
    let runner = detect_runner();
    let p = FSHCOLProgram::from_compiled("dynwin", &dynwin::fhcol());
    let r = run_test_harness(&p, 9, runner.as_ref(), Some(3));
    assert_eq!(r.pool_len, 3);
    assert!(r.ok(), "{:?}", r.steps);
}

#[test]
fn dynwin_module_size() {
    let p = FSHCOLProgram::from_compiled("dynwin", &dynwin::fhcol());
    let data: Vec<f64> = (0..p.data_len()).map(|k| k as f64 * 0.75 - 2.0).collect();
    let text = emit_text(&compile_w_main(&p, &data, CodegenOptions::default()).unwrap());
    let lines = text.lines().count();
    assert!((250..=500).contains(&lines), "{lines}");
    assert!(text.contains("define void @dynwin("));
}

#[test]
fn emitted_text_is_deterministic() {
    let p = FSHCOLProgram::from_compiled("dynwin", &dynwin::fhcol());
    let a = run_test_harness(&p, 4, None, None).ir;
    let b = run_test_harness(&p, 4, None, None).ir;
    assert_eq!(a, b);
    assert_ne!(a, run_test_harness(&p, 5, None, None).ir);
}
