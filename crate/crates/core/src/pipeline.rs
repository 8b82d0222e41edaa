//! End-to-end driver: breakdown, Σ-HCOL, MSHCOL, DHCOL over rationals,
//! translation to binary64 and LLVM IR, with each stage's validator.

use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::carrier::{CarrierKind, CarrierValue};
use crate::dhcol::{check_rf_equiv, translate_rhcol_to_fhcol, Context};
use crate::dynwin;
use crate::harness::{run_test_harness, Status, TestResult};
use crate::hcol::{self, HExpr, TraceStep};
use crate::llvmgen::{FSHCOLProgram, Runner};
use crate::lowering::{
    check_dsh_pure_sampled, check_msh_dsh_compat, mshcol_to_dhcol, shcol_to_mshcol, Compiled,
};
use crate::memory::{MemBlock, Memory};
use crate::mshcol::{check_sh_msh_compat, msh_contract, msh_facts_check, MSHExpr};
use crate::report::CheckReport;
use crate::sample::{self, SampleRng};
use crate::scalar::Env;
use crate::sigma::{self, SHExpr};
use crate::syntax::{self, Program, Scope};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("stage {stage} failed: {detail}")]
pub struct StageFailure {
    pub stage: String,
    pub detail: String,
}

fn fail(stage: &str, detail: impl ToString) -> StageFailure {
    StageFailure {
        stage: stage.into(),
        detail: detail.to_string(),
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    DynWin,
    Program(Program),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Function name in the emitted module.
    pub name: String,
    pub source: Source,
    /// Breakdown trace; `None` uses the fixture's trace or rewrites with
    /// every builtin rule until none applies.
    pub trace: Option<Vec<TraceStep>>,
    /// Carrier of the final stages: `Binary64` continues to FHCOL and LLVM,
    /// `Rational` stops after DHCOL.
    pub target: CarrierKind,
    pub samples: usize,
    pub rf_samples: usize,
    /// Largest admissible per-cell RHCOL/FHCOL deviation.
    pub rf_tolerance: BigRational,
    pub seed: u64,
    pub out_ll: Option<PathBuf>,
    pub runner: Option<Runner>,
}

impl PipelineConfig {
    pub fn new(name: &str, source: Source) -> Self {
        PipelineConfig {
            name: name.into(),
            source,
            trace: None,
            target: CarrierKind::Binary64,
            samples: 500,
            rf_samples: 1000,
            rf_tolerance: BigRational::zero(),
            seed: 0,
            out_ll: None,
            runner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatorResult {
    pub name: String,
    #[serde(flatten)]
    pub status: Status,
    pub samples: usize,
    pub violations: Vec<String>,
}

impl ValidatorResult {
    pub fn from_check(r: CheckReport) -> Self {
        let status = if r.passed() {
            Status::Pass
        } else {
            Status::Fail(format!("{} violation(s)", r.violations.len()))
        };
        ValidatorResult {
            name: r.check,
            status,
            samples: r.samples,
            violations: r.violations,
        }
    }

    pub fn from_harness(t: &TestResult) -> Self {
        let failed: Vec<String> = t
            .steps
            .iter()
            .filter_map(|s| {
                if let Status::Fail(m) = &s.status {
                    Some(format!("{}: {m}", s.step))
                } else {
                    None
                }
            })
            .collect();
        let status = if !failed.is_empty() {
            Status::Fail(failed.join("; "))
        } else if let Some(Status::Skipped(m)) = t.status("compare") {
            Status::Skipped(m.clone())
        } else {
            Status::Pass
        };
        ValidatorResult {
            name: "llvm vs fhcol".into(),
            status,
            samples: 1,
            violations: failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    /// The stage's output in surface syntax.
    pub artifact: String,
    pub validators: Vec<ValidatorResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub name: String,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    pub failure: Option<StageFailure>,
    pub ll_path: Option<String>,
    pub ll_lines: Option<usize>,
    pub harness: Option<TestResult>,
}

impl PipelineReport {
    /// No stage failed and every validator passed or was skipped.
    pub fn ok(&self) -> bool {
        self.failure.is_none()
            && self
                .stages
                .iter()
                .flat_map(|s| &s.validators)
                .all(|v| v.status.ok())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Random dyadic rationals, exact in binary64.
pub fn random_dyadics(rng: &mut SampleRng, n: usize) -> Vec<CarrierValue> {
    (0..n)
        .map(|_| CarrierValue::rat(rng.gen_range(-512..=512), 64))
        .collect()
}

/// Global values and an input for one sample.
type Draw = (Vec<Vec<CarrierValue>>, Vec<CarrierValue>);

fn draw(dynwin: bool, lens: &[usize], i: usize, rng: &mut SampleRng) -> Draw {
    if dynwin {
        let s = dynwin::random_sample(rng);
        (vec![dynwin::exact(&s.a)], dynwin::exact(&s.x))
    } else {
        (
            lens.iter().map(|&n| random_dyadics(rng, n)).collect(),
            random_dyadics(rng, i),
        )
    }
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    report: PipelineReport,
    seed: u64,
}

impl Run<'_> {
    fn next_seed(&mut self) -> u64 {
        self.seed = self.seed.wrapping_add(1);
        self.seed
    }

    fn stage(&mut self, stage: &str, artifact: String, validators: Vec<ValidatorResult>) {
        self.report.stages.push(StageReport {
            stage: stage.into(),
            artifact,
            validators,
        });
    }
}

fn print_h(e: &HExpr, scope: &Scope) -> String {
    syntax::hcol::print_hexpr(e, scope)
}

/// Run every stage the source needs, stopping at the first stage that
/// cannot produce its output.
pub fn run_pipeline(cfg: &PipelineConfig) -> PipelineReport {
    let mut run = Run {
        cfg,
        report: PipelineReport {
            name: cfg.name.clone(),
            seed: cfg.seed,
            stages: Vec::new(),
            failure: None,
            ll_path: None,
            ll_lines: None,
            harness: None,
        },
        seed: cfg.seed.wrapping_mul(1000),
    };
    if let Err(f) = drive(&mut run) {
        run.report.failure = Some(f);
    }
    run.report
}

fn drive(run: &mut Run) -> Result<(), StageFailure> {
    let cfg = run.cfg;
    let is_dynwin = matches!(cfg.source, Source::DynWin);
    let (program, globals) = match &cfg.source {
        Source::DynWin => (
            Program::Hcol(syntax::hcol::HProgram {
                globals: dynwin::globals(),
                expr: dynwin::hcol(),
            }),
            dynwin::globals(),
        ),
        Source::Program(p) => (p.clone(), p.globals()),
    };
    let lens: Vec<usize> = globals.iter().map(|g| g.1).collect();
    let scope = Scope::with_globals(globals.clone());
    let (i, _) = program.dims();
    let mut rng = sample::rng(cfg.seed);
    let (gvals, _) = draw(is_dynwin, &lens, i, &mut rng);
    let env = Env::with_globals(&gvals);
    run.stage("parse", program.print(), vec![]);

    let mut sh: Option<SHExpr> = None;
    let mut msh: Option<MSHExpr> = None;
    let mut rh: Option<Compiled> = None;
    match program {
        Program::Hcol(p) => {
            let (b, trace) = match (&cfg.trace, is_dynwin) {
                (Some(t), _) => (
                    hcol::apply_breakdown_trace(&p.expr, t).map_err(|e| fail("breakdown", e))?,
                    t.clone(),
                ),
                (None, true) => {
                    let t = dynwin::breakdown_trace();
                    (
                        hcol::apply_breakdown_trace(&p.expr, &t)
                            .map_err(|e| fail("breakdown", e))?,
                        t,
                    )
                }
                (None, false) => hcol::auto_breakdown(&p.expr, &["R1", "R2", "R3", "R4"]),
            };
            let seed = run.next_seed();
            let v = match hcol::check_extensional_equiv(&p.expr, &b, cfg.samples, seed, &env) {
                Ok(hcol::Verdict::Equal { samples }) => ValidatorResult {
                    name: "breakdown equivalence".into(),
                    status: Status::Pass,
                    samples,
                    violations: vec![],
                },
                Ok(hcol::Verdict::Counterexample { x, y1, y2 }) => ValidatorResult {
                    name: "breakdown equivalence".into(),
                    status: Status::Fail("counterexample".into()),
                    samples: cfg.samples,
                    violations: vec![format!("on {x:?}: {y1:?} vs {y2:?}")],
                },
                Err(e) => return Err(fail("breakdown", e)),
            };
            let steps: Vec<String> = trace
                .iter()
                .map(|t| format!("{} {:?}", t.rule, t.path))
                .collect();
            run.stage(
                "breakdown",
                format!("{}\n; trace: {}", print_h(&b, &scope), steps.join(", ")),
                vec![v],
            );

            let (n, _) = sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0)));
            let seed = run.next_seed();
            let v1 = ValidatorResult::from_check(sigma::check_against_hcol(
                &b,
                &n,
                cfg.samples,
                seed,
                &env,
            ));
            let seed = run.next_seed();
            let v2 = ValidatorResult::from_check(sigma::facts_check(&n, cfg.samples, seed, &env));
            run.stage(
                "sigma",
                syntax::sigma::print_shexpr(&n, &scope),
                vec![v1, v2],
            );
            sh = Some(n);
        }
        Program::Shcol(p) => {
            let (n, _) = sigma::normalize(&p.expr);
            run.stage("sigma", syntax::sigma::print_shexpr(&n, &scope), vec![]);
            sh = Some(n);
        }
        Program::Mshcol(p) => msh = Some(p.expr),
        Program::Dhcol(c) => rh = Some(c),
    }

    if let Some(n) = &sh {
        let m = shcol_to_mshcol(n).map_err(|e| fail("mshcol", e))?;
        let seed = run.next_seed();
        let v1 = ValidatorResult::from_check(check_sh_msh_compat(n, &m, cfg.samples, seed, &env));
        let seed = run.next_seed();
        let v2 = ValidatorResult::from_check(msh_facts_check(&m, cfg.samples, seed, &env));
        run.stage(
            "mshcol",
            syntax::mshcol::print_mshexpr(&m, &scope),
            vec![v1, v2],
        );
        msh = Some(m);
    }

    let c = match (msh, rh) {
        (Some(m), _) => {
            let c = mshcol_to_dhcol(&m, &lens).map_err(|e| fail("dhcol", e))?;
            let seed = run.next_seed();
            let v1 = ValidatorResult::from_check(check_msh_dsh_compat(
                &m,
                &c,
                &gvals,
                cfg.samples,
                seed,
            ));
            let ins = msh_contract(&m, &env)
                .map_err(|e| fail("dhcol", e))?
                .in_index_set;
            let seed = run.next_seed();
            let v2 = ValidatorResult::from_check(check_dsh_pure_sampled(
                &c,
                &gvals,
                &ins,
                cfg.samples,
                seed,
            ));
            run.stage(
                "dhcol",
                syntax::dhcol::print_dhcol_program(&c),
                vec![v1, v2],
            );
            c
        }
        (None, Some(c)) => {
            let ins = (0..c.i).collect();
            let seed = run.next_seed();
            let v = ValidatorResult::from_check(check_dsh_pure_sampled(
                &c,
                &gvals,
                &ins,
                cfg.samples,
                seed,
            ));
            run.stage("dhcol", syntax::dhcol::print_dhcol_program(&c), vec![v]);
            c
        }
        (None, None) => unreachable!("every source reaches DHCOL"),
    };

    if cfg.target != CarrierKind::Binary64 {
        return Ok(());
    }
    let f_op =
        translate_rhcol_to_fhcol(&c.op).map_err(|e| fail("rf-translate", format!("{e:?}")))?;
    let fc = Compiled {
        op: f_op,
        ..c.clone()
    };
    let mut rf_rng = sample::rng(run.next_seed());
    let inputs: Vec<(Context, Memory)> = (0..cfg.rf_samples)
        .map(|_| {
            let (g, x) = draw(is_dynwin, &lens, c.i, &mut rf_rng);
            c.top_level(g, MemBlock::dense(&x), MemBlock::new()).build()
        })
        .collect();
    // Y follows the globals and X.
    let out_addr = lens.len() + 1;
    let rf = check_rf_equiv(&c.op, &fc.op, &inputs, out_addr, &cfg.rf_tolerance);
    let mut v = ValidatorResult::from_check(rf.report);
    v.name = format!("rhcol vs fhcol (max deviation {:e})", rf.max_deviation);
    run.stage(
        "rf-translate",
        syntax::dhcol::print_dhcol_program(&fc),
        vec![v],
    );

    let p = FSHCOLProgram::from_compiled(&cfg.name, &fc);
    let t = run_test_harness(&p, cfg.seed, cfg.runner.as_ref(), None);
    let v = ValidatorResult::from_harness(&t);
    if t.ir.is_empty() {
        return Err(fail(
            "llvm",
            t.steps
                .iter()
                .find(|s| s.step == "compile")
                .map(|s| format!("{:?}", s.status))
                .unwrap_or_default(),
        ));
    }
    if let Some(path) = &cfg.out_ll {
        std::fs::write(path, &t.ir)
            .map_err(|e| fail("llvm", format!("cannot write {}: {e}", path.display())))?;
        run.report.ll_path = Some(path.display().to_string());
    }
    run.report.ll_lines = Some(t.ir_lines);
    run.stage("llvm", format!("; {} lines", t.ir_lines), vec![v]);
    run.report.harness = Some(t);
    Ok(())
}

/// The Chebyshev distance on two points, compiled and translated.
pub fn chebyshev_fhcol() -> Compiled {
    let h = HExpr::ChebyshevDistance { n: 2 };
    let b = hcol::apply_breakdown_trace(&h, &[TraceStep::new("R3", &[])]).expect("R3 applies");
    let (n, _) = sigma::normalize(&sigma::lift_hcol(&b, CarrierValue::int(0)));
    let m = shcol_to_mshcol(&n).expect("normal form is lowerable");
    let mut c = mshcol_to_dhcol(&m, &[]).expect("compiles");
    c.op = translate_rhcol_to_fhcol(&c.op).expect("only 0 and 1 constants");
    c
}

/// Whether the fixture's HCOL agrees with the monitor formula over
/// rationals on `samples` admissible inputs.
pub fn dynwin_brute_force(samples: usize, seed: u64) -> CheckReport {
    let mut rep = CheckReport::new("dynwin hcol vs formula");
    let mut rng = sample::rng(seed);
    let h = dynwin::hcol();
    for _ in 0..samples {
        rep.samples += 1;
        let s = dynwin::random_sample(&mut rng);
        let (a, x) = (dynwin::exact(&s.a), dynwin::exact(&s.x));
        let want = dynwin::direct_formula(&rats(&a), &rats(&x));
        match hcol::eval_hcol(&h, &x, &Env::with_globals(&[a])) {
            Ok(y) if y.len() == 1 && y[0].as_rational() == Some(&want) => {}
            Ok(y) => rep.violation(format!("on {:?}: hcol {y:?}, formula {want}", s.x)),
            Err(e) => rep.violation(e.to_string()),
        }
    }
    rep
}

fn rats(xs: &[CarrierValue]) -> Vec<BigRational> {
    xs.iter()
        .map(|v| {
            v.as_rational()
                .cloned()
                .unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
        })
        .collect()
}
