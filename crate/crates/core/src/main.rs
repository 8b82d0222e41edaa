use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;

use hcolc::carrier::CarrierValue;
use hcolc::dhcol::{estimate_fuel, eval_dshoperator};
use hcolc::dynwin;
use hcolc::harness::{harness_programs, run_test_harness};
use hcolc::hcol::{eval_hcol, TraceStep};
use hcolc::llvmgen::{detect_runner, Runner, RUNNER_ENV};
use hcolc::memory::MemBlock;
use hcolc::mshcol::eval_mshcol;
use hcolc::pipeline::{dynwin_brute_force, run_pipeline, PipelineConfig, PipelineReport, Source};
use hcolc::scalar::Env;
use hcolc::sigma::{densify, eval_shcol, sparsify};
use hcolc::syntax::{parse_program, Language, Program};

#[derive(Parser)]
#[command(
    name = "hcolc",
    version,
    about = "HCOL to LLVM IR compiler with per-stage translation validation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Input {
    /// Program file.
    #[arg(long)]
    input: PathBuf,
    /// hcol, shcol, mshcol or dhcol.
    #[arg(long, default_value = "hcol")]
    language: Language,
}

#[derive(Args)]
struct Run {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per randomized validator.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Paired samples for the rational/binary64 comparison.
    #[arg(long, default_value_t = 1000)]
    rf_samples: usize,
    /// Largest admissible rational/binary64 deviation per output cell.
    #[arg(long, default_value = "0")]
    rf_tolerance: String,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the LLVM module here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Never execute generated IR, even if a runner is available.
    #[arg(long)]
    no_run: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a program and print it back with its dimensions.
    Parse(Input),
    /// Evaluate a program over rationals.
    Eval {
        #[command(flatten)]
        input: Input,
        /// Comma-separated input vector, e.g. `1,-2/3,0`.
        #[arg(long)]
        x: String,
        /// Global vector values, `name=v0,v1,...`; repeatable.
        #[arg(long = "global")]
        globals: Vec<String>,
    },
    /// Lower a program to a later language and print it.
    Lower {
        #[command(flatten)]
        input: Input,
        /// shcol, mshcol, dhcol or fhcol.
        #[arg(long, default_value = "dhcol")]
        to: String,
    },
    /// Compile a program to an LLVM module with a test `main`.
    EmitLlvm {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Function name in the module.
        #[arg(long)]
        name: Option<String>,
    },
    /// Run the full pipeline with every validator.
    Validate {
        #[command(flatten)]
        input: Input,
        /// JSON breakdown trace: `[{"rule": "R1", "path": [0]}, ...]`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        run: Run,
    },
    /// Symbolic execution and error bounds of the dynamic window monitor.
    Analyze {
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write a Gappa problem for both sides of the comparison.
        #[arg(long)]
        gappa: Option<PathBuf>,
    },
    /// Run the twelve-program compiler test suite.
    Harness {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pool length; shorter pools are reused cyclically.
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        no_run: bool,
    },
    /// The dynamic window monitor end to end, plus its analysis.
    Dynwin {
        #[command(flatten)]
        run: Run,
        /// Inputs for the HCOL-vs-formula check.
        #[arg(long, default_value_t = 100_000)]
        brute_force: usize,
    },
}

fn read_program(i: &Input) -> Result<Program> {
    let text = std::fs::read_to_string(&i.input)
        .with_context(|| format!("reading {}", i.input.display()))?;
    parse_program(&text, i.language).map_err(|e| anyhow!("{}: {e}", i.input.display()))
}

fn stem_name(p: &Path) -> String {
    let s: String = p
        .file_stem()
        .map(|s| {
            s.to_string_lossy()
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect()
        })
        .unwrap_or_default();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        format!("op_{s}")
    } else {
        s
    }
}

fn parse_values(s: &str) -> Result<Vec<CarrierValue>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<CarrierValue>()
                .map_err(|e| anyhow!("bad value {t:?}: {e}"))
        })
        .collect()
}

fn runner(no_run: bool) -> Option<Runner> {
    if no_run {
        None
    } else {
        detect_runner()
    }
}

fn write(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn configure(cfg: &mut PipelineConfig, run: &Run) -> Result<()> {
    cfg.seed = run.seed;
    cfg.samples = run.samples;
    cfg.rf_samples = run.rf_samples;
    cfg.rf_tolerance = run
        .rf_tolerance
        .parse::<BigRational>()
        .map_err(|e| anyhow!("bad --rf-tolerance: {e}"))?;
    cfg.out_ll = run.out.clone();
    cfg.runner = runner(run.no_run);
    Ok(())
}

fn summarize(rep: &PipelineReport) {
    for s in &rep.stages {
        for v in &s.validators {
            println!("{:<14} {:<48} {:?}", s.stage, v.name, v.status);
        }
    }
    if let Some(f) = &rep.failure {
        println!("FAILED: {f}");
    }
    if let Some(p) = &rep.ll_path {
        println!("wrote {p} ({} lines)", rep.ll_lines.unwrap_or(0));
    }
}

fn eval(p: &Program, x: &[CarrierValue], globals: &[String]) -> Result<Vec<String>> {
    let decl = p.globals();
    let mut vals = vec![None; decl.len()];
    for g in globals {
        let (name, v) = g
            .split_once('=')
            .ok_or_else(|| anyhow!("expected name=values, got {g:?}"))?;
        let k = decl
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| anyhow!("unknown global {name}"))?;
        let v = parse_values(v)?;
        if v.len() != decl[k].1 {
            bail!("global {name} needs {} values, got {}", decl[k].1, v.len());
        }
        vals[k] = Some(v);
    }
    let vals: Vec<Vec<CarrierValue>> = vals
        .into_iter()
        .zip(&decl)
        .map(|(v, (n, _))| v.ok_or_else(|| anyhow!("missing --global {n}=...")))
        .collect::<Result<_>>()?;
    let (i, o) = p.dims();
    if x.len() != i {
        bail!("expected {i} inputs, got {}", x.len());
    }
    let env = Env::with_globals(&vals);
    let show = |b: &MemBlock| {
        (0..o)
            .map(|k| b.lookup(k).map_or("_".to_string(), |v| v.to_string()))
            .collect()
    };
    Ok(match p {
        Program::Hcol(h) => eval_hcol(&h.expr, x, &env)?
            .iter()
            .map(|v| v.to_string())
            .collect(),
        Program::Shcol(s) => densify(&eval_shcol(&s.expr, &sparsify(x), &env)?)
            .iter()
            .map(|v| v.to_string())
            .collect(),
        Program::Mshcol(m) => show(&eval_mshcol(&m.expr, &MemBlock::dense(x), &env)?),
        Program::Dhcol(c) => {
            let tl = c.top_level(vals, MemBlock::dense(x), MemBlock::new());
            let (ctx, m) = tl.build();
            let out = eval_dshoperator(&ctx, &c.op, &m, estimate_fuel(&c.op))
                .ok_or_else(|| anyhow!("out of fuel"))??;
            show(
                out.lookup(tl.y_addr())
                    .ok_or_else(|| anyhow!("output block freed"))?,
            )
        }
    })
}

fn lower_only(p: Program, name: String) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(&name, Source::Program(p));
    cfg.samples = 0;
    cfg.rf_samples = 0;
    cfg
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Parse(i) => {
            let p = read_program(&i)?;
            let (a, b) = p.dims();
            println!("{}", p.print());
            println!("; {} program, {a} inputs, {b} outputs", p.language());
        }
        Cmd::Eval { input, x, globals } => {
            let p = read_program(&input)?;
            println!("{}", eval(&p, &parse_values(&x)?, &globals)?.join(" "));
        }
        Cmd::Lower { input, to } => {
            let stage = match to.as_str() {
                "shcol" => "sigma",
                "mshcol" => "mshcol",
                "dhcol" => "dhcol",
                "fhcol" => "rf-translate",
                _ => bail!("--to must be shcol, mshcol, dhcol or fhcol"),
            };
            let cfg = lower_only(read_program(&input)?, stem_name(&input.input));
            let rep = run_pipeline(&cfg);
            match rep.stages.iter().find(|s| s.stage == stage) {
                Some(s) => println!("{}", s.artifact),
                None => bail!(
                    "{}",
                    rep.failure.map_or(
                        format!("{} programs do not pass through {to}", input.language),
                        |f| f.to_string()
                    )
                ),
            }
        }
        Cmd::EmitLlvm {
            input,
            out,
            seed,
            name,
        } => {
            let mut cfg = lower_only(
                read_program(&input)?,
                name.unwrap_or_else(|| stem_name(&input.input)),
            );
            cfg.seed = seed;
            cfg.out_ll = Some(out);
            let rep = run_pipeline(&cfg);
            if let Some(f) = rep.failure {
                bail!("{f}");
            }
            println!(
                "wrote {} ({} lines)",
                rep.ll_path.unwrap_or_default(),
                rep.ll_lines.unwrap_or(0)
            );
        }
        Cmd::Validate { input, trace, run } => {
            let mut cfg = PipelineConfig::new(
                &stem_name(&input.input),
                Source::Program(read_program(&input)?),
            );
            configure(&mut cfg, &run)?;
            if let Some(t) = trace {
                let text = std::fs::read_to_string(&t)
                    .with_context(|| format!("reading {}", t.display()))?;
                cfg.trace = Some(
                    serde_json::from_str::<Vec<TraceStep>>(&text).context("parsing the trace")?,
                );
            }
            let rep = run_pipeline(&cfg);
            summarize(&rep);
            write(&run.report, &rep.to_json())?;
            return Ok(rep.ok());
        }
        Cmd::Analyze { report, gappa } => {
            let a = dynwin::error_analysis().map_err(|e| anyhow!(e))?;
            let r = a.report();
            println!("{}", r.sexpr);
            println!(
                "lhs error <= {:e}\nrhs error <= {:e}\neps = {:e}",
                r.lhs.abs_error, r.rhs.abs_error, r.eps
            );
            write(&report, &serde_json::to_string_pretty(&r)?)?;
            write(&gappa, &a.gappa())?;
        }
        Cmd::Harness {
            seed,
            pool,
            report,
            no_run,
        } => {
            let r = runner(no_run);
            if r.is_none() {
                println!(
                    "no LLVM runner (set {RUNNER_ENV} or install lli/clang); execution is skipped"
                );
            }
            let results: Vec<_> = harness_programs()
                .iter()
                .map(|p| run_test_harness(p, seed, r.as_ref(), pool))
                .collect();
            for t in &results {
                let steps: Vec<String> = t
                    .steps
                    .iter()
                    .map(|s| format!("{}={:?}", s.step, s.status))
                    .collect();
                println!("{:<10} {}", t.program, steps.join(" "));
            }
            write(&report, &serde_json::to_string_pretty(&results)?)?;
            return Ok(results.iter().all(|t| t.ok()));
        }
        Cmd::Dynwin { run, brute_force } => {
            let mut cfg = PipelineConfig::new("dynwin", Source::DynWin);
            configure(&mut cfg, &run)?;
            let rep = run_pipeline(&cfg);
            summarize(&rep);
            let bf = dynwin_brute_force(brute_force, run.seed);
            println!(
                "{:<14} {:<48} {}",
                "fixture",
                bf.check,
                if bf.passed() { "Pass" } else { "Fail" }
            );
            let a = dynwin::error_analysis().map_err(|e| anyhow!(e))?.report();
            println!(
                "{:<14} lhs error <= {:e}, rhs error <= {:e}, eps = {:e}",
                "analysis", a.lhs.abs_error, a.rhs.abs_error, a.eps
            );
            let json = serde_json::json!({ "pipeline": rep, "fixture": bf, "analysis": a });
            write(&run.report, &serde_json::to_string_pretty(&json)?)?;
            return Ok(rep.ok() && bf.passed());
        }
    }
    Ok(true)
}
