//! Compiler test harness: run a FHCOL program both as generated LLVM IR
//! and under the reference evaluator, then compare the outputs bit for bit.

use rand::Rng;
use serde::Serialize;

use crate::carrier::{CarrierValue, CtOp, NatKind, NatValue};
use crate::dhcol::{
    estimate_fuel, eval_dshoperator, AExpr, DSHOperator, MExpr, MemRef, NExpr, NOp, PExpr, TopLevel,
};
use crate::llvmgen::{
    compile_w_main, emit_text, parse_output, run_module, CodegenOptions, FSHCOLProgram, Runner,
};
use crate::lowering::DSHType;
use crate::memory::MemBlock;
use crate::sample;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail")]
pub enum Status {
    Pass,
    Fail(String),
    Skipped(String),
}

impl Status {
    pub fn ok(&self) -> bool {
        !matches!(self, Status::Fail(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub step: &'static str,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub program: String,
    pub seed: u64,
    pub pool_len: usize,
    pub ir_lines: usize,
    pub steps: Vec<Step>,
    #[serde(skip)]
    pub ir: String,
}

impl TestResult {
    pub fn ok(&self) -> bool {
        self.steps.iter().all(|s| s.status.ok())
    }

    pub fn status(&self, step: &str) -> Option<&Status> {
        self.steps
            .iter()
            .find(|s| s.step == step)
            .map(|s| &s.status)
    }
}

/// Seeded pool of small binary64 values.
pub fn random_pool(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = sample::rng(seed);
    (0..n.max(1))
        .map(|_| (rng.gen_range(-4096i64..=4096) as f64) / 64.0 + rng.gen_range(0.0..1.0))
        .collect()
}

fn f64s(xs: &[f64]) -> Vec<CarrierValue> {
    xs.iter().map(|&x| CarrierValue::Binary64(x)).collect()
}

/// Run the five steps. `pool_len` defaults to what the program consumes;
/// a shorter pool is reused cyclically in both executions.
pub fn run_test_harness(
    p: &FSHCOLProgram,
    seed: u64,
    runner: Option<&Runner>,
    pool_len: Option<usize>,
) -> TestResult {
    let need = p.data_len();
    let pool = random_pool(seed, pool_len.unwrap_or(need));
    let mut res = TestResult {
        program: p.name.clone(),
        seed,
        pool_len: pool.len(),
        ir_lines: 0,
        steps: Vec::new(),
        ir: String::new(),
    };
    res.steps.push(Step {
        step: "pool",
        status: Status::Pass,
    });

    let module = compile_w_main(p, &pool, CodegenOptions::default());
    let ir = match module {
        Ok(m) => {
            res.steps.push(Step {
                step: "compile",
                status: Status::Pass,
            });
            emit_text(&m)
        }
        Err(e) => {
            res.steps.push(Step {
                step: "compile",
                status: Status::Fail(e.to_string()),
            });
            String::new()
        }
    };
    res.ir_lines = ir.lines().count();

    let executed = match (runner, ir.is_empty()) {
        (_, true) => {
            res.steps.push(Step {
                step: "execute",
                status: Status::Skipped("nothing compiled".into()),
            });
            None
        }
        (None, false) => {
            res.steps.push(Step {
                step: "execute",
                status: Status::Skipped("no LLVM runner available".into()),
            });
            None
        }
        (Some(r), false) => match run_module(r, &ir).and_then(|s| parse_output(&s)) {
            Ok(v) if v.len() == p.o => {
                res.steps.push(Step {
                    step: "execute",
                    status: Status::Pass,
                });
                Some(v)
            }
            Ok(v) => {
                res.steps.push(Step {
                    step: "execute",
                    status: Status::Fail(format!("expected {} outputs, got {}", p.o, v.len())),
                });
                None
            }
            Err(e) => {
                res.steps.push(Step {
                    step: "execute",
                    status: Status::Fail(e),
                });
                None
            }
        },
    };
    res.ir = ir;

    let reference = eval_reference(p, &pool);
    match &reference {
        Ok(_) => res.steps.push(Step {
            step: "evaluate",
            status: Status::Pass,
        }),
        Err(e) => res.steps.push(Step {
            step: "evaluate",
            status: Status::Fail(e.clone()),
        }),
    }

    let compare = match (executed, reference) {
        (Some(got), Ok(want)) => {
            let diff: Vec<String> = got
                .iter()
                .zip(&want)
                .enumerate()
                .filter(|(_, (g, w))| g.to_bits() != w.to_bits())
                .map(|(k, (g, w))| {
                    format!(
                        "Y[{k}]: llvm {g:e} ({:016x}) vs fhcol {w:e} ({:016x})",
                        g.to_bits(),
                        w.to_bits()
                    )
                })
                .collect();
            if diff.is_empty() {
                Status::Pass
            } else {
                Status::Fail(diff.join("; "))
            }
        }
        (None, _) => Status::Skipped("no executed output".into()),
        (_, Err(_)) => Status::Skipped("no reference output".into()),
    };
    res.steps.push(Step {
        step: "compare",
        status: compare,
    });
    res
}

/// FHCOL evaluation on the same data layout the module uses: globals then
/// X from the cyclic pool, Y zero-filled.
pub fn eval_reference(p: &FSHCOLProgram, pool: &[f64]) -> Result<Vec<f64>, String> {
    let mut it = pool.iter().copied().cycle();
    let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| it.next().unwrap_or(0.0)).collect() };
    let mut globals = Vec::new();
    for (g, t) in &p.globals {
        match t {
            DSHType::Ptr(n) => globals.push(f64s(&take(*n))),
            _ => return Err(format!("global {g} is not a vector")),
        }
    }
    let x = take(p.i);
    let tl = TopLevel {
        globals,
        x: MemBlock::dense(&f64s(&x)),
        x_size: p.i,
        y: MemBlock::dense(&f64s(&vec![0.0; p.o])),
        y_size: p.o,
        nat: NatKind::U64,
    };
    let (ctx, m) = tl.build();
    let out = match eval_dshoperator(&ctx, &p.op, &m, estimate_fuel(&p.op)) {
        None => return Err("out of fuel".into()),
        Some(Err(e)) => return Err(e.to_string()),
        Some(Ok(m)) => m,
    };
    let y = out.lookup(tl.y_addr()).ok_or("Y was freed")?;
    (0..p.o)
        .map(|k| match y.lookup(k) {
            Some(CarrierValue::Binary64(v)) => Ok(*v),
            Some(v) => Err(format!("Y[{k}] = {v} is not a double")),
            None => Err(format!("Y[{k}] is unset")),
        })
        .collect()
}

fn u(n: u64) -> NatValue {
    NatValue::U64(n)
}

fn nc(n: u64) -> NExpr {
    NExpr::Const(u(n))
}

fn d(x: f64) -> CarrierValue {
    CarrierValue::Binary64(x)
}

fn prog(
    name: &str,
    i: usize,
    o: usize,
    globals: &[(&str, usize)],
    op: DSHOperator,
) -> FSHCOLProgram {
    FSHCOLProgram {
        i,
        o,
        name: name.into(),
        globals: globals
            .iter()
            .map(|(g, n)| (g.to_string(), DSHType::Ptr(*n)))
            .collect(),
        op,
    }
}

/// The suite: one program per DHCOL operator, the Chebyshev distance and
/// the dynamic window monitor, all compiled for binary64.
pub fn harness_programs() -> Vec<FSHCOLProgram> {
    use DSHOperator::*;
    // Context for one global `g`: g = PVar 0, X = PVar 1, Y = PVar 2.
    let (g, x, y) = (PExpr(0), PExpr(1), PExpr(2));
    let nth = |p: PExpr, k: NExpr| AExpr::Nth(MExpr::PtrDeref(p), k);
    let gl = [("g", 2)];
    let mut v = vec![
        prog("nop", 3, 3, &gl, Nop),
        prog(
            "assign",
            3,
            2,
            &gl,
            DSHOperator::seq(
                Assign {
                    src: MemRef::new(x, nc(2)),
                    dst: MemRef::new(y, nc(0)),
                },
                Assign {
                    src: MemRef::new(g, nc(1)),
                    dst: MemRef::new(y, nc(1)),
                },
            ),
        ),
        prog(
            "imap",
            4,
            4,
            &gl,
            IMap {
                n: u(4),
                x,
                y,
                // v * g[i mod 2] + |v|, with the pointer seen under two binders.
                f: AExpr::bin(
                    CtOp::Plus,
                    AExpr::bin(
                        CtOp::Mult,
                        AExpr::Var(0),
                        nth(g.incr(2), NExpr::bin(NOp::Mod, NExpr::Var(1), nc(2))),
                    ),
                    AExpr::Abs(Box::new(AExpr::Var(0))),
                ),
            },
        ),
        prog(
            "binop",
            6,
            3,
            &gl,
            BinOp {
                n: u(3),
                x,
                y,
                f: AExpr::bin(
                    CtOp::Max,
                    AExpr::bin(CtOp::Sub, AExpr::Var(1), AExpr::Var(0)),
                    AExpr::Const(d(0.5)),
                ),
            },
        ),
        prog(
            "memmap2",
            2,
            2,
            &gl,
            MemMap2 {
                n: u(2),
                x0: g,
                x1: x,
                y,
                f: AExpr::bin(CtOp::Zless, AExpr::Var(1), AExpr::Var(0)),
            },
        ),
        prog(
            "power",
            1,
            1,
            &gl,
            Power {
                n: nc(5),
                src: MemRef::new(x, nc(0)),
                dst: MemRef::new(y, nc(0)),
                f: AExpr::bin(
                    CtOp::Plus,
                    AExpr::bin(CtOp::Mult, AExpr::Var(1), AExpr::Var(0)),
                    AExpr::Const(d(1.0)),
                ),
                init: d(0.0),
            },
        ),
        prog(
            "loop",
            4,
            4,
            &gl,
            Loop {
                n: u(4),
                body: Box::new(Assign {
                    src: MemRef::new(x.incr(1), NExpr::bin(NOp::Minus, nc(3), NExpr::Var(0))),
                    dst: MemRef::new(y.incr(1), NExpr::Var(0)),
                }),
            },
        ),
        prog(
            "alloc",
            3,
            3,
            &gl,
            Alloc {
                size: u(3),
                body: Box::new(DSHOperator::seq(
                    IMap {
                        n: u(3),
                        x: x.incr(1),
                        y: PExpr(0),
                        f: AExpr::bin(CtOp::Mult, AExpr::Var(0), AExpr::Var(0)),
                    },
                    Loop {
                        n: u(3),
                        body: Box::new(Assign {
                            src: MemRef::new(PExpr(1), NExpr::Var(0)),
                            dst: MemRef::new(
                                y.incr(2),
                                NExpr::bin(NOp::Minus, nc(2), NExpr::Var(0)),
                            ),
                        }),
                    },
                )),
            },
        ),
        prog("meminit", 2, 3, &gl, MemInit { y, value: d(-2.5) }),
        prog(
            "seq",
            2,
            2,
            &gl,
            DSHOperator::seq(
                BinOp {
                    n: u(1),
                    x,
                    y,
                    f: AExpr::bin(CtOp::Min, AExpr::Var(1), AExpr::Var(0)),
                },
                Assign {
                    src: MemRef::new(y, nc(0)),
                    dst: MemRef::new(y, nc(1)),
                },
            ),
        ),
    ];
    v.push(FSHCOLProgram::from_compiled(
        "chebyshev",
        &crate::pipeline::chebyshev_fhcol(),
    ));
    v.push(FSHCOLProgram::from_compiled(
        "dynwin",
        &crate::dynwin::fhcol(),
    ));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_covers_every_operator() {
        let ps = harness_programs();
        assert_eq!(ps.len(), 12);
        let mut names: Vec<&str> = Vec::new();
        fn walk<'a>(op: &'a DSHOperator, out: &mut Vec<&'a str>) {
            out.push(op.name());
            match op {
                DSHOperator::Loop { body, .. } | DSHOperator::Alloc { body, .. } => walk(body, out),
                DSHOperator::Seq(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        for p in &ps {
            walk(&p.op, &mut names);
        }
        for op in [
            "DSHNop",
            "DSHAssign",
            "DSHIMap",
            "DSHBinOp",
            "DSHMemMap2",
            "DSHPower",
            "DSHLoop",
            "DSHAlloc",
            "DSHMemInit",
            "DSHSeq",
        ] {
            assert!(names.contains(&op), "{op}");
        }
    }

    #[test]
    fn without_runner_execution_is_skipped() {
        for p in harness_programs() {
            let r = run_test_harness(&p, 7, None, None);
            assert_eq!(r.status("pool"), Some(&Status::Pass));
            assert_eq!(r.status("compile"), Some(&Status::Pass), "{}", p.name);
            assert!(matches!(r.status("execute"), Some(Status::Skipped(_))));
            assert_eq!(r.status("evaluate"), Some(&Status::Pass), "{}", p.name);
            assert!(matches!(r.status("compare"), Some(Status::Skipped(_))));
        }
    }

    #[test]
    fn short_pool_is_cyclic() {
        let p = &harness_programs()[2];
        let pool = random_pool(3, 2);
        let y = eval_reference(p, &pool).unwrap();
        // X = [pool0, pool1, pool0, pool1] after g took both values.
        assert_eq!(y.len(), 4);
        assert_eq!(y[0].to_bits(), y[2].to_bits());
    }
}
