//! FHCOL to LLVM IR. Code is built as a small IR AST and pretty-printed.
//! Pointers are typed (`[n x double]*`), which every LLVM release from 3.x
//! through 14 accepts in textual IR.

use std::collections::BTreeSet;
use std::fmt::{self, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::{CarrierValue, CtOp, NatValue};
use crate::dhcol::{AExpr, DSHOperator, MExpr, MemRef, NExpr, NOp, PExpr};
use crate::lowering::{Compiled, DSHType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("variable {0} is not in scope")]
    Undeclared(usize),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("natural {0} does not fit in 64 bits")]
    NatOverflow(String),
    #[error("name collision: {0}")]
    NameCollision(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    I1,
    I8,
    I32,
    I64,
    Double,
    Void,
    Array(usize, Box<Ty>),
    Ptr(Box<Ty>),
}

impl Ty {
    pub fn ptr(self) -> Ty {
        Ty::Ptr(Box::new(self))
    }

    pub fn doubles(n: usize) -> Ty {
        Ty::Array(n, Box::new(Ty::Double))
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::I1 => f.write_str("i1"),
            Ty::I8 => f.write_str("i8"),
            Ty::I32 => f.write_str("i32"),
            Ty::I64 => f.write_str("i64"),
            Ty::Double => f.write_str("double"),
            Ty::Void => f.write_str("void"),
            Ty::Array(n, t) => write!(f, "[{n} x {t}]"),
            Ty::Ptr(t) => write!(f, "{t}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Local(String),
    Global(String),
    I64(u64),
    F64(f64),
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Local(s) => write!(f, "%{s}"),
            Val::Global(s) => write!(f, "@{s}"),
            Val::I64(n) => write!(f, "{n}"),
            // LLVM's exact form: the raw IEEE bits in hexadecimal.
            Val::F64(x) => write!(f, "0x{:016X}", x.to_bits()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Alloca(Ty),
    Load(Ty, Val),
    /// `getelementptr [n x double], [n x double]* p, i64 0, i64 i`
    Gep(Ty, Val, Val),
    FBin(&'static str, Val, Val),
    IBin(&'static str, Val, Val),
    FCmp(&'static str, Val, Val),
    ICmp(&'static str, Val, Val),
    Select(Val, Ty, Val, Val),
    Phi(Ty, Vec<(Val, String)>),
    Call(Ty, String, Vec<(Ty, Val)>),
    /// `call i32 (i8*, ...) @printf(...)`
    CallVariadic(Ty, String, String, Vec<(Ty, Val)>),
    Bitcast(Ty, Val, Ty),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inst {
    Let(String, Op),
    Store(Ty, Val, Val),
    Do(Op),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Br(String),
    CondBr(Val, String, String),
    Ret(Option<(Ty, Val)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub insts: Vec<Inst>,
    pub term: Term,
}

/// Entry block and the blocks of a code fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub entry: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Doubles(Vec<f64>),
    Zero,
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDef {
    pub name: String,
    pub ty: Ty,
    pub init: Init,
    pub constant: bool,
    pub internal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub ret: Ty,
    pub params: Vec<(Ty, String)>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlvmModule {
    pub name: String,
    pub globals: Vec<GlobalDef>,
    pub decls: Vec<String>,
    pub functions: Vec<Function>,
}

/// Counters for fresh names and the typed view of the evaluation context
/// (innermost entry last).
#[derive(Debug, Clone, Default)]
pub struct IRState {
    pub block_count: usize,
    pub local_count: usize,
    pub void_count: usize,
    pub gamma: Vec<(Val, Ty)>,
    allocas: Vec<Inst>,
    consts: Vec<GlobalDef>,
    uses_fabs: bool,
}

impl IRState {
    pub fn new(gamma: Vec<(Val, Ty)>) -> Self {
        IRState {
            gamma,
            ..Default::default()
        }
    }

    pub fn block(&mut self, prefix: &str) -> String {
        let s = format!("{prefix}{}", self.block_count);
        self.block_count += 1;
        s
    }

    pub fn local(&mut self, prefix: &str) -> String {
        let s = format!("{prefix}{}", self.local_count);
        self.local_count += 1;
        s
    }

    fn void(&mut self) {
        self.void_count += 1;
    }

    fn lookup(&self, k: usize) -> Result<&(Val, Ty), CompileError> {
        let n = self.gamma.len();
        if k < n {
            Ok(&self.gamma[n - 1 - k])
        } else {
            Err(CompileError::Undeclared(k))
        }
    }

    fn with<T>(&mut self, push: Vec<(Val, Ty)>, f: impl FnOnce(&mut Self) -> T) -> T {
        let depth = self.gamma.len();
        self.gamma.extend(push);
        let r = f(self);
        self.gamma.truncate(depth);
        r
    }
}

fn nat_u64(n: &NatValue) -> Result<u64, CompileError> {
    let b = n.to_nat();
    u64::try_from(&b).map_err(|_| CompileError::NatOverflow(b.to_string()))
}

fn gen_nexpr(e: &NExpr, st: &mut IRState, code: &mut Vec<Inst>) -> Result<Val, CompileError> {
    Ok(match e {
        NExpr::Const(c) => Val::I64(nat_u64(c)?),
        NExpr::Var(k) => match st.lookup(*k)? {
            (v, Ty::I64) => v.clone(),
            (_, t) => return Err(CompileError::TypeMismatch(format!("NVar {k} has type {t}"))),
        },
        NExpr::Bin(op, a, b) => {
            let a = gen_nexpr(a, st, code)?;
            let b = gen_nexpr(b, st, code)?;
            let ins = match op {
                NOp::Plus => "add",
                NOp::Minus => "sub",
                NOp::Mult => "mul",
                NOp::Div => "udiv",
                NOp::Mod => "urem",
                NOp::Min | NOp::Max => {
                    let c = st.local("c");
                    code.push(Inst::Let(c.clone(), Op::ICmp("ult", a.clone(), b.clone())));
                    let r = st.local("n");
                    let (t, f) = if *op == NOp::Min { (a, b) } else { (b, a) };
                    code.push(Inst::Let(
                        r.clone(),
                        Op::Select(Val::Local(c), Ty::I64, t, f),
                    ));
                    return Ok(Val::Local(r));
                }
            };
            let r = st.local("n");
            code.push(Inst::Let(r.clone(), Op::IBin(ins, a, b)));
            Val::Local(r)
        }
    })
}

fn ptr_of(p: PExpr, st: &IRState) -> Result<(Val, usize), CompileError> {
    match st.lookup(p.0)? {
        (v, Ty::Ptr(t)) => match &**t {
            Ty::Array(n, _) => Ok((v.clone(), *n)),
            t => Err(CompileError::TypeMismatch(format!(
                "PVar {} points to {t}",
                p.0
            ))),
        },
        (_, t) => Err(CompileError::TypeMismatch(format!(
            "PVar {} has type {t}",
            p.0
        ))),
    }
}

/// Address of `ptr[idx]`.
fn gep(ptr: &Val, n: usize, idx: Val, st: &mut IRState, code: &mut Vec<Inst>) -> Val {
    let a = st.local("p");
    code.push(Inst::Let(
        a.clone(),
        Op::Gep(Ty::doubles(n), ptr.clone(), idx),
    ));
    Val::Local(a)
}

fn load(addr: Val, st: &mut IRState, code: &mut Vec<Inst>) -> Val {
    let v = st.local("v");
    code.push(Inst::Let(v.clone(), Op::Load(Ty::Double, addr)));
    Val::Local(v)
}

fn store(v: Val, addr: Val, st: &mut IRState, code: &mut Vec<Inst>) {
    st.void();
    code.push(Inst::Store(Ty::Double, v, addr));
}

fn load_ref(r: &MemRef, st: &mut IRState, code: &mut Vec<Inst>) -> Result<Val, CompileError> {
    let (p, n) = ptr_of(r.ptr, st)?;
    let off = gen_nexpr(&r.off, st, code)?;
    let a = gep(&p, n, off, st, code);
    Ok(load(a, st, code))
}

fn addr_ref(r: &MemRef, st: &mut IRState, code: &mut Vec<Inst>) -> Result<Val, CompileError> {
    let (p, n) = ptr_of(r.ptr, st)?;
    let off = gen_nexpr(&r.off, st, code)?;
    Ok(gep(&p, n, off, st, code))
}

fn f64_const(c: &CarrierValue) -> Result<f64, CompileError> {
    match c {
        CarrierValue::Binary64(x) => Ok(*x),
        other => Err(CompileError::TypeMismatch(format!(
            "constant {other} is not binary64"
        ))),
    }
}

fn gen_aexpr(e: &AExpr, st: &mut IRState, code: &mut Vec<Inst>) -> Result<Val, CompileError> {
    Ok(match e {
        AExpr::Const(c) => Val::F64(f64_const(c)?),
        AExpr::Var(k) => match st.lookup(*k)? {
            (v, Ty::Double) => v.clone(),
            (_, t) => return Err(CompileError::TypeMismatch(format!("AVar {k} has type {t}"))),
        },
        AExpr::Nth(m, i) => {
            let (p, n) = match m {
                MExpr::PtrDeref(p) => ptr_of(*p, st)?,
                MExpr::Const(b, size) => {
                    let n = nat_u64(size)? as usize;
                    let vals = (0..n)
                        .map(|k| b.lookup(k).map_or(Ok(0.0), f64_const))
                        .collect::<Result<Vec<_>, _>>()?;
                    let name = format!("const{}", st.consts.len());
                    st.consts.push(GlobalDef {
                        name: name.clone(),
                        ty: Ty::doubles(n),
                        init: Init::Doubles(vals),
                        constant: true,
                        internal: true,
                    });
                    (Val::Global(name), n)
                }
            };
            let i = gen_nexpr(i, st, code)?;
            let a = gep(&p, n, i, st, code);
            load(a, st, code)
        }
        AExpr::Abs(a) => {
            let a = gen_aexpr(a, st, code)?;
            st.uses_fabs = true;
            let r = st.local("a");
            code.push(Inst::Let(
                r.clone(),
                Op::Call(Ty::Double, "llvm.fabs.f64".into(), vec![(Ty::Double, a)]),
            ));
            Val::Local(r)
        }
        AExpr::Bin(op, a, b) => {
            let a = gen_aexpr(a, st, code)?;
            let b = gen_aexpr(b, st, code)?;
            let arith = match op {
                CtOp::Plus => Some("fadd"),
                CtOp::Sub => Some("fsub"),
                CtOp::Mult => Some("fmul"),
                _ => None,
            };
            if let Some(ins) = arith {
                let r = st.local("a");
                code.push(Inst::Let(r.clone(), Op::FBin(ins, a, b)));
                return Ok(Val::Local(r));
            }
            let c = st.local("c");
            code.push(Inst::Let(c.clone(), Op::FCmp("olt", a.clone(), b.clone())));
            let (t, f) = match op {
                CtOp::Min => (a, b),
                CtOp::Max => (b, a),
                CtOp::Zless => (Val::F64(1.0), Val::F64(0.0)),
                _ => {
                    return Err(CompileError::TypeMismatch(format!(
                        "{} is not binary",
                        op.name()
                    )))
                }
            };
            let r = st.local("a");
            code.push(Inst::Let(
                r.clone(),
                Op::Select(Val::Local(c), Ty::Double, t, f),
            ));
            Val::Local(r)
        }
    })
}

/// Loop skeleton: `entry` runs `init_code` and skips the loop when
/// `from >= to`; `loop` defines `loopvar` by a phi and enters the body,
/// which must branch to `loopcont`; `loopcont` increments and either
/// loops back or leaves for `nextblock`.
#[allow(clippy::too_many_arguments)]
pub fn gen_while_loop(
    prefix: &str,
    from: Val,
    to: Val,
    loopvar: &str,
    loopcont: &str,
    body_entry: &str,
    body_blocks: Vec<Block>,
    init_code: Vec<Inst>,
    nextblock: &str,
    st: &mut IRState,
) -> Segment {
    let entry = st.block(&format!("{prefix}_entry"));
    let lp = st.block(&format!("{prefix}_loop"));
    let c0 = st.local("c");
    let next_i = st.local("i");
    let c1 = st.local("c");
    let mut init = init_code;
    init.push(Inst::Let(
        c0.clone(),
        Op::ICmp("ult", from.clone(), to.clone()),
    ));
    let mut blocks = vec![
        Block {
            label: entry.clone(),
            insts: init,
            term: Term::CondBr(Val::Local(c0), lp.clone(), nextblock.into()),
        },
        Block {
            label: lp.clone(),
            insts: vec![Inst::Let(
                loopvar.into(),
                Op::Phi(
                    Ty::I64,
                    vec![
                        (from, entry.clone()),
                        (Val::Local(next_i.clone()), loopcont.into()),
                    ],
                ),
            )],
            term: Term::Br(body_entry.into()),
        },
    ];
    blocks.extend(body_blocks);
    blocks.push(Block {
        label: loopcont.into(),
        insts: vec![
            Inst::Let(
                next_i.clone(),
                Op::IBin("add", Val::Local(loopvar.into()), Val::I64(1)),
            ),
            Inst::Let(c1.clone(), Op::ICmp("ult", Val::Local(next_i), to)),
        ],
        term: Term::CondBr(Val::Local(c1), lp, nextblock.into()),
    });
    Segment { entry, blocks }
}

/// A counted loop whose body is straight-line code over the loop index.
fn simple_loop(
    prefix: &str,
    to: Val,
    init_code: Vec<Inst>,
    nextblock: &str,
    st: &mut IRState,
    body: impl FnOnce(&mut IRState, Val, &mut Vec<Inst>) -> Result<(), CompileError>,
) -> Result<Segment, CompileError> {
    let i = st.local(&format!("{prefix}_i"));
    let cont = st.block(&format!("{prefix}_lcont"));
    let b = st.block(&format!("{prefix}_body"));
    let mut code = Vec::new();
    body(st, Val::Local(i.clone()), &mut code)?;
    let body_block = Block {
        label: b.clone(),
        insts: code,
        term: Term::Br(cont.clone()),
    };
    Ok(gen_while_loop(
        prefix,
        Val::I64(0),
        to,
        &i,
        &cont,
        &b,
        vec![body_block],
        init_code,
        nextblock,
        st,
    ))
}

fn straight(prefix: &str, code: Vec<Inst>, nextblock: &str, st: &mut IRState) -> Segment {
    let b = st.block(prefix);
    Segment {
        entry: b.clone(),
        blocks: vec![Block {
            label: b,
            insts: code,
            term: Term::Br(nextblock.into()),
        }],
    }
}

/// Code for `op` in destination-passing style: control leaves through
/// `nextblock`.
pub fn gen_ir(
    op: &DSHOperator,
    nextblock: &str,
    st: &mut IRState,
) -> Result<Segment, CompileError> {
    use DSHOperator::*;
    match op {
        Nop => Ok(straight("Nop", vec![], nextblock, st)),
        Assign { src, dst } => {
            let mut code = Vec::new();
            let v = load_ref(src, st, &mut code)?;
            let a = addr_ref(dst, st, &mut code)?;
            store(v, a, st, &mut code);
            Ok(straight("Assign", code, nextblock, st))
        }
        IMap { n, x, y, f } => {
            let n = nat_u64(n)?;
            let (xp, xn) = ptr_of(*x, st)?;
            let (yp, yn) = ptr_of(*y, st)?;
            simple_loop("IMap", Val::I64(n), vec![], nextblock, st, |st, i, code| {
                let a = gep(&xp, xn, i.clone(), st, code);
                let v = load(a, st, code);
                let r = st.with(vec![(i.clone(), Ty::I64), (v, Ty::Double)], |st| {
                    gen_aexpr(f, st, code)
                })?;
                let a = gep(&yp, yn, i, st, code);
                store(r, a, st, code);
                Ok(())
            })
        }
        BinOp { n, x, y, f } => {
            let n = nat_u64(n)?;
            let (xp, xn) = ptr_of(*x, st)?;
            let (yp, yn) = ptr_of(*y, st)?;
            simple_loop(
                "BinOp",
                Val::I64(n),
                vec![],
                nextblock,
                st,
                |st, i, code| {
                    let a0 = gep(&xp, xn, i.clone(), st, code);
                    let a = load(a0, st, code);
                    let j = st.local("n");
                    code.push(Inst::Let(
                        j.clone(),
                        Op::IBin("add", i.clone(), Val::I64(n)),
                    ));
                    let b0 = gep(&xp, xn, Val::Local(j), st, code);
                    let b = load(b0, st, code);
                    let r = st.with(
                        vec![(i.clone(), Ty::I64), (a, Ty::Double), (b, Ty::Double)],
                        |st| gen_aexpr(f, st, code),
                    )?;
                    let o = gep(&yp, yn, i, st, code);
                    store(r, o, st, code);
                    Ok(())
                },
            )
        }
        MemMap2 { n, x0, x1, y, f } => {
            let n = nat_u64(n)?;
            let (p0, n0) = ptr_of(*x0, st)?;
            let (p1, n1) = ptr_of(*x1, st)?;
            let (yp, yn) = ptr_of(*y, st)?;
            simple_loop(
                "MemMap2",
                Val::I64(n),
                vec![],
                nextblock,
                st,
                |st, i, code| {
                    let a0 = gep(&p0, n0, i.clone(), st, code);
                    let a = load(a0, st, code);
                    let b0 = gep(&p1, n1, i.clone(), st, code);
                    let b = load(b0, st, code);
                    let r = st.with(vec![(a, Ty::Double), (b, Ty::Double)], |st| {
                        gen_aexpr(f, st, code)
                    })?;
                    let o = gep(&yp, yn, i, st, code);
                    store(r, o, st, code);
                    Ok(())
                },
            )
        }
        Power {
            n,
            src,
            dst,
            f,
            init,
        } => {
            let mut pre = Vec::new();
            let to = gen_nexpr(n, st, &mut pre)?;
            let d = addr_ref(dst, st, &mut pre)?;
            let s = addr_ref(src, st, &mut pre)?;
            store(Val::F64(f64_const(init)?), d.clone(), st, &mut pre);
            simple_loop("Power", to, pre, nextblock, st, |st, _, code| {
                let x = load(s, st, code);
                let acc = load(d.clone(), st, code);
                let r = st.with(vec![(acc, Ty::Double), (x, Ty::Double)], |st| {
                    gen_aexpr(f, st, code)
                })?;
                store(r, d, st, code);
                Ok(())
            })
        }
        MemInit { y, value } => {
            let (yp, yn) = ptr_of(*y, st)?;
            let v = Val::F64(f64_const(value)?);
            simple_loop(
                "MemInit",
                Val::I64(yn as u64),
                vec![],
                nextblock,
                st,
                |st, i, code| {
                    let a = gep(&yp, yn, i, st, code);
                    store(v, a, st, code);
                    Ok(())
                },
            )
        }
        Loop { n, body } => {
            let n = nat_u64(n)?;
            let i = st.local("Loop_i");
            let cont = st.block("Loop_lcont");
            let seg = st.with(vec![(Val::Local(i.clone()), Ty::I64)], |st| {
                gen_ir(body, &cont, st)
            })?;
            Ok(gen_while_loop(
                "Loop",
                Val::I64(0),
                Val::I64(n),
                &i,
                &cont,
                &seg.entry,
                seg.blocks,
                vec![],
                nextblock,
                st,
            ))
        }
        Alloc { size, body } => {
            let n = nat_u64(size)? as usize;
            let a = st.local("alloc");
            st.allocas
                .push(Inst::Let(a.clone(), Op::Alloca(Ty::doubles(n))));
            st.with(vec![(Val::Local(a), Ty::doubles(n).ptr())], |st| {
                gen_ir(body, nextblock, st)
            })
        }
        Seq(a, b) => {
            let sb = gen_ir(b, nextblock, st)?;
            let sa = gen_ir(a, &sb.entry, st)?;
            let mut blocks = sa.blocks;
            blocks.extend(sb.blocks);
            Ok(Segment {
                entry: sa.entry,
                blocks,
            })
        }
    }
}

/// A compiled FHCOL operator with its interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FSHCOLProgram {
    pub i: usize,
    pub o: usize,
    pub name: String,
    pub globals: Vec<(String, DSHType)>,
    pub op: DSHOperator,
}

impl FSHCOLProgram {
    pub fn from_compiled(name: &str, c: &Compiled) -> Self {
        FSHCOLProgram {
            i: c.i,
            o: c.o,
            name: name.into(),
            globals: c.globals.clone(),
            op: c.op.clone(),
        }
    }

    /// Number of pool values the globals and the input consume.
    pub fn data_len(&self) -> usize {
        self.globals
            .iter()
            .map(|(_, t)| global_len(t))
            .sum::<usize>()
            + self.i
    }
}

fn global_len(t: &DSHType) -> usize {
    match t {
        DSHType::Ptr(n) => *n,
        DSHType::Nat | DSHType::CType => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CodegenOptions {
    /// Internal linkage for the data globals.
    pub internal_globals: bool,
}

const RESERVED: &[&str] = &["main", "printf", "X", "Y", "fmt"];

fn check_names(p: &FSHCOLProgram) -> Result<(), CompileError> {
    let valid = |s: &str| {
        !s.is_empty()
            && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !s.starts_with(|c: char| c.is_ascii_digit())
    };
    if !valid(&p.name) || RESERVED.contains(&p.name.as_str()) {
        return Err(CompileError::NameCollision(format!(
            "program name {:?}",
            p.name
        )));
    }
    let mut seen = BTreeSet::new();
    for (g, t) in &p.globals {
        if !valid(g)
            || RESERVED.contains(&g.as_str())
            || *g == p.name
            || g.starts_with("const")
            || g.starts_with("llvm")
        {
            return Err(CompileError::NameCollision(format!("global {g:?}")));
        }
        if !seen.insert(g.as_str()) {
            return Err(CompileError::NameCollision(format!(
                "duplicate global {g:?}"
            )));
        }
        if !matches!(t, DSHType::Ptr(_)) {
            return Err(CompileError::TypeMismatch(format!(
                "global {g} must be a vector"
            )));
        }
    }
    Ok(())
}

/// The operator as `void @name([i x double]* %X, [o x double]* %Y)`.
pub fn gen_function(p: &FSHCOLProgram, st: &mut IRState) -> Result<Function, CompileError> {
    let ret = st.block("ret");
    let seg = gen_ir(&p.op, &ret, st)?;
    let entry = std::mem::take(&mut st.allocas);
    let mut blocks = vec![Block {
        label: "entry".into(),
        insts: entry,
        term: Term::Br(seg.entry.clone()),
    }];
    blocks.extend(seg.blocks);
    blocks.push(Block {
        label: ret,
        insts: vec![],
        term: Term::Ret(None),
    });
    Ok(Function {
        name: p.name.clone(),
        ret: Ty::Void,
        params: vec![
            (Ty::doubles(p.i).ptr(), "X".into()),
            (Ty::doubles(p.o).ptr(), "Y".into()),
        ],
        blocks,
    })
}

/// Whole module: data globals filled from `data` (reused cyclically),
/// the operator, and a `main` that runs it and prints every output cell
/// as the hexadecimal bits of the double.
pub fn compile_w_main(
    p: &FSHCOLProgram,
    data: &[f64],
    opts: CodegenOptions,
) -> Result<LlvmModule, CompileError> {
    check_names(p)?;
    let mut pool = data.iter().copied().cycle();
    let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| pool.next().unwrap_or(0.0)).collect() };
    let mut globals = Vec::new();
    let mut gamma = Vec::new();
    for (g, t) in &p.globals {
        let n = global_len(t);
        globals.push(GlobalDef {
            name: g.clone(),
            ty: Ty::doubles(n),
            init: Init::Doubles(take(n)),
            constant: false,
            internal: opts.internal_globals,
        });
        gamma.push((Val::Global(g.clone()), Ty::doubles(n).ptr()));
    }
    globals.push(GlobalDef {
        name: "X".into(),
        ty: Ty::doubles(p.i),
        init: Init::Doubles(take(p.i)),
        constant: false,
        internal: opts.internal_globals,
    });
    globals.push(GlobalDef {
        name: "Y".into(),
        ty: Ty::doubles(p.o),
        init: Init::Zero,
        constant: false,
        internal: opts.internal_globals,
    });
    let fmt_bytes = b"%016llx\n\0".to_vec();
    globals.push(GlobalDef {
        name: "fmt".into(),
        ty: Ty::Array(fmt_bytes.len(), Box::new(Ty::I8)),
        init: Init::Bytes(fmt_bytes.clone()),
        constant: true,
        internal: true,
    });
    // Index 0 is the first global, then X, then Y; the state keeps the
    // innermost entry last.
    let mut ctx = vec![
        (Val::Local("Y".into()), Ty::doubles(p.o).ptr()),
        (Val::Local("X".into()), Ty::doubles(p.i).ptr()),
    ];
    ctx.extend(gamma.into_iter().rev());
    let mut st = IRState::new(ctx);
    let f = gen_function(p, &mut st)?;
    globals.extend(std::mem::take(&mut st.consts));

    let mut insts = vec![Inst::Do(Op::Call(
        Ty::Void,
        p.name.clone(),
        vec![
            (Ty::doubles(p.i).ptr(), Val::Global("X".into())),
            (Ty::doubles(p.o).ptr(), Val::Global("Y".into())),
        ],
    ))];
    let fmt_ty = Ty::Array(fmt_bytes.len(), Box::new(Ty::I8));
    insts.push(Inst::Let(
        "fmt".into(),
        Op::Gep(fmt_ty, Val::Global("fmt".into()), Val::I64(0)),
    ));
    for k in 0..p.o {
        insts.push(Inst::Let(
            format!("p{k}"),
            Op::Gep(
                Ty::doubles(p.o),
                Val::Global("Y".into()),
                Val::I64(k as u64),
            ),
        ));
        insts.push(Inst::Let(
            format!("v{k}"),
            Op::Load(Ty::Double, Val::Local(format!("p{k}"))),
        ));
        insts.push(Inst::Let(
            format!("b{k}"),
            Op::Bitcast(Ty::Double, Val::Local(format!("v{k}")), Ty::I64),
        ));
        insts.push(Inst::Let(
            format!("r{k}"),
            Op::CallVariadic(
                Ty::I32,
                "(i8*, ...)".into(),
                "printf".into(),
                vec![
                    (Ty::I8.ptr(), Val::Local("fmt".into())),
                    (Ty::I64, Val::Local(format!("b{k}"))),
                ],
            ),
        ));
    }
    let main = Function {
        name: "main".into(),
        ret: Ty::I32,
        params: vec![],
        blocks: vec![Block {
            label: "entry".into(),
            insts,
            term: Term::Ret(Some((Ty::I32, Val::I64(0)))),
        }],
    };

    let mut decls = vec!["declare i32 @printf(i8*, ...)".to_string()];
    if st.uses_fabs {
        decls.insert(0, "declare double @llvm.fabs.f64(double)".into());
    }
    Ok(LlvmModule {
        name: p.name.clone(),
        globals,
        decls,
        functions: vec![f, main],
    })
}

fn emit_op(op: &Op, out: &mut String) {
    let _ = match op {
        Op::Alloca(t) => write!(out, "alloca {t}, align 8"),
        Op::Load(t, p) => write!(out, "load {t}, {t}* {p}, align 8"),
        Op::Gep(t, p, i) => write!(out, "getelementptr inbounds {t}, {t}* {p}, i64 0, i64 {i}"),
        Op::FBin(ins, a, b) => write!(out, "{ins} double {a}, {b}"),
        Op::IBin(ins, a, b) => write!(out, "{ins} i64 {a}, {b}"),
        Op::FCmp(pred, a, b) => write!(out, "fcmp {pred} double {a}, {b}"),
        Op::ICmp(pred, a, b) => write!(out, "icmp {pred} i64 {a}, {b}"),
        Op::Select(c, t, a, b) => write!(out, "select i1 {c}, {t} {a}, {t} {b}"),
        Op::Phi(t, arms) => {
            let arms: Vec<String> = arms.iter().map(|(v, l)| format!("[ {v}, %{l} ]")).collect();
            write!(out, "phi {t} {}", arms.join(", "))
        }
        Op::Call(t, f, args) => {
            let args: Vec<String> = args.iter().map(|(t, v)| format!("{t} {v}")).collect();
            write!(out, "call {t} @{f}({})", args.join(", "))
        }
        Op::CallVariadic(t, sig, f, args) => {
            let args: Vec<String> = args.iter().map(|(t, v)| format!("{t} {v}")).collect();
            write!(out, "call {t} {sig} @{f}({})", args.join(", "))
        }
        Op::Bitcast(a, v, b) => write!(out, "bitcast {a} {v} to {b}"),
    };
}

fn emit_block(b: &Block, out: &mut String) {
    let _ = writeln!(out, "{}:", b.label);
    for i in &b.insts {
        out.push_str("  ");
        match i {
            Inst::Let(x, op) => {
                let _ = write!(out, "%{x} = ");
                emit_op(op, out);
            }
            Inst::Store(t, v, p) => {
                let _ = write!(out, "store {t} {v}, {t}* {p}, align 8");
            }
            Inst::Do(op) => emit_op(op, out),
        }
        out.push('\n');
    }
    let _ = match &b.term {
        Term::Br(l) => writeln!(out, "  br label %{l}"),
        Term::CondBr(c, t, f) => writeln!(out, "  br i1 {c}, label %{t}, label %{f}"),
        Term::Ret(None) => writeln!(out, "  ret void"),
        Term::Ret(Some((t, v))) => writeln!(out, "  ret {t} {v}"),
    };
}

fn emit_global(g: &GlobalDef, out: &mut String) {
    let linkage = if g.internal { "internal " } else { "" };
    let kind = if g.constant { "constant" } else { "global" };
    let init = match &g.init {
        Init::Zero => "zeroinitializer".to_string(),
        Init::Doubles(xs) if xs.is_empty() => "zeroinitializer".to_string(),
        Init::Doubles(xs) => {
            let xs: Vec<String> = xs
                .iter()
                .map(|x| format!("double {}", Val::F64(*x)))
                .collect();
            format!("[{}]", xs.join(", "))
        }
        Init::Bytes(bs) => {
            let mut s = String::from("c\"");
            for &b in bs {
                if b.is_ascii_graphic() && b != b'"' && b != b'\\' || b == b' ' {
                    s.push(b as char);
                } else {
                    let _ = write!(s, "\\{b:02X}");
                }
            }
            s.push('"');
            s
        }
    };
    let _ = writeln!(
        out,
        "@{} = {linkage}{kind} {} {init}, align 8",
        g.name, g.ty
    );
}

/// Textual LLVM IR.
pub fn emit_text(m: &LlvmModule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "; ModuleID = '{}'", m.name);
    let _ = writeln!(out, "source_filename = \"{}.ll\"", m.name);
    out.push('\n');
    for g in &m.globals {
        emit_global(g, &mut out);
    }
    out.push('\n');
    for d in &m.decls {
        let _ = writeln!(out, "{d}");
    }
    for f in &m.functions {
        out.push('\n');
        let params: Vec<String> = f.params.iter().map(|(t, n)| format!("{t} %{n}")).collect();
        let _ = writeln!(
            out,
            "define {} @{}({}) {{",
            f.ret,
            f.name,
            params.join(", ")
        );
        for (k, b) in f.blocks.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            emit_block(b, &mut out);
        }
        let _ = writeln!(out, "}}");
    }
    out
}

/// How to execute a module: a user command taking the `.ll` path, `lli`,
/// or `clang` (compile, then run the binary).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Runner {
    Custom(PathBuf),
    Lli(PathBuf),
    Clang(PathBuf),
}

pub const RUNNER_ENV: &str = "HCOLC_LLVM_RUNNER";

fn which(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

pub fn detect_runner() -> Option<Runner> {
    if let Some(p) = std::env::var_os(RUNNER_ENV).filter(|p| !p.is_empty()) {
        return Some(Runner::Custom(PathBuf::from(p)));
    }
    which("lli")
        .map(Runner::Lli)
        .or_else(|| which("clang").map(Runner::Clang))
}

fn scratch(stem: &str) -> PathBuf {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static N: AtomicUsize = AtomicUsize::new(0);
    let n = N.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("hcolc-{}-{n}-{stem}", std::process::id()))
}

fn output_of(cmd: &mut Command) -> Result<String, String> {
    let out = cmd
        .output()
        .map_err(|e| format!("cannot start {cmd:?}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "{cmd:?} failed: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

/// Run the module and return its standard output.
pub fn run_module(r: &Runner, ir: &str) -> Result<String, String> {
    let ll = scratch("module.ll");
    std::fs::write(&ll, ir).map_err(|e| e.to_string())?;
    let res = match r {
        Runner::Custom(p) | Runner::Lli(p) => output_of(Command::new(p).arg(&ll)),
        Runner::Clang(p) => {
            let exe = scratch("module.bin");
            let built = output_of(
                Command::new(p)
                    .args(["-O0", "-Wno-override-module", "-x", "ir"])
                    .arg(&ll)
                    .arg("-o")
                    .arg(&exe),
            );
            let r = built.and_then(|_| output_of(&mut Command::new(&exe)));
            let _ = std::fs::remove_file(&exe);
            r
        }
    };
    let _ = std::fs::remove_file(&ll);
    res
}

/// Parse `main`'s output: one 16-digit hexadecimal word per line.
pub fn parse_output(s: &str) -> Result<Vec<f64>, String> {
    s.lines()
        .map(|l| {
            u64::from_str_radix(l.trim(), 16)
                .map(f64::from_bits)
                .map_err(|e| format!("bad output line {l:?}: {e}"))
        })
        .collect()
}

pub fn write_module(path: &Path, m: &LlvmModule) -> std::io::Result<()> {
    std::fs::write(path, emit_text(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nc(n: u64) -> NExpr {
        NExpr::Const(NatValue::U64(n))
    }

    fn prog(op: DSHOperator, i: usize, o: usize) -> FSHCOLProgram {
        FSHCOLProgram {
            i,
            o,
            name: "op".into(),
            globals: vec![],
            op,
        }
    }

    #[test]
    fn loop_names_are_fresh() {
        let mut st = IRState::new(vec![]);
        let a = gen_while_loop(
            "L",
            Val::I64(0),
            Val::I64(0),
            "i",
            "c",
            "b",
            vec![],
            vec![],
            "next",
            &mut st,
        );
        let b = gen_while_loop(
            "L",
            Val::I64(0),
            Val::I64(0),
            "j",
            "d",
            "e",
            vec![],
            vec![],
            "next",
            &mut st,
        );
        assert_ne!(a.entry, b.entry);
    }

    #[test]
    fn out_of_scope_pointer_is_rejected() {
        let op = DSHOperator::Assign {
            src: MemRef::new(PExpr(0), nc(0)),
            dst: MemRef::new(PExpr(7), nc(0)),
        };
        assert_eq!(
            compile_w_main(&prog(op, 1, 1), &[1.0], CodegenOptions::default()),
            Err(CompileError::Undeclared(7))
        );
    }

    #[test]
    fn duplicate_globals_collide() {
        let mut p = prog(DSHOperator::Nop, 1, 1);
        p.globals = vec![("a".into(), DSHType::Ptr(1)), ("a".into(), DSHType::Ptr(2))];
        assert!(matches!(
            compile_w_main(&p, &[1.0], CodegenOptions::default()),
            Err(CompileError::NameCollision(_))
        ));
        p.globals = vec![("main".into(), DSHType::Ptr(1))];
        assert!(matches!(
            compile_w_main(&p, &[1.0], CodegenOptions::default()),
            Err(CompileError::NameCollision(_))
        ));
    }

    #[test]
    fn doubles_are_hex_and_naturals_decimal() {
        let op = DSHOperator::MemInit {
            y: PExpr(1),
            value: CarrierValue::Binary64(0.1),
        };
        let text =
            emit_text(&compile_w_main(&prog(op, 1, 3), &[2.5], CodegenOptions::default()).unwrap());
        assert!(text.contains("store double 0x3FB999999999999A"));
        assert!(text.contains("icmp ult i64 0, 3"));
        assert!(text.contains("@X = global [1 x double] [double 0x4004000000000000]"));
    }

    #[test]
    fn nat_overflow_is_a_compile_error() {
        let op = DSHOperator::Loop {
            n: NatValue::BigNat(num_bigint::BigUint::from(1u8) << 64usize),
            body: Box::new(DSHOperator::Nop),
        };
        assert!(matches!(
            compile_w_main(&prog(op, 1, 1), &[], CodegenOptions::default()),
            Err(CompileError::NatOverflow(_))
        ));
    }
}
