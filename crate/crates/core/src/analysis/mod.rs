//! Symbolic execution, rounding-error bounds and integer range analysis.

pub mod closure;
pub mod error;
pub mod gappa;
mod sexpr;
pub mod symbolic;

pub use closure::{
    check_trace_no_overflow, closure_trace, ClosureTrace, ClosureVerdict, DSHIndexRange,
    RangeClosure, Verdict,
};
pub use error::{interval_error_bound, safe_zless, safety_margin, Dyadic, Interval};
pub use sexpr::{parse_sexpr, SExpr};
pub use symbolic::{symbolic_exec, SymbolicError};
