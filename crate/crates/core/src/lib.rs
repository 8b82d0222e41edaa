//! Translation-validated compiler from the HCOL vector operator language
//! through Σ-HCOL, MSHCOL and the DHCOL family down to LLVM IR text.

pub mod analysis;
pub mod carrier;
pub mod dhcol;
pub mod dynwin;
pub mod gen;
pub mod harness;
pub mod hcol;
pub mod llvmgen;
pub mod lowering;
pub mod memory;
pub mod mshcol;
pub mod pipeline;
pub mod report;
pub mod sample;
pub mod scalar;
pub mod sigma;
pub mod syntax;
