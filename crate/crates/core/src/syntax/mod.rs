//! S-expression surface syntax for every IR.

pub mod common;
pub mod dhcol;
pub mod hcol;
pub mod mshcol;
pub mod reader;
pub mod sigma;

pub use common::Scope;
pub use reader::{read_all, read_one, ParseError, Sexp};

use std::fmt;
use std::str::FromStr;

use crate::lowering::Compiled;
use crate::sigma::{sh_dims, SHExpr};

/// The four surface languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Hcol,
    Shcol,
    Mshcol,
    Dhcol,
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hcol" => Ok(Language::Hcol),
            "shcol" => Ok(Language::Shcol),
            "mshcol" => Ok(Language::Mshcol),
            "dhcol" => Ok(Language::Dhcol),
            _ => Err(format!(
                "unknown language `{s}` (expected hcol, shcol, mshcol or dhcol)"
            )),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Hcol => "hcol",
            Language::Shcol => "shcol",
            Language::Mshcol => "mshcol",
            Language::Dhcol => "dhcol",
        })
    }
}

/// A parsed Σ-HCOL program.
#[derive(Debug, Clone, PartialEq)]
pub struct SProgram {
    pub globals: Vec<(String, usize)>,
    pub expr: SHExpr,
}

pub fn parse_shcol_program(text: &str) -> Result<SProgram, ParseError> {
    let s = read_one(text)?;
    let (globals, body) = hcol::split_program(&s)?;
    let scope = Scope::with_globals(globals.clone());
    let expr = sigma::parse_shexpr(body, &scope)?;
    sh_dims(&expr).map_err(|e| s.err(e.to_string()))?;
    Ok(SProgram { globals, expr })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    Hcol(hcol::HProgram),
    Shcol(SProgram),
    Mshcol(mshcol::MProgram),
    Dhcol(Compiled),
}

impl Program {
    pub fn language(&self) -> Language {
        match self {
            Program::Hcol(_) => Language::Hcol,
            Program::Shcol(_) => Language::Shcol,
            Program::Mshcol(_) => Language::Mshcol,
            Program::Dhcol(_) => Language::Dhcol,
        }
    }

    /// Input and output dimensions.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Program::Hcol(p) => crate::hcol::dims(&p.expr).expect("checked when parsed"),
            Program::Shcol(p) => sh_dims(&p.expr).expect("checked when parsed"),
            Program::Mshcol(p) => crate::mshcol::msh_dims(&p.expr).expect("checked when parsed"),
            Program::Dhcol(c) => (c.i, c.o),
        }
    }

    /// Declared global vectors with their lengths.
    pub fn globals(&self) -> Vec<(String, usize)> {
        match self {
            Program::Hcol(p) => p.globals.clone(),
            Program::Shcol(p) => p.globals.clone(),
            Program::Mshcol(p) => p.globals.clone(),
            Program::Dhcol(c) => c
                .globals
                .iter()
                .zip(c.global_lens())
                .map(|((n, _), l)| (n.clone(), l))
                .collect(),
        }
    }

    pub fn print(&self) -> String {
        match self {
            Program::Hcol(p) => hcol::print_hcol_program(p),
            Program::Shcol(p) => print_with_globals(
                &p.globals,
                sigma::print_shexpr(&p.expr, &Scope::with_globals(p.globals.clone())),
            ),
            Program::Mshcol(p) => mshcol::print_mshcol_program(p),
            Program::Dhcol(c) => dhcol::print_dhcol_program(c),
        }
    }
}

fn print_with_globals(globals: &[(String, usize)], body: String) -> String {
    if globals.is_empty() {
        body
    } else {
        let gs: Vec<String> = globals.iter().map(|(n, l)| format!("({n} {l})")).collect();
        format!("(program (globals {}) {body})", gs.join(" "))
    }
}

pub fn parse_program(text: &str, language: Language) -> Result<Program, ParseError> {
    Ok(match language {
        Language::Hcol => Program::Hcol(hcol::parse_hcol_program(text)?),
        Language::Shcol => Program::Shcol(parse_shcol_program(text)?),
        Language::Mshcol => Program::Mshcol(mshcol::parse_mshcol_program(text)?),
        Language::Dhcol => Program::Dhcol(dhcol::parse_dhcol_program(text)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_by_language() {
        let p = parse_program("(scalarprod 3)", Language::Hcol).unwrap();
        assert_eq!(p.dims(), (6, 1));
        let p = parse_program(
            "(program (globals (a 3)) (lift (evalpoly a)))",
            Language::Shcol,
        )
        .unwrap();
        assert_eq!(
            (p.dims(), p.globals()),
            ((1, 1), vec![("a".to_string(), 3)])
        );
        assert_eq!(parse_program(&p.print(), Language::Shcol).unwrap(), p);
        assert!(parse_program("(scalarprod 3)", Language::Mshcol).is_err());
        let e = parse_program("(compose (reduction", Language::Hcol).unwrap_err();
        assert_eq!(e.line, 1);
    }
}
