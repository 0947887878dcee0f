//! The reactor language: lexing, parsing, validation and elaboration.

pub mod ast;
pub mod diag;
pub mod elaborate;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod script;
pub mod validate;

pub use diag::{Diagnostic, Diagnostics, Severity, Span};
pub use elaborate::elaborate;
pub use parser::parse;
pub use validate::{validate, CheckedModel};

use crate::instance::InstanceGraph;

/// Parses, lowers behavior blocks, validates and elaborates `source`.
pub fn compile(source: &str) -> Result<InstanceGraph, Diagnostics> {
    let program = parse(source)?;
    let program = crate::bt::lower_program(program)?;
    let model = validate(program)?;
    elaborate(&model)
}
