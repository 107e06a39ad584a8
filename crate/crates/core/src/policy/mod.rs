//! Layered ABAC policies: DSL, composition, evaluation and analysis.

mod analysis;
mod ast;
mod eval;
mod parser;

pub use analysis::*;
pub use ast::*;
pub use eval::*;
pub use parser::{parse_expr, parse_policy, print_policy, ParseError};
