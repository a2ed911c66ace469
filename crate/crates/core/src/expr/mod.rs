//! Rule and equation expressions stored in the knowledge graph.

mod equation;
mod lexer;
mod rule;

pub use equation::{parse_equation, ArithExpr, BinaryOp};
pub use lexer::CmpOp;
pub use rule::{parse_rule, Constant, FeatureLookup, RuleExpr, Value};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("division by zero")]
    DivisionByZero,
}
