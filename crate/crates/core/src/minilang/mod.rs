//! MiniLang: a small deterministic imperative language whose instrumented
//! test runs produce the trace corpus.

pub mod ast;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod tree;

use thiserror::Error;

pub use ast::{Function, Program};
pub use interp::{
    run_tests, sample_decision, ExecutionReport, Lcg, PerTestSink, RunError, TestOutcome, TraceSink,
};
pub use lexer::{tokenize, Position, Token, TokenKind};
pub use parser::parse;
pub use tree::{function_tree, AstNode, NodeKind, SyntaxTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {position}: expected {}", expected.join(" or "))]
pub struct SyntaxError {
    pub position: Position,
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub fn new<I, S>(position: Position, expected: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SyntaxError { position, expected: expected.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("duplicate function `{name}` at {position}")]
    DuplicateFunction { name: String, position: Position },
    #[error("duplicate struct `{name}` at {position}")]
    DuplicateStruct { name: String, position: Position },
    #[error("test function `{name}` at {position} must take no parameters")]
    TestWithParameters { name: String, position: Position },
}
