//! Front end for `.pd` programs: lexer, parser and the source-tag pass.

pub mod ast;
mod lexer;
mod parser;
pub mod tags;

use thiserror::Error;

pub use ast::{Program, Span};
pub use tags::{collect_tagged_locations, tag_table, TagTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Self { span, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub uri: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(uri: impl Into<String>, text: impl Into<String>) -> Self {
        Self { uri: uri.into(), text: text.into() }
    }
}

/// Parses a whole program. Pure: equal text gives an equal tree.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    parser::parse_program(text)
}
