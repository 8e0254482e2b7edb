// SPDX-License-Identifier: Apache-2.0

//! Verilog frontend: preprocess → parse → flatten.

pub mod ast;
pub mod emit;
pub mod flatten;
pub mod lexer;
pub mod parser;
pub mod preprocess;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use ast::{Ast, Loc, ModuleDecl};
pub use flatten::{flatten_hierarchy, infer_top, FlatModule};
pub use parser::{parse, parse_files};
pub use preprocess::{preprocess, preprocess_with, IncludeResolver, PreprocessedFile, UnitResolver};

/// A compilation unit: files in order, the top module and predefined macros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub files: Vec<(String, String)>,
    pub top_module: String,
    pub defines: BTreeMap<String, String>,
}

impl SourceUnit {
    pub fn single(path: &str, text: &str, top: &str) -> Self {
        Self { files: vec![(path.into(), text.into())], top_module: top.into(), defines: BTreeMap::new() }
    }
}

/// `file:line:col` position used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Span {
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(file: &str, line: u32, col: u32) -> Self {
        Self { file: file.into(), line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("source unit has no files")]
    EmptyUnit,
    #[error("{span}: cannot resolve include \"{path}\"")]
    IncludeNotFound { span: Span, path: String },
    #[error("include nesting too deep at {path}")]
    IncludeDepth { path: String },
    #[error("{span}: unterminated `ifdef")]
    UnterminatedIfdef { span: Span },
    #[error("{span}: `{directive} without matching `ifdef")]
    UnmatchedDirective { span: Span, directive: String },
    #[error("{span}: malformed `{directive}")]
    BadDirective { span: Span, directive: String },
    #[error("{span}: macro `{name} expands recursively beyond depth 16")]
    MacroRecursion { span: Span, name: String },
    #[error("{span}: undefined macro `{name}")]
    UndefinedMacro { span: Span, name: String },
    #[error("{span}: syntax error: expected {}, found `{found}`", expected.join(" or "))]
    Syntax { span: Span, expected: Vec<String>, found: String },
    #[error("{span}: unsupported: {construct}")]
    Unsupported { span: Span, construct: String },
    #[error("{span}: undeclared identifier `{name}`")]
    Undeclared { span: Span, name: String },
    #[error("{span}: `{name}` declared twice")]
    DuplicateDeclaration { span: Span, name: String },
    #[error("module `{name}` defined twice")]
    DuplicateModule { name: String },
    #[error("unknown module `{name}`")]
    UnknownModule { name: String },
    #[error("recursive instantiation: {}", cycle.join(" -> "))]
    RecursiveInstantiation { cycle: Vec<String> },
    #[error("instance `{instance}`: expected {expected} port connections, got {got}")]
    PortArityMismatch { instance: String, expected: usize, got: usize },
    #[error("instance `{instance}` has no port `{port}`")]
    UnknownPort { instance: String, port: String },
    #[error("instance `{instance}`: port `{port}` cannot be driven by a non-assignable expression")]
    BadConnection { instance: String, port: String },
    #[error("{span}: cannot evaluate constant expression ({reason})")]
    NotConstant { span: Span, reason: String },
    #[error("cannot pick a top module; candidates: {}", candidates.join(", "))]
    AmbiguousTop { candidates: Vec<String> },
}

impl FrontendError {
    /// True for constructs outside the supported subset, which corpus scans
    /// skip instead of failing on.
    pub fn is_unsupported(&self) -> bool {
        matches!(self, Self::Unsupported { .. })
    }

    pub fn span(&self) -> Option<&Span> {
        match self {
            Self::IncludeNotFound { span, .. }
            | Self::UnterminatedIfdef { span }
            | Self::UnmatchedDirective { span, .. }
            | Self::BadDirective { span, .. }
            | Self::MacroRecursion { span, .. }
            | Self::UndefinedMacro { span, .. }
            | Self::Syntax { span, .. }
            | Self::Unsupported { span, .. }
            | Self::Undeclared { span, .. }
            | Self::DuplicateDeclaration { span, .. }
            | Self::NotConstant { span, .. } => Some(span),
            _ => None,
        }
    }
}

/// Runs preprocess, parse and flatten on a unit. An empty `top_module`
/// selects the single module nobody instantiates.
pub fn elaborate(unit: &SourceUnit) -> Result<FlatModule, FrontendError> {
    elaborate_with(unit, &UnitResolver::new(unit))
}

pub fn elaborate_with(unit: &SourceUnit, resolver: &dyn IncludeResolver) -> Result<FlatModule, FrontendError> {
    let files = preprocess_with(unit, resolver)?;
    let ast = parse_files(&files)?;
    let top = if unit.top_module.is_empty() { infer_top(&ast)? } else { unit.top_module.clone() };
    flatten_hierarchy(&ast, &top)
}
