//! The App-IR bundle format: a line-oriented text stand-in for a decoded
//! APK (manifest facts, layout and navigation resources, and classes with
//! straight-line method bodies).

mod model;
mod obfuscate;
mod parse;
mod validate;
mod write;

pub use model::*;
pub use obfuscate::{apply_rename_map, apply_rename_obfuscation, rename_map, RenameMap, KEPT_METHOD_NAMES};
pub use parse::{parse_bundle, parse_bundle_with_source_map, parse_unvalidated, SourceMap, HEADER};
pub use validate::{validate, Location, Violation, ViolationKind};
pub use write::{write_bundle, write_instruction};

use thiserror::Error;

fn at(line: &Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

#[derive(Debug, Error)]
pub enum AppIrError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("dangling reference `{name}`{}", at(.line))]
    DanglingReference { name: String, line: Option<usize> },
    #[error("duplicate name `{name}`{}", at(.line))]
    DuplicateName { name: String, line: Option<usize> },
    #[error("invalid bundle: {violation}{}", at(.line))]
    Invalid {
        violation: Violation,
        line: Option<usize>,
    },
}
