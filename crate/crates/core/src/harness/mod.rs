//! Conformance tests, coverage and the command line.

pub mod cli;
mod coverage;
mod stf;

pub use coverage::{Coverage, CoverageReport, Site};
pub use stf::*;

use std::path::Path;
use std::sync::Arc;

use crate::frontend::parse_source;
use crate::program_model::{elaborate, Program};

/// Parses and elaborates a program.
pub fn load_program(source: &str) -> Result<Arc<Program>, String> {
    let tree = parse_source(source).map_err(|e| e.to_string())?;
    Ok(Arc::new(elaborate(&tree).map_err(|e| e.to_string())?))
}

pub fn read_file(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("FILE_NOT_FOUND: {}: {e}", path.display()))
}

pub fn load_program_file(path: &Path) -> Result<Arc<Program>, String> {
    load_program(&read_file(path)?).map_err(|e| format!("{}: {e}", path.display()))
}
