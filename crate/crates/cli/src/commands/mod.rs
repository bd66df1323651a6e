pub mod decode;
pub mod evaluate;
pub mod labelgen;
pub mod utils;

use std::io::Write;

use crate::error::{CliError, CliResult};

/// Writes command results to standard output in one piece.
pub fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Input(format!("cannot write results: {e}")))
}

pub fn percent(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}
