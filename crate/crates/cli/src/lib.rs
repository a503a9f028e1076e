//! Library half of the `tiltsens` command-line tool: argument parsing, run
//! configuration, study file I/O, and the subcommand bodies.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::Path;

use args::Format;
use commands::Outcome;
use error::{CliError, Result};

/// Output format: the explicit flag, else the output extension, else JSON.
pub fn output_format(flag: Option<Format>, output: Option<&Path>) -> Format {
    flag.unwrap_or_else(|| match output.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Json,
    })
}

/// Renders an outcome and writes it to `output` atomically, or to stdout.
pub fn emit(outcome: &Outcome, format: Format, output: Option<&Path>) -> Result<()> {
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&outcome.json)?;
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv.clone(),
    };
    match output {
        Some(path) => io::write_atomic(path, text.as_bytes()),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}
