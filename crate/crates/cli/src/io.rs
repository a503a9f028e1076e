//! Study files. CSV has the header `set_id,treated,outcome` (any column
//! order), `#` comment lines, and one row per unit; sets keep their order of
//! first appearance and units keep file order. JSON mirrors the serde form of
//! [`MatchedStudy`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use tiltsens::{MatchedSet, MatchedStudy, Unit};

use crate::error::{CliError, Result};

const COLUMNS: [&str; 3] = ["set_id", "treated", "outcome"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Formats a float so that parsing the text gives back the same bits; never
/// more than 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Parses CSV from any reader. `source` names the input in errors.
pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<MatchedStudy> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: source.to_owned(),
        line,
        message,
    };
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        parse_err(line, e.to_string())
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let header_line = header.position().map_or(1, |p| p.line());
    let mut index = [0usize; 3];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| {
            parse_err(header_line, format!("header must contain `{}`; found `{}`", name, header.iter().collect::<Vec<_>>().join(",")))
        })?;
    }

    let mut sets: Vec<MatchedSet> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(index[k]).unwrap_or("");
        let set_id = field(0);
        if set_id.is_empty() {
            return Err(parse_err(line, "empty set_id".into()));
        }
        let treated = match field(1) {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("treated must be 0 or 1, got `{other}`"))),
        };
        let raw = field(2);
        if raw.is_empty() {
            return Err(parse_err(line, "missing outcome".into()));
        }
        let outcome: f64 = raw
            .parse()
            .map_err(|_| parse_err(line, format!("outcome `{raw}` is not a number")))?;
        if !outcome.is_finite() {
            return Err(parse_err(line, format!("outcome `{raw}` is not finite")));
        }
        let k = *by_id.entry(set_id.to_owned()).or_insert_with(|| {
            sets.push(MatchedSet {
                set_id: set_id.to_owned(),
                units: Vec::new(),
            });
            sets.len() - 1
        });
        sets[k].units.push(Unit { treated, outcome });
    }
    MatchedStudy::new(sets).map_err(|e| CliError::Study {
        path: source.to_owned(),
        source: e,
    })
}

pub fn load_csv(path: &Path) -> Result<MatchedStudy> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_csv<W: Write>(study: &MatchedStudy, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| CliError::Io {
        path: "<csv>".into(),
        source: e.into(),
    };
    w.write_record(COLUMNS).map_err(to_io)?;
    for set in study.sets() {
        for unit in &set.units {
            let treated = if unit.treated { "1" } else { "0" };
            w.write_record([set.set_id.as_str(), treated, &format_f64(unit.outcome)])
                .map_err(to_io)?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<csv>".into(),
        source,
    })
}

pub fn read_json<R: Read>(reader: R, source: &str) -> Result<MatchedStudy> {
    serde_json::from_reader(reader).map_err(|e| CliError::Parse {
        path: source.to_owned(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn load_json(path: &Path) -> Result<MatchedStudy> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_json(std::io::BufReader::new(file), &path.display().to_string())
}

/// Loads a study, choosing the format by extension (`.json`, else CSV).
pub fn load_study(path: &Path) -> Result<MatchedStudy> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => load_json(path),
        _ => load_csv(path),
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}
