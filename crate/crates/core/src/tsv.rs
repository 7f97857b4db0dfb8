//! Small helpers shared by the tab-separated readers and writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Parses `YYYY-MM-DD`, or `-` for an undated field.
pub fn parse_optional_date(field: &str) -> std::result::Result<Option<NaiveDate>, String> {
    let field = field.trim();
    if field == "-" {
        return Ok(None);
    }
    parse_date(field).map(Some)
}

pub fn parse_date(field: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(field.trim(), DATE_FORMAT)
        .map_err(|e| format!("bad date {field:?}: {e}"))
}

pub fn format_optional_date(date: Option<NaiveDate>) -> String {
    match date {
        Some(d) => d.format(DATE_FORMAT).to_string(),
        None => "-".to_string(),
    }
}

/// Splits a line on tabs, requiring exactly `n` fields.
pub fn fields(line: &str, n: usize) -> std::result::Result<Vec<&str>, String> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n {
        return Err(format!("expected {n} tab-separated fields, got {}", parts.len()));
    }
    Ok(parts)
}

/// True for lines a reader should skip: blank lines and `#` comments.
pub fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads every line of a file, with 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.push((i + 1, line));
    }
    Ok(out)
}

/// Reads a newline-separated list of node keys, ignoring blanks and comments.
pub fn read_key_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_lines(path)?
        .into_iter()
        .filter(|(_, l)| !is_skippable(l))
        .map(|(_, l)| l.split('\t').next().unwrap_or("").trim().to_string())
        .filter(|k| !k.is_empty())
        .collect())
}

pub fn write_key_list<'a>(path: &Path, keys: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut w = create(path)?;
    for k in keys {
        writeln!(w, "{k}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}
