//! Load series from delimited text and write series/splits back out.

use std::fs;
use std::path::{Path, PathBuf};

use psrcast_core::series::{interpolate_gaps, TimeSeries};
use serde::{Deserialize, Serialize};

/// Value column by zero-based position or header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl Default for ColumnRef {
    fn default() -> Self {
        ColumnRef::Index(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Error,
    LinearInterpolate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub column: ColumnRef,
    pub has_header: bool,
    pub delimiter: char,
    pub missing: MissingPolicy,
    pub step_minutes: f64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            column: ColumnRef::default(),
            has_header: false,
            delimiter: ',',
            missing: MissingPolicy::Error,
            step_minutes: 15.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("column {0} not present")]
    ColumnMissing(String),
    /// `row` counts data rows from 1.
    #[error("unparseable value {value:?} at row {row}")]
    UnparseableValue { row: usize, value: String },
    #[error("missing value at row {row}")]
    MissingValue { row: usize },
    #[error("gap at row {row} is not bounded by valid values")]
    LeadingOrTrailingGap { row: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn split_line(line: &str, delimiter: u8) -> Result<Vec<String>, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(line.as_bytes());
    match reader.records().next() {
        Some(Ok(rec)) => Ok(rec.iter().map(|s| s.trim().to_string()).collect()),
        Some(Err(e)) => Err(CsvError::Invalid(e.to_string())),
        None => Ok(Vec::new()),
    }
}

/// Parses delimited text. Blank lines and empty cells count as missing values.
pub fn parse_csv(text: &str, opts: &CsvOptions, name: &str) -> Result<TimeSeries, CsvError> {
    if !opts.delimiter.is_ascii() {
        return Err(CsvError::Invalid(format!("delimiter {:?} is not ASCII", opts.delimiter)));
    }
    let delim = opts.delimiter as u8;
    let mut lines = text.lines();
    let col = match (&opts.column, opts.has_header) {
        (ColumnRef::Index(i), true) => {
            lines.next();
            *i
        }
        (ColumnRef::Index(i), false) => *i,
        (ColumnRef::Name(n), true) => {
            let header = split_line(lines.next().unwrap_or(""), delim)?;
            header
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}') == n)
                .ok_or_else(|| CsvError::ColumnMissing(n.clone()))?
        }
        (ColumnRef::Name(n), false) => {
            return Err(CsvError::ColumnMissing(format!("{n} (file has no header)")));
        }
    };
    let mut raw: Vec<Option<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            raw.push(None);
            continue;
        }
        let cells = split_line(line, delim)?;
        let cell = cells
            .get(col)
            .ok_or_else(|| CsvError::ColumnMissing(format!("{:?} in row {row}", opts.column)))?;
        if cell.is_empty() {
            raw.push(None);
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => raw.push(Some(v)),
            _ => {
                return Err(CsvError::UnparseableValue {
                    row,
                    value: cell.clone(),
                })
            }
        }
    }
    let values = match opts.missing {
        MissingPolicy::Error => raw
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or(CsvError::MissingValue { row: i + 1 }))
            .collect::<Result<Vec<f64>, _>>()?,
        MissingPolicy::LinearInterpolate => interpolate_gaps(&raw).map_err(|e| match e {
            psrcast_core::Error::LeadingOrTrailingGap { index } => CsvError::LeadingOrTrailingGap { row: index + 1 },
            other => CsvError::Invalid(other.to_string()),
        })?,
    };
    TimeSeries::new(name, values, opts.step_minutes).map_err(|e| CsvError::Invalid(e.to_string()))
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<TimeSeries, CsvError> {
    if !path.is_file() {
        return Err(CsvError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    Ok(parse_csv(&text, opts, name)?.with_origin(path.display().to_string()))
}

/// Writes `index,value` rows under a header.
pub fn write_series(path: &Path, values: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:?}")])?;
    }
    w.flush()
}

/// Reads a file written by [`write_series`].
pub fn read_series(path: &Path, name: &str, step_minutes: f64) -> Result<TimeSeries, CsvError> {
    let opts = CsvOptions {
        column: ColumnRef::Name("value".into()),
        has_header: true,
        step_minutes,
        ..Default::default()
    };
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, &opts, name)
}
