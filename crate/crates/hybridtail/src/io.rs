//! Series ingestion and the plain-text output formats.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    #[default]
    Right,
    /// Negate the series so the left tail becomes a right tail.
    Left,
    /// Split into a negated left half and a right half.
    Both,
}

/// Which column of a CSV file holds the series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl Default for Column {
    fn default() -> Self {
        Column::Index(0)
    }
}

impl std::str::FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSeries {
    pub values: Vec<f64>,
    /// Rows with a blank or NaN value.
    pub skipped: usize,
    pub header: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Series {
    One(Vec<f64>),
    /// `left` holds the negated observations below `split`.
    Both {
        left: Vec<f64>,
        right: Vec<f64>,
        split: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedSeries {
    pub series: Series,
    pub skipped: usize,
    pub header: Option<String>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan") || field.eq_ignore_ascii_case("na")
}

/// Reads one numeric column from CSV text. A first row whose selected field
/// is not numeric is taken as the header.
pub fn parse_series<R: Read>(reader: R, column: &Column) -> Result<RawSeries, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut skipped = 0;
    let mut header = None;
    let mut index = match column {
        Column::Index(i) => Some(*i),
        Column::Name(_) => None,
    };
    let mut last_line = 0;
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        // the reader drops blank lines; count them through the line gap
        skipped += (line.saturating_sub(last_line + 1)) as usize;
        last_line = line;
        if first {
            first = false;
            if let Column::Name(name) = column {
                let pos = record.iter().position(|f| f == name).ok_or_else(|| CliError::Parse {
                    line,
                    message: format!("no column named {name:?} in the header"),
                })?;
                index = Some(pos);
                header = Some(name.clone());
                continue;
            }
            let field = record.get(index.unwrap_or(0)).unwrap_or("");
            if !is_missing(field) && field.parse::<f64>().is_err() {
                header = Some(field.to_string());
                continue;
            }
        }
        let i = index.unwrap_or(0);
        let field = record.get(i).ok_or_else(|| CliError::Parse {
            line,
            message: format!("row has no column {i}"),
        })?;
        if is_missing(field) {
            skipped += 1;
            continue;
        }
        let x: f64 = field.parse().map_err(|_| CliError::Parse {
            line,
            message: format!("not a number: {field:?}"),
        })?;
        if x.is_nan() {
            skipped += 1;
            continue;
        }
        if !x.is_finite() {
            return Err(CliError::Parse {
                line,
                message: format!("infinite value: {field:?}"),
            });
        }
        values.push(x);
    }
    if values.is_empty() {
        return Err(CliError::EmptySeries);
    }
    Ok(RawSeries {
        values,
        skipped,
        header,
    })
}

/// Applies the tail selection. For `Both`, values below `split` go to the
/// negated left half and the rest to the right half.
pub fn select_tail(values: &[f64], tail: Tail, split: f64) -> Result<Series, CliError> {
    let series = match tail {
        Tail::Right => Series::One(values.to_vec()),
        Tail::Left => Series::One(values.iter().map(|x| -x).collect()),
        Tail::Both => {
            let (lo, hi): (Vec<f64>, Vec<f64>) = values.iter().partition(|&&x| x < split);
            Series::Both {
                left: lo.into_iter().map(|x| -x).collect(),
                right: hi,
                split,
            }
        }
    };
    match &series {
        Series::One(v) if v.is_empty() => Err(CliError::EmptySeries),
        Series::Both { left, right, .. } if left.is_empty() || right.is_empty() => Err(CliError::EmptySeries),
        _ => Ok(series),
    }
}

/// Reads a file (or stdin for `-`) and applies the tail selection.
/// `split = None` splits at the sample mode.
pub fn load_series(
    path: &str,
    column: &Column,
    tail: Tail,
    split: Option<f64>,
    mode_rule: hybridtail_core::ecdf::BandwidthRule,
) -> Result<LoadedSeries, CliError> {
    let raw = if path == "-" {
        parse_series(io::stdin().lock(), column)?
    } else {
        let file = File::open(Path::new(path)).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        parse_series(io::BufReader::new(file), column)?
    };
    let split = match split {
        Some(s) => s,
        None => hybridtail_core::ecdf::estimate_mode(&raw.values, mode_rule)?,
    };
    Ok(LoadedSeries {
        series: select_tail(&raw.values, tail, split)?,
        skipped: raw.skipped,
        header: raw.header,
    })
}

/// One value per line, shortest round-trip formatting.
pub fn write_values<W: Write>(mut out: W, values: &[f64]) -> io::Result<()> {
    for v in values {
        writeln!(out, "{v}")?;
    }
    out.flush()
}

/// CSV with the given header and rows of numbers.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// Pretty JSON plus a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
