//! Results file: comma-separated rows under a fixed header.
//!
//! Columns: `policy,repetition,budget,nep,ar,nep_times_ar,total_relevance,spent,perf_to_budget`.
//! `repetition` is a 0-based index for single runs and `mean` for aggregate
//! rows. `budget` is a number or `inf`. Undefined values (`ar` with no
//! enrichment, `perf_to_budget` with no spend) are written as `NA`. Reals use
//! the shortest `%.9g`-style form (9 significant digits, trailing zeros
//! dropped). Rows are sorted by policy name, then repetition (indices before
//! `mean`), then budget (ascending, `inf` last).

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::model::Budget;

pub const RESULTS_COLUMNS: [&str; 9] = [
    "policy",
    "repetition",
    "budget",
    "nep",
    "ar",
    "nep_times_ar",
    "total_relevance",
    "spent",
    "perf_to_budget",
];

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header mismatch, expected {expected:?}, found {found:?}")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: row {row}: bad {column} value {value:?}")]
    Field {
        path: PathBuf,
        row: usize,
        column: &'static str,
        value: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Repetition {
    Index(usize),
    Mean,
}

impl fmt::Display for Repetition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Repetition::Index(i) => write!(f, "{i}"),
            Repetition::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for Repetition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "mean" => Ok(Repetition::Mean),
            _ => s.parse().map(Repetition::Index).map_err(|_| ()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: String,
    pub repetition: Repetition,
    pub budget: Budget,
    /// Count for single runs, mean count for aggregate rows.
    pub nep: f64,
    pub ar: Option<f64>,
    pub nep_times_ar: f64,
    pub total_relevance: f64,
    pub spent: f64,
    pub perf_to_budget: Option<f64>,
}

impl ResultRow {
    fn order(&self, other: &Self) -> Ordering {
        self.policy
            .cmp(&other.policy)
            .then(self.repetition.cmp(&other.repetition))
            .then(self.budget.as_f64().total_cmp(&other.budget.as_f64()))
    }

    fn fields(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_sig9);
        [
            self.policy.clone(),
            self.repetition.to_string(),
            match self.budget {
                Budget::Finite(b) => fmt_sig9(b),
                Budget::Infinite => "inf".into(),
            },
            fmt_sig9(self.nep),
            opt(self.ar),
            fmt_sig9(self.nep_times_ar),
            fmt_sig9(self.total_relevance),
            fmt_sig9(self.spent),
            opt(self.perf_to_budget),
        ]
    }
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(ResultRow::order);
}

/// Results text in canonical row order.
pub fn format_results(rows: &[ResultRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_COLUMNS).expect("in-memory write");
    for row in &sorted {
        w.write_record(row.fields()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<(), ResultsError> {
    let path = path.as_ref();
    fs::write(path, format_results(rows)).map_err(|source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_results(text: &str, origin: &Path) -> Result<Vec<ResultRow>, ResultsError> {
    let csv_err = |source| ResultsError::Csv {
        path: origin.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RESULTS_COLUMNS.iter().copied()) {
        return Err(ResultsError::Header {
            path: origin.to_path_buf(),
            expected: RESULTS_COLUMNS.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |column: &'static str, value: &str| ResultsError::Field {
            path: origin.to_path_buf(),
            row: i + 1,
            column,
            value: value.to_string(),
        };
        let real = |idx: usize| -> Result<f64, ResultsError> {
            record[idx].parse::<f64>().map_err(|_| bad(RESULTS_COLUMNS[idx], &record[idx]))
        };
        let optional = |idx: usize| -> Result<Option<f64>, ResultsError> {
            if &record[idx] == "NA" {
                Ok(None)
            } else {
                real(idx).map(Some)
            }
        };
        let budget = match &record[2] {
            "inf" => Budget::Infinite,
            _ => Budget::Finite(real(2)?),
        };
        rows.push(ResultRow {
            policy: record[0].to_string(),
            repetition: record[1].parse().map_err(|_| bad("repetition", &record[1]))?,
            budget,
            nep: real(3)?,
            ar: optional(4)?,
            nep_times_ar: real(5)?,
            total_relevance: real(6)?,
            spent: real(7)?,
            perf_to_budget: optional(8)?,
        });
    }
    Ok(rows)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, ResultsError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_results(&text, path)
}
