//! Datasets and CSV ingestion.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{Feature, FeatureRef};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: binomial response must be 0 or 1, got {value}")]
    NonBinary { row: usize, value: f64 },
    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: expected {expected} fields, got {got}")]
    RowLength {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("dataset needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
        })
    }
}

impl FromStr for Family {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "binomial" | "logistic" => Ok(Family::Binomial),
            other => Err(DataError::UnknownFamily(other.to_string())),
        }
    }
}

/// Column-major covariates plus a response.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    y: Vec<f64>,
    response: String,
    family: Family,
}

impl Dataset {
    pub fn new(
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
        y: Vec<f64>,
        response: impl Into<String>,
        family: Family,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if n < 3 {
            return Err(DataError::TooFewRows(n));
        }
        assert_eq!(columns.len(), names.len(), "one name per column");
        let response = response.into();
        for (col, name) in columns.iter().zip(&names) {
            if col.len() != n {
                return Err(DataError::RowLength {
                    row: col.len().min(n) + 1,
                    expected: n,
                    got: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row: row + 1,
                    column: name.clone(),
                });
            }
        }
        for (row, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: row + 1,
                    column: response.clone(),
                });
            }
            if family == Family::Binomial && v != 0.0 && v != 1.0 {
                return Err(DataError::NonBinary {
                    row: row + 1,
                    value: v,
                });
            }
        }
        Ok(Dataset {
            columns,
            names,
            y,
            response,
            family,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn response(&self) -> &str {
        &self.response
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Leaf features for every covariate, in column order.
    pub fn base_covariates(&self) -> Vec<FeatureRef> {
        self.names
            .iter()
            .enumerate()
            .map(|(j, name)| Feature::leaf(j, name.as_str()))
            .collect()
    }

    /// Covariates first, response last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.response);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.columns.iter().map(|c| format!("{}", c[i])).collect();
            row.push(format!("{}", self.y[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_file(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Parses a headered CSV. Every column other than `response` becomes a
/// covariate. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, response: &str, family: Family) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let target = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| DataError::MissingColumn(response.to_string()))?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::RowLength {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(DataError::MissingValue {
                    row,
                    column: header[j].clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            columns[j].push(v);
        }
    }
    let y = columns.remove(target);
    let mut names = header;
    names.remove(target);
    Dataset::new(columns, names, y, response, family)
}

pub fn load_csv(
    path: impl AsRef<Path>,
    response: &str,
    family: Family,
) -> Result<Dataset, DataError> {
    read_csv(std::fs::File::open(path)?, response, family)
}
