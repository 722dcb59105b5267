//! In-memory column table shared by the design builder and prediction paths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("column '{0}' not found")]
    UnknownColumn(String),
    #[error("column '{column}' is {actual}, expected {expected}")]
    ColumnType {
        column: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("column '{column}' has {len} rows, expected {expected}")]
    LengthMismatch {
        column: String,
        len: usize,
        expected: usize,
    },
    #[error("table has no columns")]
    Empty,
}

/// Declared type of a data column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Numeric,
    Factor,
}

/// A single column: numeric values or factor level codes plus the level table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    /// `codes[i]` indexes into `levels`; levels are sorted lexicographically.
    Factor {
        codes: Vec<usize>,
        levels: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Factor { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Column::Numeric(_) => ColumnType::Numeric,
            Column::Factor { .. } => ColumnType::Factor,
        }
    }

    /// Build a factor column from raw string values; levels are the sorted
    /// distinct values.
    pub fn factor_from_strings<S: AsRef<str>>(values: &[S]) -> Column {
        let mut levels: Vec<String> = values.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let codes = values
            .iter()
            .map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap())
            .collect();
        Column::Factor { codes, levels }
    }
}

/// A named collection of equal-length columns.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnTable {
    columns: BTreeMap<String, Column>,
    n_rows: usize,
}

impl ColumnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, column: Column) -> Result<(), DataError> {
        if self.columns.is_empty() {
            self.n_rows = column.len();
        } else if column.len() != self.n_rows {
            return Err(DataError::LengthMismatch {
                column: name.to_string(),
                len: column.len(),
                expected: self.n_rows,
            });
        }
        self.columns.insert(name.to_string(), column);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        self.columns
            .get(name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], DataError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Factor { .. } => Err(DataError::ColumnType {
                column: name.to_string(),
                expected: "numeric",
                actual: "factor",
            }),
        }
    }

    pub fn factor(&self, name: &str) -> Result<(&[usize], &[String]), DataError> {
        match self.column(name)? {
            Column::Factor { codes, levels } => Ok((codes, levels)),
            Column::Numeric(_) => Err(DataError::ColumnType {
                column: name.to_string(),
                expected: "factor",
                actual: "numeric",
            }),
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    /// Column-name → type map, as consumed by formula expansion.
    pub fn schema(&self) -> BTreeMap<String, ColumnType> {
        self.columns
            .iter()
            .map(|(k, v)| (k.clone(), v.column_type()))
            .collect()
    }
}
