//! CSV ingestion with type inference and hard missing-value errors.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use ssgam::{Column, ColumnTable};

/// Read a headered CSV into a column table. A column is numeric when every
/// cell parses as a real number and no schema override declares it a
/// factor; any other column is a factor. Missing cells are hard errors.
pub fn read_table(path: &Path, schema: &BTreeMap<String, String>) -> Result<ColumnTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("reading CSV header")?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        bail!("{}: empty file", path.display());
    }
    for (name, ty) in schema {
        if !headers.contains(name) {
            bail!("schema override for unknown column '{name}'");
        }
        if ty != "factor" && ty != "numeric" {
            bail!("schema override for '{name}' must be 'factor' or 'numeric', got '{ty}'");
        }
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading row {}", row_idx + 1))?;
        for (col_idx, value) in record.iter().enumerate() {
            let value = value.trim();
            if value.is_empty() || value == "NA" {
                bail!(
                    "{}: missing value at row {}, column '{}'",
                    path.display(),
                    row_idx + 1,
                    headers[col_idx]
                );
            }
            cells[col_idx].push(value.to_string());
        }
    }
    let mut table = ColumnTable::new();
    for (col_idx, name) in headers.iter().enumerate() {
        let declared = schema.get(name).map(|s| s.as_str());
        let parsed: Option<Vec<f64>> = cells[col_idx]
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        let column = match (declared, parsed) {
            (Some("factor"), _) => Column::factor_from_strings(&cells[col_idx]),
            (Some("numeric"), Some(values)) => Column::Numeric(values),
            (Some("numeric"), None) => {
                let bad = cells[col_idx]
                    .iter()
                    .position(|v| v.parse::<f64>().is_err())
                    .unwrap_or(0);
                bail!(
                    "{}: column '{}' declared numeric but row {} holds '{}'",
                    path.display(),
                    name,
                    bad + 1,
                    cells[col_idx][bad]
                );
            }
            (None, Some(values)) => Column::Numeric(values),
            (None, None) => Column::factor_from_strings(&cells[col_idx]),
            (Some(other), _) => bail!("unsupported schema type '{other}'"),
        };
        table
            .insert(name, column)
            .with_context(|| format!("column '{name}'"))?;
    }
    Ok(table)
}

/// Read a square numeric matrix (no header) from CSV, as used for adjacency
/// and correlation structures.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row: Vec<f64> = record
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .with_context(|| format!("{}: row {}: '{}'", path.display(), i + 1, v))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: empty matrix", path.display());
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("{}: matrix is not square", path.display());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Pull the response column out of the table as a numeric vector.
pub fn response_vector(table: &ColumnTable, name: &str) -> Result<Vec<f64>> {
    Ok(table
        .numeric(name)
        .with_context(|| format!("response column '{name}'"))?
        .to_vec())
}
