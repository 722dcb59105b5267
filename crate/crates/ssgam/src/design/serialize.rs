//! JSON serialization helpers for dense matrices.
//!
//! Matrices serialize as `{ "rows": r, "cols": c, "data": [...] }` with the
//! payload in row-major order, so design containers can be inspected and
//! rebuilt outside this crate.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for DMatrix<f64> {
    type Error = String;

    fn try_from(j: MatrixJson) -> Result<Self, String> {
        if j.data.len() != j.rows * j.cols {
            return Err(format!(
                "matrix payload has {} entries, expected {}x{}",
                j.data.len(),
                j.rows,
                j.cols
            ));
        }
        Ok(DMatrix::from_row_iterator(j.rows, j.cols, j.data))
    }
}

pub mod matrix_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        DMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}

pub mod opt_matrix_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<DMatrix<f64>>, D::Error> {
        let j = Option::<MatrixJson>::deserialize(d)?;
        j.map(DMatrix::try_from)
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}
