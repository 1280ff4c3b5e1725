//! Small dense helpers shared by the sparse and adaptation modules.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Stack equal-length slices as the columns of a matrix.
pub fn columns_to_matrix<'a, I>(cols: I, rows: usize) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut count = 0;
    for c in cols {
        if c.len() != rows {
            return Err(Error::Shape(format!("column of length {} where {rows} expected", c.len())));
        }
        data.extend_from_slice(c);
        count += 1;
    }
    Ok(DMatrix::from_vec(rows, count, data))
}

pub fn view(s: &[f64]) -> DVectorView<'_, f64> {
    DVectorView::from_slice(s, s.len())
}

/// Scale every column to unit l2 norm. Columns with zero norm are left alone
/// and their indices returned.
pub fn normalize_columns(m: &mut DMatrix<f64>) -> Vec<usize> {
    let mut zero = Vec::new();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 && n.is_finite() {
            col /= n;
        } else {
            zero.push(j);
        }
    }
    zero
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Serialize a matrix as `{ rows, cols, data }` with column-major data.
pub mod mat_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        Flat { rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() }.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DMatrix<f64>, D::Error> {
        let f = Flat::deserialize(de)?;
        if f.rows * f.cols != f.data.len() {
            return Err(D::Error::custom(format!(
                "matrix {}x{} with {} values",
                f.rows,
                f.cols,
                f.data.len()
            )));
        }
        Ok(DMatrix::from_vec(f.rows, f.cols, f.data))
    }
}
