//! A dense matrix that travels through the serializer tier.

use stf_core::comms::{Deserializer, Serializable, Serializer};
use stf_core::CommError;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols);
        Matrix { rows, cols, values }
    }
}

impl Default for Matrix {
    fn default() -> Self {
        Matrix::new(0, 0, Vec::new())
    }
}

impl Serializable for Matrix {
    fn serialize(&self, s: &mut Serializer) {
        s.append(&self.rows, "nbRows")
            .append(&self.cols, "nbCols")
            .append(&self.values, "values");
    }

    fn deserialize(d: &mut Deserializer<'_>) -> Result<Self, CommError> {
        let rows: usize = d.restore("nbRows")?;
        let cols: usize = d.restore("nbCols")?;
        let values: Vec<f64> = d.restore("values")?;
        if values.len() != rows * cols {
            return Err(CommError::Decode(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Matrix { rows, cols, values })
    }
}
