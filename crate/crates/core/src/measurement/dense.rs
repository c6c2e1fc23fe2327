use num_complex::Complex64 as C64;

use super::MeasurementOperator;
use crate::error::{check_len, Result};
use crate::linalg::CMat;

/// Explicit `m x n` matrix operator. Its normal operator is generally not
/// diagonal, so image updates go through the conjugate-gradient solver.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    matrix: CMat,
}

impl DenseOperator {
    pub fn new((rows, cols): (usize, usize), matrix: CMat) -> Result<Self> {
        check_len("dense operator columns", rows * cols, matrix.ncols())?;
        Ok(Self { rows, cols, matrix })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
}

impl MeasurementOperator for DenseOperator {
    fn image_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn num_measurements(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, u: &[C64], out: &mut [C64]) {
        assert_eq!(u.len(), self.matrix.ncols());
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.matrix.row(i).iter().zip(u).map(|(a, x)| a * x).sum();
        }
    }

    fn apply_adjoint(&self, z: &[C64], out: &mut [C64]) {
        assert_eq!(z.len(), self.matrix.nrows());
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.matrix.column(j).iter().zip(z).map(|(a, y)| a.conj() * y).sum();
        }
    }

    fn normal_diag(&self) -> Option<Vec<f64>> {
        None
    }
}
