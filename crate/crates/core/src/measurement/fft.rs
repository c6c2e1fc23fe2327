use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

/// Unitary 2-D DFT on row-major buffers (`1/sqrt(rows*cols)` scaling both ways).
#[derive(Clone)]
pub struct UnitaryFft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for UnitaryFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryFft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl UnitaryFft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, buf: &mut [C64]) {
        self.transform(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [C64]) {
        self.transform(buf, &self.row_inv, &self.col_inv);
    }

    fn transform(&self, buf: &mut [C64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.len());
        let (rows, cols) = (self.rows, self.cols);
        let mut scratch =
            vec![C64::new(0.0, 0.0); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
        for r in buf.chunks_exact_mut(cols) {
            row.process_with_scratch(r, &mut scratch);
        }
        let mut column = vec![C64::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = buf[r * cols + c];
            }
            col.process_with_scratch(&mut column, &mut scratch);
            for r in 0..rows {
                buf[r * cols + c] = column[r] * self.scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::testutil::random_vec;

    #[test]
    fn impulse_maps_to_constant() {
        let fft = UnitaryFft2::new(4, 6);
        let mut buf = vec![C64::new(0.0, 0.0); 24];
        buf[0] = C64::new(1.0, 0.0);
        fft.forward(&mut buf);
        for z in &buf {
            assert!((z - C64::new(1.0 / 24f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let fft = UnitaryFft2::new(8, 5);
        let x = random_vec(40, 3);
        let mut y = x.clone();
        fft.forward(&mut y);
        let nx: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ny: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        assert!((nx - ny).abs() < 1e-12 * nx);
        fft.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
