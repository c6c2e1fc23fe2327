//! Linear measurement operators `A: C^n -> C^m`, their adjoints and diagonal
//! normal operators, plus Poisson measurement synthesis.

mod cdp;
pub mod container;
mod dense;
mod fft;
mod illumination;
mod noise;
mod ptycho;

pub use cdp::{generate_octanary_masks, CdpOperator, OCTANARY_ALPHABET};
pub use dense::DenseOperator;
pub use fft::UnitaryFft2;
pub use illumination::{generate_illumination, Illumination, ZonePlateParams};
pub use noise::{sample_poisson, NoiseSpec, PoissonSampler};
pub use ptycho::PtychoOperator;

use num_complex::Complex64 as C64;

use crate::error::{check_len, Result};
use crate::model::ComplexImage;

pub trait MeasurementOperator: Send + Sync {
    /// `(rows, cols)` of the images this operator acts on.
    fn image_shape(&self) -> (usize, usize);

    fn num_measurements(&self) -> usize;

    /// `out = A u`; slices must have lengths `n` and `m`.
    fn apply(&self, u: &[C64], out: &mut [C64]);

    /// `out = A^H z`; slices must have lengths `m` and `n`.
    fn apply_adjoint(&self, z: &[C64], out: &mut [C64]);

    /// Diagonal of `A^H A` when it is diagonal in the pixel basis.
    fn normal_diag(&self) -> Option<Vec<f64>>;

    fn num_pixels(&self) -> usize {
        let (r, c) = self.image_shape();
        r * c
    }

    fn forward(&self, u: &ComplexImage) -> Result<Vec<C64>> {
        check_len("image rows", self.image_shape().0, u.rows())?;
        check_len("image cols", self.image_shape().1, u.cols())?;
        let mut out = vec![C64::new(0.0, 0.0); self.num_measurements()];
        self.apply(u.as_slice(), &mut out);
        Ok(out)
    }

    fn adjoint(&self, z: &[C64]) -> Result<ComplexImage> {
        check_len("measurement vector", self.num_measurements(), z.len())?;
        let (rows, cols) = self.image_shape();
        let mut out = vec![C64::new(0.0, 0.0); rows * cols];
        self.apply_adjoint(z, &mut out);
        Ok(ComplexImage::from_vec_unchecked(rows, cols, out))
    }
}

/// Complex inner product `<a, b> = sum_j a_j conj(b_j)`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}
