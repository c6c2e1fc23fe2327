use num_complex::Complex64 as C64;

use super::fft::UnitaryFft2;
use super::MeasurementOperator;
use crate::error::{check_len, Error, Result};

/// Ptychographic scan: each frame is the unitary 2-D DFT of the illumination
/// times a `frame_side x frame_side` window of the image, extracted with
/// periodic wrap-around. Windows start at multiples of `slide_dist` along
/// each axis, `floor(len / slide_dist)` positions per axis, row-major order.
#[derive(Clone, Debug)]
pub struct PtychoOperator {
    rows: usize,
    cols: usize,
    illumination: Vec<C64>,
    frame_side: usize,
    slide_dist: usize,
    origins: Vec<(usize, usize)>,
    fft: UnitaryFft2,
}

impl PtychoOperator {
    pub fn new(
        (rows, cols): (usize, usize),
        illumination: Vec<C64>,
        frame_side: usize,
        slide_dist: usize,
    ) -> Result<Self> {
        check_len("illumination", frame_side * frame_side, illumination.len())?;
        if frame_side == 0 || slide_dist == 0 {
            return Err(Error::InvalidParameter(
                "frame_side and slide_dist must be positive".into(),
            ));
        }
        if frame_side > rows || frame_side > cols {
            return Err(Error::InvalidParameter(format!(
                "frame {frame_side} larger than image {rows}x{cols}"
            )));
        }
        let per_row = (rows / slide_dist).max(1);
        let per_col = (cols / slide_dist).max(1);
        let origins = (0..per_row)
            .flat_map(|i| (0..per_col).map(move |j| (i * slide_dist, j * slide_dist)))
            .collect();
        Ok(Self {
            rows,
            cols,
            illumination,
            frame_side,
            slide_dist,
            origins,
            fft: UnitaryFft2::new(frame_side, frame_side),
        })
    }

    pub fn frame_origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn frame_side(&self) -> usize {
        self.frame_side
    }

    pub fn slide_dist(&self) -> usize {
        self.slide_dist
    }

    pub fn illumination(&self) -> &[C64] {
        &self.illumination
    }

    #[inline]
    fn pixel(&self, origin: (usize, usize), a: usize, b: usize) -> usize {
        ((origin.0 + a) % self.rows) * self.cols + (origin.1 + b) % self.cols
    }
}

impl MeasurementOperator for PtychoOperator {
    fn image_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn num_measurements(&self) -> usize {
        self.origins.len() * self.frame_side * self.frame_side
    }

    fn apply(&self, u: &[C64], out: &mut [C64]) {
        let fs = self.frame_side;
        assert_eq!(u.len(), self.rows * self.cols);
        assert_eq!(out.len(), self.num_measurements());
        for (&origin, block) in self.origins.iter().zip(out.chunks_exact_mut(fs * fs)) {
            for a in 0..fs {
                for b in 0..fs {
                    block[a * fs + b] = self.illumination[a * fs + b] * u[self.pixel(origin, a, b)];
                }
            }
            self.fft.forward(block);
        }
    }

    fn apply_adjoint(&self, z: &[C64], out: &mut [C64]) {
        let fs = self.frame_side;
        assert_eq!(z.len(), self.num_measurements());
        assert_eq!(out.len(), self.rows * self.cols);
        out.fill(C64::new(0.0, 0.0));
        let mut buf = vec![C64::new(0.0, 0.0); fs * fs];
        for (&origin, block) in self.origins.iter().zip(z.chunks_exact(fs * fs)) {
            buf.copy_from_slice(block);
            self.fft.inverse(&mut buf);
            for a in 0..fs {
                for b in 0..fs {
                    out[self.pixel(origin, a, b)] +=
                        self.illumination[a * fs + b].conj() * buf[a * fs + b];
                }
            }
        }
    }

    fn normal_diag(&self) -> Option<Vec<f64>> {
        let fs = self.frame_side;
        let mut diag = vec![0.0; self.rows * self.cols];
        for &origin in &self.origins {
            for a in 0..fs {
                for b in 0..fs {
                    diag[self.pixel(origin, a, b)] += self.illumination[a * fs + b].norm_sqr();
                }
            }
        }
        Some(diag)
    }
}
