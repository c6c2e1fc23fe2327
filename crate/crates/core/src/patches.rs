//! Patch extraction `R`, its adjoint (overlap-add) and the coverage weights
//! `W = sum_t R_t^T R_t`.
//!
//! Placements are interior only (no wrap), ordered row-major by top-left
//! corner; entries within a patch are row-major.

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::linalg::CMat;
use crate::model::ComplexImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchConfig {
    pub patch_side: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_side: 8,
            stride: 1,
        }
    }
}

impl PatchConfig {
    pub fn new(patch_side: usize, stride: usize) -> Result<Self> {
        if patch_side == 0 || stride == 0 {
            return Err(Error::InvalidParameter(
                "patch_side and stride must be positive".into(),
            ));
        }
        Ok(Self { patch_side, stride })
    }

    /// Patch length `l`.
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    fn axis_positions(&self, len: usize) -> Vec<usize> {
        (0..=len - self.patch_side).step_by(self.stride).collect()
    }

    /// Top-left corners of every placement.
    pub fn placements(&self, (rows, cols): (usize, usize)) -> Result<Vec<(usize, usize)>> {
        if rows < self.patch_side || cols < self.patch_side {
            return Err(Error::InvalidParameter(format!(
                "image {rows}x{cols} smaller than patch side {}",
                self.patch_side
            )));
        }
        let rs = self.axis_positions(rows);
        let cs = self.axis_positions(cols);
        Ok(rs
            .iter()
            .flat_map(|&i| cs.iter().map(move |&j| (i, j)))
            .collect())
    }

    /// Number of placements `d`.
    pub fn num_patches(&self, shape: (usize, usize)) -> Result<usize> {
        Ok(self.placements(shape)?.len())
    }
}

/// `R(u)`: an `l x d` matrix whose column `t` is the vectorized patch at placement `t`.
pub fn extract(u: &ComplexImage, cfg: &PatchConfig) -> Result<CMat> {
    let placements = cfg.placements(u.shape())?;
    let p = cfg.patch_side;
    let cols = u.cols();
    let data = u.as_slice();
    let mut out = CMat::zeros(p * p, placements.len());
    for (t, &(i, j)) in placements.iter().enumerate() {
        let mut column = out.column_mut(t);
        for a in 0..p {
            let row = &data[(i + a) * cols + j..(i + a) * cols + j + p];
            for (b, &v) in row.iter().enumerate() {
                column[a * p + b] = v;
            }
        }
    }
    Ok(out)
}

/// `sum_t R_t^T P(t)`: overlap-add of patch columns back onto the image grid.
pub fn adjoint_accumulate(
    patches: &CMat,
    cfg: &PatchConfig,
    (rows, cols): (usize, usize),
) -> Result<ComplexImage> {
    let placements = cfg.placements((rows, cols))?;
    let p = cfg.patch_side;
    check_len("patch length", p * p, patches.nrows())?;
    check_len("patch count", placements.len(), patches.ncols())?;
    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    for (t, &(i, j)) in placements.iter().enumerate() {
        let column = patches.column(t);
        for a in 0..p {
            let row = &mut out[(i + a) * cols + j..(i + a) * cols + j + p];
            for (b, v) in row.iter_mut().enumerate() {
                *v += column[a * p + b];
            }
        }
    }
    Ok(ComplexImage::from_vec_unchecked(rows, cols, out))
}

/// Per-pixel count of covering patches (diagonal of `sum_t R_t^T R_t`).
pub fn coverage_weights(cfg: &PatchConfig, (rows, cols): (usize, usize)) -> Result<Vec<f64>> {
    let placements = cfg.placements((rows, cols))?;
    let p = cfg.patch_side;
    let mut w = vec![0.0; rows * cols];
    for &(i, j) in &placements {
        for a in 0..p {
            for v in &mut w[(i + a) * cols + j..(i + a) * cols + j + p] {
                *v += 1.0;
            }
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::testutil::random_vec;

    #[test]
    fn single_placement_is_vectorized_image() {
        let data = random_vec(64, 1);
        let u = ComplexImage::new(8, 8, data.clone()).unwrap();
        let p = extract(&u, &PatchConfig::default()).unwrap();
        assert_eq!(p.ncols(), 1);
        assert_eq!(p.as_slice(), &data[..]);
        let back = adjoint_accumulate(&p, &PatchConfig::default(), (8, 8)).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn patch_count_formula() {
        let cfg = PatchConfig::default();
        assert_eq!(cfg.num_patches((10, 10)).unwrap(), 9);
        for n in [8usize, 16, 33, 128] {
            assert_eq!(cfg.num_patches((n, n)).unwrap(), (n - 7) * (n - 7));
        }
        assert!(cfg.num_patches((7, 10)).is_err());
    }

    #[test]
    fn constant_image_constant_patches() {
        let v = C64::new(0.3, -0.7);
        let u = ComplexImage::new(11, 9, vec![v; 99]).unwrap();
        let p = extract(&u, &PatchConfig::default()).unwrap();
        assert!(p.iter().all(|&z| z == v));
    }

    #[test]
    fn impulse_round_trip_scales_by_coverage() {
        let cfg = PatchConfig::default();
        let mut data = vec![C64::new(0.0, 0.0); 144];
        data[5 * 12 + 6] = C64::new(1.0, 0.0);
        let u = ComplexImage::new(12, 12, data).unwrap();
        let back = adjoint_accumulate(&extract(&u, &cfg).unwrap(), &cfg, (12, 12)).unwrap();
        let w = coverage_weights(&cfg, (12, 12)).unwrap();
        for (k, z) in back.as_slice().iter().enumerate() {
            let expected = if k == 5 * 12 + 6 { w[k] } else { 0.0 };
            assert_eq!(*z, C64::new(expected, 0.0));
        }
    }

    #[test]
    fn coverage_counts_by_direct_enumeration() {
        let cfg = PatchConfig::default();
        let w = coverage_weights(&cfg, (10, 10)).unwrap();
        let direct = |r: usize, c: usize| {
            let mut n = 0;
            for i in 0..=2 {
                for j in 0..=2 {
                    if (i..i + 8).contains(&r) && (j..j + 8).contains(&c) {
                        n += 1;
                    }
                }
            }
            n as f64
        };
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(w[r * 10 + c], direct(r, c));
            }
        }
        assert_eq!(w[0], 1.0);
        assert_eq!(w[4 * 10 + 4], 9.0);
        let big = coverage_weights(&cfg, (40, 40)).unwrap();
        assert_eq!(big[20 * 40 + 20], 64.0);
        let d = cfg.num_patches((40, 40)).unwrap();
        assert_eq!(big.iter().sum::<f64>(), (d * 64) as f64);
        assert!(big.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn coverage_is_adjoint_of_ones() {
        let cfg = PatchConfig::new(4, 1).unwrap();
        let ones = ComplexImage::new(9, 7, vec![C64::new(1.0, 0.0); 63]).unwrap();
        let acc = adjoint_accumulate(&extract(&ones, &cfg).unwrap(), &cfg, (9, 7)).unwrap();
        let w = coverage_weights(&cfg, (9, 7)).unwrap();
        for (a, b) in acc.as_slice().iter().zip(&w) {
            assert_eq!(a.re, *b);
        }
    }

    #[test]
    fn adjoint_identity() {
        for cfg in [PatchConfig::default(), PatchConfig::new(3, 2).unwrap()] {
            let shape = (13, 11);
            let u = ComplexImage::new(13, 11, random_vec(143, 2)).unwrap();
            let d = cfg.num_patches(shape).unwrap();
            let l = cfg.patch_len();
            let pm = CMat::from_vec(l, d, random_vec(l * d, 3));
            let lhs: C64 = extract(&u, &cfg)
                .unwrap()
                .iter()
                .zip(pm.iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            let back = adjoint_accumulate(&pm, &cfg, shape).unwrap();
            let rhs: C64 = u
                .as_slice()
                .iter()
                .zip(back.as_slice())
                .map(|(a, b)| a * b.conj())
                .sum();
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm());
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = PatchConfig::default();
        assert!(adjoint_accumulate(&CMat::zeros(64, 3), &cfg, (10, 10)).is_err());
        assert!(adjoint_accumulate(&CMat::zeros(60, 9), &cfg, (10, 10)).is_err());
    }
}
