use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fft::UnitaryFft2;
use super::MeasurementOperator;
use crate::error::{check_len, Error, Result};

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;
const S3: f64 = 1.732_050_807_568_877_2;

/// The eight octanary mask values `{±√2/2, ±√2 i/2, ±√3, ±√3 i}`.
pub const OCTANARY_ALPHABET: [C64; 8] = [
    C64::new(H, 0.0),
    C64::new(-H, 0.0),
    C64::new(0.0, H),
    C64::new(0.0, -H),
    C64::new(S3, 0.0),
    C64::new(-S3, 0.0),
    C64::new(0.0, S3),
    C64::new(0.0, -S3),
];

/// `count` i.i.d. uniform octanary masks of `rows * cols` entries each.
pub fn generate_octanary_masks(
    (rows, cols): (usize, usize),
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    if count == 0 {
        return Err(Error::InvalidParameter("at least one mask is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            (0..rows * cols)
                .map(|_| OCTANARY_ALPHABET[rng.random_range(0..OCTANARY_ALPHABET.len())])
                .collect()
        })
        .collect())
}

/// Coded diffraction patterns: `A u = [F(I_0 ∘ u); ...; F(I_{K-1} ∘ u)]` with a unitary 2-D DFT.
#[derive(Clone, Debug)]
pub struct CdpOperator {
    rows: usize,
    cols: usize,
    masks: Vec<Vec<C64>>,
    fft: UnitaryFft2,
}

impl CdpOperator {
    pub fn new((rows, cols): (usize, usize), masks: Vec<Vec<C64>>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::InvalidParameter("at least one mask is required".into()));
        }
        for m in &masks {
            check_len("mask length", rows * cols, m.len())?;
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite("mask"));
            }
        }
        Ok(Self {
            rows,
            cols,
            masks,
            fft: UnitaryFft2::new(rows, cols),
        })
    }

    pub fn octanary(shape: (usize, usize), count: usize, seed: u64) -> Result<Self> {
        Self::new(shape, generate_octanary_masks(shape, count, seed)?)
    }

    pub fn masks(&self) -> &[Vec<C64>] {
        &self.masks
    }
}

impl MeasurementOperator for CdpOperator {
    fn image_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn num_measurements(&self) -> usize {
        self.masks.len() * self.rows * self.cols
    }

    fn apply(&self, u: &[C64], out: &mut [C64]) {
        let n = self.rows * self.cols;
        assert_eq!(u.len(), n);
        assert_eq!(out.len(), self.num_measurements());
        for (mask, block) in self.masks.iter().zip(out.chunks_exact_mut(n)) {
            for ((o, m), x) in block.iter_mut().zip(mask).zip(u) {
                *o = m * x;
            }
            self.fft.forward(block);
        }
    }

    fn apply_adjoint(&self, z: &[C64], out: &mut [C64]) {
        let n = self.rows * self.cols;
        assert_eq!(z.len(), self.num_measurements());
        assert_eq!(out.len(), n);
        out.fill(C64::new(0.0, 0.0));
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for (mask, block) in self.masks.iter().zip(z.chunks_exact(n)) {
            buf.copy_from_slice(block);
            self.fft.inverse(&mut buf);
            for ((o, m), b) in out.iter_mut().zip(mask).zip(&buf) {
                *o += m.conj() * b;
            }
        }
    }

    fn normal_diag(&self) -> Option<Vec<f64>> {
        let n = self.rows * self.cols;
        let mut diag = vec![0.0; n];
        for mask in &self.masks {
            for (d, m) in diag.iter_mut().zip(mask) {
                *d += m.norm_sqr();
            }
        }
        Some(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::inner;
    use crate::measurement::testutil::random_vec;
    use crate::model::ComplexImage;

    fn ones(n: usize) -> Vec<C64> {
        vec![C64::new(1.0, 0.0); n]
    }

    #[test]
    fn impulse_with_unit_mask() {
        let op = CdpOperator::new((4, 4), vec![ones(16)]).unwrap();
        let mut u = vec![C64::new(0.0, 0.0); 16];
        u[0] = C64::new(1.0, 0.0);
        let out = op.forward(&ComplexImage::new(4, 4, u).unwrap()).unwrap();
        for z in out {
            assert!((z - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn parseval_per_mask() {
        let op = CdpOperator::octanary((6, 5), 3, 11).unwrap();
        let u = random_vec(30, 1);
        let mut out = vec![C64::new(0.0, 0.0); 90];
        op.apply(&u, &mut out);
        let lhs: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        let rhs: f64 = op
            .masks()
            .iter()
            .map(|m| m.iter().zip(&u).map(|(a, b)| (a * b).norm_sqr()).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn matches_naive_dft() {
        let (r, c) = (4, 4);
        let op = CdpOperator::octanary((r, c), 2, 5).unwrap();
        let u = random_vec(16, 2);
        let mut fast = vec![C64::new(0.0, 0.0); 32];
        op.apply(&u, &mut fast);
        let scale = 1.0 / ((r * c) as f64).sqrt();
        for (k, mask) in op.masks().iter().enumerate() {
            for p in 0..r {
                for q in 0..c {
                    let mut acc = C64::new(0.0, 0.0);
                    for x in 0..r {
                        for y in 0..c {
                            let phase = -2.0
                                * std::f64::consts::PI
                                * ((p * x) as f64 / r as f64 + (q * y) as f64 / c as f64);
                            acc += mask[x * c + y] * u[x * c + y] * C64::from_polar(1.0, phase);
                        }
                    }
                    let got = fast[k * 16 + p * c + q];
                    assert!((got - acc * scale).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        for k in [1, 2, 4] {
            let op = CdpOperator::octanary((8, 8), k, 7).unwrap();
            let u = random_vec(64, 3);
            let z = random_vec(64 * k, 4);
            let mut au = vec![C64::new(0.0, 0.0); 64 * k];
            let mut atz = vec![C64::new(0.0, 0.0); 64];
            op.apply(&u, &mut au);
            op.apply_adjoint(&z, &mut atz);
            let lhs = inner(&au, &z);
            let rhs = inner(&u, &atz);
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn unit_mask_adjoint_is_inverse_dft() {
        let op = CdpOperator::new((4, 6), vec![ones(24)]).unwrap();
        let u = random_vec(24, 8);
        let mut au = vec![C64::new(0.0, 0.0); 24];
        let mut back = vec![C64::new(0.0, 0.0); 24];
        op.apply(&u, &mut au);
        op.apply_adjoint(&au, &mut back);
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn normal_diag_constant_masks() {
        let op = CdpOperator::new((3, 3), vec![ones(9), ones(9)]).unwrap();
        assert!(op.normal_diag().unwrap().iter().all(|&d| d == 2.0));
    }

    #[test]
    fn octanary_alphabet_magnitudes_and_bounds() {
        let k = 4;
        let op = CdpOperator::octanary((16, 16), k, 99).unwrap();
        for m in op.masks() {
            for z in m {
                let p = z.norm_sqr();
                assert!((p - 0.5).abs() < 1e-15 || (p - 3.0).abs() < 1e-14);
            }
        }
        for d in op.normal_diag().unwrap() {
            assert!(d >= k as f64 * 0.5 - 1e-12 && d <= k as f64 * 3.0 + 1e-12);
        }
    }

    #[test]
    fn masks_are_seed_deterministic() {
        let a = generate_octanary_masks((5, 5), 2, 42).unwrap();
        let b = generate_octanary_masks((5, 5), 2, 42).unwrap();
        let c = generate_octanary_masks((5, 5), 2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(generate_octanary_masks((5, 5), 0, 1).is_err());
    }

    #[test]
    fn octanary_symbol_frequencies() {
        // Multinomial: each count ~ Binomial(N, 1/8); allow 3 sigma.
        let n_draws = 1_000_000;
        let masks = generate_octanary_masks((1000, 1000), 1, 2024).unwrap();
        let mut counts = [0usize; 8];
        for z in &masks[0] {
            let idx = OCTANARY_ALPHABET.iter().position(|a| a == z).unwrap();
            counts[idx] += 1;
        }
        let p = 1.0 / 8.0;
        let mean = n_draws as f64 * p;
        let sigma = (n_draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "count {c}");
        }
    }
}
