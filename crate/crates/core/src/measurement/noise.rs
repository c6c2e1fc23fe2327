use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MeasurementOperator;
use crate::error::{Error, Result};
use crate::model::{ComplexImage, MeasurementVector};

/// Peak level and seed for Poisson measurement synthesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub peak: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(peak: f64, seed: u64) -> Result<Self> {
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::InvalidParameter(format!("peak level must be positive, got {peak}")));
        }
        Ok(Self { peak, seed })
    }
}

/// Seeded Poisson generator: inversion below mean 30, PTRS transformed
/// rejection (Hörmann 1993) above.
pub struct PoissonSampler {
    rng: ChaCha8Rng,
}

const INVERSION_LIMIT: f64 = 30.0;

impl PoissonSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, mean: f64) -> f64 {
        if mean <= 0.0 {
            0.0
        } else if mean < INVERSION_LIMIT {
            self.inversion(mean)
        } else {
            self.ptrs(mean)
        }
    }

    fn inversion(&mut self, mean: f64) -> f64 {
        let u: f64 = self.rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                // cdf stalled below u through roundoff; the tail beyond here is negligible.
                break;
            }
        }
        k as f64
    }

    fn ptrs(&mut self, mean: f64) -> f64 {
        let slam = mean.sqrt();
        let loglam = mean.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.rng.random::<f64>() - 0.5;
            let v: f64 = self.rng.random();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
                <= -mean + k * loglam - ln_gamma(k + 1.0)
            {
                return k;
            }
        }
    }
}

/// Lanczos approximation (g = 7, 9 terms).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Counts `f_j ~ Poisson(|(A (peak * u))_j|^2)`, drawn in index order from one seeded stream.
pub fn sample_poisson(
    op: &dyn MeasurementOperator,
    u: &ComplexImage,
    noise: NoiseSpec,
) -> Result<MeasurementVector> {
    NoiseSpec::new(noise.peak, noise.seed)?;
    let scaled = u.scaled(noise.peak.into());
    let intensities = op.forward(&scaled)?;
    let mut sampler = PoissonSampler::new(noise.seed);
    let mut counts = Vec::with_capacity(intensities.len());
    for z in intensities {
        let mean = z.norm_sqr();
        if !mean.is_finite() {
            return Err(Error::NonFinite("intensity"));
        }
        counts.push(sampler.sample(mean));
    }
    MeasurementVector::new(counts)
}
