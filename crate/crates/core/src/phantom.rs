//! Deterministic synthetic test objects.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ComplexImage;

fn check(rows: usize, cols: usize) -> Result<()> {
    if rows < 8 || cols < 8 {
        return Err(Error::InvalidParameter(format!("phantom must be at least 8x8, got {rows}x{cols}")));
    }
    Ok(())
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
    level: f64,
    tilt: (f64, f64),
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, min_r: f64, max_r: f64) -> Self {
        Self {
            cy: rng.random_range(0.1..0.9),
            cx: rng.random_range(0.1..0.9),
            ay: rng.random_range(min_r..max_r),
            ax: rng.random_range(min_r..max_r),
            angle: rng.random_range(0.0..std::f64::consts::PI),
            level: rng.random_range(0.2..1.0),
            tilt: (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
        }
    }

    /// Normalized radius squared; inside when below 1.
    fn radius_sq(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let v = (c * dy - s * dx) / self.ay;
        let h = (s * dy + c * dx) / self.ax;
        v * v + h * h
    }
}

/// Real piecewise-smooth image in `[0, 1]`: a shaded background with
/// overlapping shaded ellipses, similar in character to a natural photo
/// of smooth objects with sharp boundaries.
pub fn smooth_blobs(rows: usize, cols: usize, seed: u64) -> Result<ComplexImage> {
    check(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<Ellipse> = (0..9).map(|_| Ellipse::random(&mut rng, 0.08, 0.35)).collect();
    let bg = (rng.random_range(0.1..0.3), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let y = (i as f64 + 0.5) / rows as f64;
            let x = (j as f64 + 0.5) / cols as f64;
            let mut v = bg.0 + bg.1 * y + bg.2 * x;
            for e in &shapes {
                let rr = e.radius_sq(y, x);
                if rr < 1.0 {
                    v = e.level + e.tilt.0 * (y - e.cy) + e.tilt.1 * (x - e.cx) - 0.15 * rr;
                }
            }
            values.push(v);
        }
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let values: Vec<f64> = values.iter().map(|v| (v - lo) / span).collect();
    ComplexImage::from_real(rows, cols, &values)
}

/// Complex phantom of flat disks with magnitude in `[0, 1]` and the
/// constant phase `pi/4`, so real and imaginary parts are identical.
pub fn disks_phantom(rows: usize, cols: usize, seed: u64) -> Result<ComplexImage> {
    check(rows, cols)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disks: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.04..0.16),
                rng.random_range(0.4..1.0),
            )
        })
        .collect();
    let phase = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let y = (i as f64 + 0.5) / rows as f64;
            let x = (j as f64 + 0.5) / cols as f64;
            let mut m: f64 = 0.1;
            for &(cy, cx, rad, level) in &disks {
                if (y - cy).powi(2) + (x - cx).powi(2) < rad * rad {
                    m = m.max(level);
                }
            }
            data.push(phase * m);
        }
    }
    ComplexImage::new(rows, cols, data)
}
