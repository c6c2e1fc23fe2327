use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;

use super::container::{self, MAGIC_MASK};
use crate::error::{Error, Result};

/// Constants of the synthetic zone-plate-like probe. Radii are in units of
/// half the frame side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZonePlateParams {
    /// Quadratic phase coefficient: phase = pi * chirp * rho^2.
    pub chirp: f64,
    /// Support radius.
    pub support: f64,
    /// Gaussian apodization width.
    pub apodization: f64,
}

impl Default for ZonePlateParams {
    fn default() -> Self {
        Self {
            chirp: 6.0,
            support: 0.9,
            apodization: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Illumination<'a> {
    ZonePlateSynthetic(ZonePlateParams),
    FromFile(&'a Path),
}

/// Builds a `frame_side x frame_side` probe, row-major, normalized to `max |w| = 1`.
pub fn generate_illumination(frame_side: usize, kind: Illumination<'_>) -> Result<Vec<C64>> {
    if frame_side < 8 {
        return Err(Error::InvalidParameter(format!(
            "frame_side must be at least 8, got {frame_side}"
        )));
    }
    let mut probe = match kind {
        Illumination::ZonePlateSynthetic(p) => zone_plate(frame_side, p),
        Illumination::FromFile(path) => {
            let (rows, cols, data) = container::read_file(path, MAGIC_MASK)?;
            if rows != frame_side || cols != frame_side {
                return Err(Error::Format {
                    offset: 4,
                    msg: format!("illumination is {rows}x{cols}, expected {frame_side}x{frame_side}"),
                });
            }
            data
        }
    };
    let peak = probe.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Domain("illumination is identically zero".into()));
    }
    for z in &mut probe {
        *z /= peak;
    }
    Ok(probe)
}

fn zone_plate(frame_side: usize, p: ZonePlateParams) -> Vec<C64> {
    let half = frame_side as f64 / 2.0;
    let center = (frame_side as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(frame_side * frame_side);
    for a in 0..frame_side {
        for b in 0..frame_side {
            let dy = (a as f64 - center) / half;
            let dx = (b as f64 - center) / half;
            let rho2 = dx * dx + dy * dy;
            if rho2.sqrt() <= p.support {
                let amp = (-rho2 / (p.apodization * p.apodization)).exp();
                out.push(C64::from_polar(amp, PI * p.chirp * rho2));
            } else {
                out.push(C64::new(0.0, 0.0));
            }
        }
    }
    out
}
