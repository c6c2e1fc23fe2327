//! Named experiments. Weights are in the scaled units of `photon_scale`,
//! tuned at desk size; the full-size presets reuse them (counts per
//! measurement do not depend on the image size).

use dlpr::solvers::StepRule;
use dlpr::{Algorithm, ImageDomain, L0Mode, ModelParams, ThresholdRule};

use crate::config::{BaselineSettings, ExperimentSpec, Pattern};
use crate::error::{CliError, Result};
use crate::image_io::ImageSource;

pub const PRESET_NAMES: [&str; 6] = [
    "cdp-real-desk",
    "cdp-complex-desk",
    "ptycho-desk",
    "cdp-real-full",
    "cdp-complex-full",
    "ptycho-full",
];

const ALL: [Algorithm; 3] = [Algorithm::PrBaseline, Algorithm::Amm, Algorithm::Palm];

fn real_cdp(size: usize) -> ExperimentSpec {
    ExperimentSpec {
        pattern: Pattern::Cdp { masks: 2 },
        images: vec![ImageSource::Blobs { seed: 1 }],
        size: Some(size),
        deltas: vec![5e-3, 1e-2],
        algorithms: ALL.to_vec(),
        params: ModelParams {
            tau: 0.5,
            eta: 8.0,
            r: 32.0,
            l0_mode: L0Mode::Isotropic,
            threshold_rule: ThresholdRule::Standard,
            inner_iters: 10,
            outer_iters: 100,
            domain: ImageDomain::Real,
            ..ModelParams::default()
        },
        baseline: BaselineSettings {
            eta: 1.0,
            r: 0.25,
            iters: 100,
        },
        step_rule: StepRule::LipschitzScaled { factor: 2.0 },
        photon_scale: 512.0,
        ..ExperimentSpec::blank()
    }
}

fn complex_cdp(size: usize) -> ExperimentSpec {
    ExperimentSpec {
        pattern: Pattern::Cdp { masks: 4 },
        images: vec![ImageSource::Disks { seed: 1 }],
        size: Some(size),
        deltas: vec![0.08, 0.1],
        algorithms: ALL.to_vec(),
        params: ModelParams {
            tau: 2.0,
            eta: 8.0,
            r: 32.0,
            threshold_rule: ThresholdRule::Standard,
            inner_iters: 10,
            outer_iters: 50,
            domain: ImageDomain::Complex,
            ..ModelParams::default()
        },
        photon_scale: 256.0,
        ..real_cdp(size)
    }
}

fn ptycho(size: usize, frame: usize, slides: Vec<usize>, deltas: Vec<f64>) -> ExperimentSpec {
    ExperimentSpec {
        pattern: Pattern::Ptycho {
            frame,
            slides,
            illumination: None,
        },
        deltas,
        params: ModelParams {
            tau: 2.0,
            outer_iters: 30,
            ..complex_cdp(size).params
        },
        baseline: BaselineSettings {
            eta: 1.0,
            r: 0.1,
            iters: 300,
        },
        photon_scale: 64.0,
        ..complex_cdp(size)
    }
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let mut spec = match name {
        "cdp-real-desk" => real_cdp(128),
        "cdp-complex-desk" => complex_cdp(128),
        "ptycho-desk" => ptycho(128, 32, vec![8, 10, 12], vec![0.5]),
        "cdp-real-full" => real_cdp(512),
        "cdp-complex-full" => complex_cdp(256),
        "ptycho-full" => ptycho(256, 64, vec![16, 18, 20, 22], vec![0.2, 0.5]),
        _ => {
            return Err(CliError::Usage(format!(
                "unknown preset `{name}` (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    spec.out = format!("out/{name}").into();
    Ok(spec)
}
