//! Flat `key=value` experiment files.
//!
//! One or more `key=value` pairs per line, `#` starts a comment. Lists are
//! comma separated. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dlpr::metrics::SnrDenominator;
use dlpr::solvers::StepRule;
use dlpr::{Algorithm, ImageDomain, L0Mode, ModelParams, PatchConfig, ThresholdRule};

use crate::error::{CliError, Result};
use crate::image_io::ImageSource;

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    Cdp {
        masks: usize,
    },
    Ptycho {
        frame: usize,
        /// One sweep cell per sliding distance.
        slides: Vec<usize>,
        /// CPRM probe; the synthetic zone plate when absent.
        illumination: Option<PathBuf>,
    },
}

/// Settings of the unregularized baseline, which also initializes AMM and PALM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineSettings {
    pub eta: f64,
    pub r: f64,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub pattern: Pattern,
    pub images: Vec<ImageSource>,
    /// Side of synthetic images, center crop of loaded ones.
    pub size: Option<usize>,
    pub deltas: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub params: ModelParams,
    pub patch: PatchConfig,
    pub baseline: BaselineSettings,
    pub step_rule: StepRule,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Truth amplitude is `delta * photon_scale * u`.
    pub photon_scale: f64,
    pub trace_every: usize,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
    pub align_phase: bool,
    pub warm_start: bool,
    pub safeguard: bool,
    pub snr_denominator: SnrDenominator,
}

impl ExperimentSpec {
    /// Defaults for every optional key; the four required keys are empty.
    pub fn blank() -> Self {
        let params = ModelParams::default();
        Self {
            pattern: Pattern::Cdp { masks: 2 },
            images: Vec::new(),
            size: None,
            deltas: Vec::new(),
            algorithms: Vec::new(),
            baseline: BaselineSettings {
                eta: params.eta,
                r: params.r,
                iters: 100,
            },
            params,
            patch: PatchConfig::default(),
            step_rule: StepRule::Fixed,
            seeds: vec![1],
            out: PathBuf::from("out"),
            photon_scale: 1.0,
            trace_every: 1,
            jobs: 0,
            align_phase: true,
            warm_start: true,
            safeguard: true,
            snr_denominator: SnrDenominator::Estimate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.algorithms.is_empty() {
            return usage("at least one algorithm is required".into());
        }
        if self.images.is_empty() {
            return usage("at least one image is required".into());
        }
        if self.deltas.is_empty() {
            return usage("at least one peak level delta is required".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return usage(format!("delta must be positive, got {d}"));
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        if !(self.photon_scale > 0.0 && self.photon_scale.is_finite()) {
            return usage(format!("photon_scale must be positive, got {}", self.photon_scale));
        }
        if !(self.baseline.eta > 0.0 && self.baseline.r > 0.0) {
            return usage("baseline_eta and baseline_r must be positive".into());
        }
        match &self.pattern {
            Pattern::Cdp { masks } if *masks == 0 => return usage("masks must be at least 1".into()),
            Pattern::Ptycho { frame, slides, .. } => {
                if *frame < 8 {
                    return usage(format!("frame must be at least 8, got {frame}"));
                }
                if slides.is_empty() || slides.contains(&0) {
                    return usage("slide distances must be positive".into());
                }
            }
            _ => {}
        }
        self.solver_config(Algorithm::Amm, 0).validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Solver settings for one cell; AMM and PALM start from the baseline output,
    /// which the caller passes in as `InitU::Given`.
    pub fn solver_config(&self, algorithm: Algorithm, seed: u64) -> dlpr::SolverConfig {
        let mut cfg = dlpr::SolverConfig {
            algorithm,
            params: self.params.clone(),
            patch: self.patch,
            trace_every: self.trace_every,
            seed,
            warm_start: self.warm_start,
            monotone_safeguard: self.safeguard,
            step_rule: self.step_rule,
            snr_denominator: self.snr_denominator,
            align_phase: self.align_phase,
            ..Default::default()
        };
        cfg.baseline.eta = self.baseline.eta;
        cfg.baseline.r = self.baseline.r;
        cfg.baseline.iters = self.baseline.iters;
        cfg.baseline.domain = self.params.domain;
        cfg
    }
}

/// Parses a complete experiment file; `pattern`, `image`, `delta` and
/// `algorithm` are required.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::blank();
    let seen = apply_config(&mut spec, text)?;
    let last = text.lines().count().max(1);
    for key in ["pattern", "image", "delta", "algorithm"] {
        if !seen.contains_key(key) {
            return Err(CliError::config(last, format!("missing required key `{key}`")));
        }
    }
    Ok(spec)
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn tokenize(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut current: Option<Entry> = None;
        for word in body.split_whitespace() {
            match word.split_once('=') {
                Some((k, v)) => {
                    if k.is_empty() {
                        return Err(CliError::config(line, format!("missing key before `={v}`")));
                    }
                    out.extend(current.take());
                    current = Some(Entry {
                        line,
                        key: k.to_ascii_lowercase(),
                        value: v.to_string(),
                    });
                }
                None => match current.as_mut() {
                    Some(e) => {
                        e.value.push(' ');
                        e.value.push_str(word);
                    }
                    None => return Err(CliError::config(line, format!("expected key=value, found `{word}`"))),
                },
            }
        }
        out.extend(current);
    }
    Ok(out)
}

fn list<T>(e: &Entry, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| CliError::config(e.line, format!("`{}`: expected {what}, got `{s}`", e.key))))
        .collect()
}

fn one<T>(e: &Entry, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<T> {
    let mut v = list(e, parse, what)?;
    if v.len() != 1 {
        return Err(CliError::config(e.line, format!("`{}` takes exactly one {what}", e.key)));
    }
    Ok(v.remove(0))
}

fn float(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn uint(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn boolean(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn algorithm(s: &str) -> Option<Algorithm> {
    s.parse().ok()
}

/// Applies the keys of `text` on top of `spec`; returns the line of each key seen.
pub fn apply_config(spec: &mut ExperimentSpec, text: &str) -> Result<BTreeMap<String, usize>> {
    let entries = tokenize(text)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(e.key.clone(), e.line) {
            return Err(CliError::config(
                e.line,
                format!("duplicate key `{}` (first set on line {first})", e.key),
            ));
        }
    }
    let get = |k: &str| entries.iter().find(|e| e.key == k);

    // pattern first: the geometry keys below depend on it
    if let Some(e) = get("pattern") {
        spec.pattern = match e.value.trim() {
            "cdp" => Pattern::Cdp { masks: 2 },
            "ptycho" => Pattern::Ptycho {
                frame: 64,
                slides: vec![16],
                illumination: None,
            },
            other => return Err(CliError::config(e.line, format!("pattern must be cdp or ptycho, got `{other}`"))),
        };
    }
    let mut baseline_eta = None;
    let mut baseline_r = None;
    let mut factor = None;
    for e in &entries {
        let p = &mut spec.params;
        match e.key.as_str() {
            "pattern" => {}
            "image" => {
                spec.images = e
                    .value
                    .split(',')
                    .map(|s| ImageSource::parse(s).map_err(|m| CliError::config(e.line, m)))
                    .collect::<Result<_>>()?;
            }
            "size" => spec.size = Some(one(e, uint, "integer")?),
            "delta" => spec.deltas = list(e, float, "number")?,
            "algorithm" => spec.algorithms = list(e, algorithm, "algorithm (amm, palm, pr)")?,
            "seed" => spec.seeds = list(e, |s| s.parse().ok(), "integer")?,
            "out" => spec.out = PathBuf::from(e.value.trim()),
            "eta" => p.eta = one(e, float, "number")?,
            "tau" => p.tau = one(e, float, "number")?,
            "r" => p.r = one(e, float, "number")?,
            "inner" => p.inner_iters = one(e, uint, "integer")?,
            "outer" => p.outer_iters = one(e, uint, "integer")?,
            "c" => p.steps.c = one(e, float, "number")?,
            "d" => p.steps.d = one(e, float, "number")?,
            "e" => p.steps.e = one(e, float, "number")?,
            "l0" => {
                p.l0_mode = one(
                    e,
                    |s| match s {
                        "iso" | "isotropic" => Some(L0Mode::Isotropic),
                        "aniso" | "anisotropic" => Some(L0Mode::Anisotropic),
                        _ => None,
                    },
                    "iso or aniso",
                )?
            }
            "threshold" => {
                p.threshold_rule = one(
                    e,
                    |s| match s {
                        "direct" => Some(ThresholdRule::Direct),
                        "standard" => Some(ThresholdRule::Standard),
                        _ => None,
                    },
                    "direct or standard",
                )?
            }
            "domain" => {
                p.domain = one(
                    e,
                    |s| match s {
                        "complex" => Some(ImageDomain::Complex),
                        "real" => Some(ImageDomain::Real),
                        _ => None,
                    },
                    "complex or real",
                )?
            }
            "patch" => spec.patch.patch_side = one(e, uint, "integer")?,
            "stride" => spec.patch.stride = one(e, uint, "integer")?,
            "masks" | "frame" | "slide" | "illumination" => geometry(&mut spec.pattern, e)?,
            "photon_scale" => spec.photon_scale = one(e, float, "number")?,
            "steps" => {
                spec.step_rule = one(
                    e,
                    |s| match s {
                        "fixed" => Some(StepRule::Fixed),
                        "lipschitz" => Some(StepRule::LipschitzScaled { factor: 2.0 }),
                        _ => None,
                    },
                    "fixed or lipschitz",
                )?
            }
            "step_factor" => factor = Some((e.line, one(e, float, "number")?)),
            "baseline_eta" => baseline_eta = Some(one(e, float, "number")?),
            "baseline_r" => baseline_r = Some(one(e, float, "number")?),
            "baseline_iters" => spec.baseline.iters = one(e, uint, "integer")?,
            "trace_every" => spec.trace_every = one(e, uint, "integer")?,
            "jobs" => spec.jobs = one(e, uint, "integer")?,
            "align_phase" => spec.align_phase = one(e, boolean, "boolean")?,
            "warm_start" => spec.warm_start = one(e, boolean, "boolean")?,
            "safeguard" => spec.safeguard = one(e, boolean, "boolean")?,
            "l0_prox_standard" => {
                if get("threshold").is_some() {
                    return Err(CliError::config(e.line, "set either `threshold` or `l0_prox_standard`, not both"));
                }
                p.threshold_rule = if one(e, boolean, "boolean")? {
                    ThresholdRule::Standard
                } else {
                    ThresholdRule::Direct
                };
            }
            "snr_denominator" => {
                spec.snr_denominator = one(
                    e,
                    |s| match s {
                        "estimate" => Some(SnrDenominator::Estimate),
                        "truth" => Some(SnrDenominator::Truth),
                        _ => None,
                    },
                    "estimate or truth",
                )?
            }
            other => return Err(CliError::config(e.line, format!("unknown key `{other}`"))),
        }
    }
    if let Some((line, f)) = factor {
        match spec.step_rule {
            StepRule::LipschitzScaled { .. } => spec.step_rule = StepRule::LipschitzScaled { factor: f },
            StepRule::Fixed => return Err(CliError::config(line, "step_factor needs steps=lipschitz")),
        }
    }
    // the baseline follows eta and r unless set on its own
    if seen.contains_key("eta") || baseline_eta.is_some() {
        spec.baseline.eta = baseline_eta.unwrap_or(spec.params.eta);
    }
    if seen.contains_key("r") || baseline_r.is_some() {
        spec.baseline.r = baseline_r.unwrap_or(spec.params.r);
    }
    Ok(seen)
}

fn geometry(pattern: &mut Pattern, e: &Entry) -> Result<()> {
    match (pattern, e.key.as_str()) {
        (Pattern::Cdp { masks }, "masks") => *masks = one(e, uint, "integer")?,
        (Pattern::Ptycho { frame, .. }, "frame") => *frame = one(e, uint, "integer")?,
        (Pattern::Ptycho { slides, .. }, "slide") => *slides = list(e, uint, "integer")?,
        (Pattern::Ptycho { illumination, .. }, "illumination") => *illumination = Some(PathBuf::from(e.value.trim())),
        (_, key) => return Err(CliError::config(e.line, format!("`{key}` does not apply to this pattern"))),
    }
    Ok(())
}
