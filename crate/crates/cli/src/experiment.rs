use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dlpr::measurement::container::{self, MAGIC_DICTIONARY};
use dlpr::measurement::{
    generate_illumination, sample_poisson, CdpOperator, Illumination, NoiseSpec, PtychoOperator, ZonePlateParams,
};
use dlpr::metrics::{self, SnrDenominator};
use dlpr::solvers::{run_amm, run_palm, run_pr_baseline};
use dlpr::{
    sparse, Algorithm, ComplexImage, ImageDomain, InitU, MeasurementOperator, MeasurementVector, Problem,
    SolverOutput,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentSpec, Pattern};
use crate::error::{CliError, Result};
use crate::image_io::{self, ImageSource};
use crate::pgm;

/// Magic of the measurement-count container written by `simulate`.
pub const MAGIC_COUNTS: &[u8; 4] = b"CPRF";

pub const SUMMARY_HEADER: &str = "image,geometry,delta,seed,algorithm,status,snr_db,sparsity,sparsity_re,sparsity_im,objective";

/// One measurement geometry of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Cdp { masks: usize },
    Ptycho { frame: usize, slide: usize, illumination: Option<PathBuf> },
}

impl Geometry {
    pub fn label(&self) -> String {
        match self {
            Geometry::Cdp { masks } => format!("cdp-k{masks}"),
            Geometry::Ptycho { frame, slide, .. } => format!("ptycho-f{frame}-s{slide}"),
        }
    }
}

impl ExperimentSpec {
    pub fn geometries(&self) -> Vec<Geometry> {
        match &self.pattern {
            Pattern::Cdp { masks } => vec![Geometry::Cdp { masks: *masks }],
            Pattern::Ptycho {
                frame,
                slides,
                illumination,
            } => slides
                .iter()
                .map(|&slide| Geometry::Ptycho {
                    frame: *frame,
                    slide,
                    illumination: illumination.clone(),
                })
                .collect(),
        }
    }
}

/// Seeds of the mask and noise streams for a run seed.
pub fn stream_seeds(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x5eed_0000_0000_0000)
}

pub fn build_operator(geometry: &Geometry, shape: (usize, usize), seed: u64) -> Result<Box<dyn MeasurementOperator>> {
    Ok(match geometry {
        Geometry::Cdp { masks } => Box::new(CdpOperator::octanary(shape, *masks, stream_seeds(seed).0)?),
        Geometry::Ptycho {
            frame,
            slide,
            illumination,
        } => {
            let kind = match illumination {
                Some(p) => Illumination::FromFile(p),
                None => Illumination::ZonePlateSynthetic(ZonePlateParams::default()),
            };
            let probe = generate_illumination(*frame, kind)?;
            Box::new(PtychoOperator::new(shape, probe, *frame, *slide)?)
        }
    })
}

/// Measurements of one sweep group together with the truth at measurement scale.
pub struct Simulated {
    pub op: Box<dyn MeasurementOperator>,
    pub f: MeasurementVector,
    pub truth: ComplexImage,
}

/// Draws Poisson counts of `|A (delta * photon_scale * image)|^2`.
pub fn simulate(spec: &ExperimentSpec, image: &ComplexImage, geometry: &Geometry, delta: f64, seed: u64) -> Result<Simulated> {
    if spec.params.domain == ImageDomain::Real && image.as_slice().iter().any(|z| z.im != 0.0) {
        return Err(CliError::Usage("domain=real needs a real-valued image".into()));
    }
    let op = build_operator(geometry, image.shape(), seed)?;
    let amplitude = delta * spec.photon_scale;
    let f = sample_poisson(op.as_ref(), image, NoiseSpec::new(amplitude, stream_seeds(seed).1)?)?;
    let truth = image.scaled(C64::new(amplitude, 0.0));
    Ok(Simulated { op, f, truth })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellMetrics {
    pub snr_db: f64,
    /// Percent nonzero in alpha, its real parts and its imaginary parts; `None` for the baseline.
    pub sparsity: Option<(f64, f64, f64)>,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub image: String,
    pub geometry: String,
    pub delta: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub outcome: std::result::Result<CellMetrics, String>,
    /// Files written for this cell, relative to the output directory.
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub manifest: PathBuf,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failures() == 0 {
            0
        } else {
            1
        }
    }
}

struct Group<'a> {
    source: &'a ImageSource,
    image: &'a std::result::Result<ComplexImage, String>,
    geometry: Geometry,
    delta: f64,
    seed: u64,
}

fn cell_dir(image: &str, geometry: &str, delta: f64, seed: u64, algorithm: Algorithm) -> PathBuf {
    PathBuf::from(image)
        .join(geometry)
        .join(format!("delta-{delta}"))
        .join(format!("seed-{seed}"))
        .join(algorithm.name())
}

fn write_file(root: &Path, rel: PathBuf, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = root.join(&rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, bytes)?;
    files.push(rel);
    Ok(())
}

fn part_pgm(u: &ComplexImage, part: impl Fn(C64) -> f64) -> Vec<u8> {
    let vals: Vec<f64> = u.as_slice().iter().map(|&z| part(z)).collect();
    pgm::encode16(u.rows(), u.cols(), &pgm::normalize(&vals))
}

/// Magnitude scaled by its maximum, so zero stays black.
fn magnitude_pgm(u: &ComplexImage) -> Vec<u8> {
    let mags: Vec<f64> = u.as_slice().iter().map(|z| z.norm()).collect();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let vals: Vec<f64> = mags.iter().map(|m| if peak > 0.0 { m / peak } else { 0.0 }).collect();
    pgm::encode16(u.rows(), u.cols(), &vals)
}

fn emit_cell(root: &Path, dir: &Path, out: &SolverOutput, truth: &ComplexImage, denom: SnrDenominator) -> Result<(CellMetrics, Vec<PathBuf>)> {
    let report = metrics::snr(&out.u, truth, denom)?;
    // stored with the global phase that best matches the truth
    let u = out.u.scaled(report.phase);
    let mut files = Vec::new();
    let bin = container::encode(container::MAGIC_MASK, u.rows(), u.cols(), u.as_slice())?;
    write_file(root, dir.join("u.cprm"), &bin, &mut files)?;
    write_file(root, dir.join("u_mag.pgm"), &magnitude_pgm(&u), &mut files)?;
    write_file(root, dir.join("u_re.pgm"), &part_pgm(&u, |z| z.re), &mut files)?;
    write_file(root, dir.join("u_im.pgm"), &part_pgm(&u, |z| z.im), &mut files)?;
    write_file(root, dir.join("trace.csv"), metrics::trace_to_csv(&out.trace).as_bytes(), &mut files)?;
    if let Some(d) = &out.dict {
        let m = d.matrix();
        let data: Vec<C64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        let bin = container::encode(MAGIC_DICTIONARY, m.nrows(), m.ncols(), &data)?;
        write_file(root, dir.join("dict.cprd"), &bin, &mut files)?;
        for (name, part) in [("dict_re.pgm", 0), ("dict_im.pgm", 1)] {
            let (rows, cols, vals) = sparse::atom_montage(d, |z| if part == 0 { z.re } else { z.im });
            write_file(root, dir.join(name), &pgm::encode16(rows, cols, &vals), &mut files)?;
        }
    }
    let sparsity = out.alpha.as_ref().map(|a| (a.sparsity(), a.sparsity_real(), a.sparsity_imag()));
    let objective = out.trace.last().map(|r| r.objective).unwrap_or(f64::NAN);
    Ok((
        CellMetrics {
            snr_db: report.snr_db,
            sparsity,
            objective,
        },
        files,
    ))
}

fn run_group(spec: &ExperimentSpec, root: &Path, g: &Group<'_>) -> Vec<CellResult> {
    let name = g.source.name();
    let geom = g.geometry.label();
    let cell = |algorithm, outcome, files| CellResult {
        image: name.clone(),
        geometry: geom.clone(),
        delta: g.delta,
        seed: g.seed,
        algorithm,
        outcome,
        files,
    };
    let sim = g
        .image
        .as_ref()
        .map_err(|e| e.clone())
        .and_then(|img| simulate(spec, img, &g.geometry, g.delta, g.seed).map_err(|e| e.to_string()));
    let sim = match sim {
        Ok(s) => s,
        Err(e) => {
            log::error!("{name} {geom} delta={} seed={}: {e}", g.delta, g.seed);
            return spec.algorithms.iter().map(|&a| cell(a, Err(e.clone()), Vec::new())).collect();
        }
    };
    let problem = match Problem::new(sim.op.as_ref(), &sim.f).and_then(|p| p.with_truth(&sim.truth)) {
        Ok(p) => p,
        Err(e) => return spec.algorithms.iter().map(|&a| cell(a, Err(e.to_string()), Vec::new())).collect(),
    };
    let mut base_cfg = spec.solver_config(Algorithm::PrBaseline, g.seed);
    base_cfg.init_u = InitU::AdjointSpectral;
    let baseline = run_pr_baseline(&problem, &base_cfg);
    spec.algorithms
        .iter()
        .map(|&algorithm| {
            let dir = cell_dir(&name, &geom, g.delta, g.seed, algorithm);
            let output = match (&baseline, algorithm) {
                (Err(e), _) => Err(format!("baseline failed: {e}")),
                (Ok(b), Algorithm::PrBaseline) => Ok(b.clone()),
                (Ok(b), _) => {
                    let mut cfg = spec.solver_config(algorithm, g.seed);
                    cfg.init_u = InitU::Given(b.u.clone());
                    let run = if algorithm == Algorithm::Amm { run_amm } else { run_palm };
                    run(&problem, &cfg).map_err(|e| e.to_string())
                }
            };
            let result = output.and_then(|out| emit_cell(root, &dir, &out, &sim.truth, spec.snr_denominator).map_err(|e| e.to_string()));
            match result {
                Ok((m, files)) => {
                    log::info!("{name} {geom} delta={} seed={} {}: {:.2} dB", g.delta, g.seed, algorithm.name(), m.snr_db);
                    cell(algorithm, Ok(m), files)
                }
                Err(e) => {
                    log::error!("{name} {geom} delta={} seed={} {}: {e}", g.delta, g.seed, algorithm.name());
                    cell(algorithm, Err(e), Vec::new())
                }
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn summary_csv(cells: &[CellResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for c in cells {
        let (status, snr, sp, obj) = match &c.outcome {
            Ok(m) => (
                "ok".to_string(),
                m.snr_db.to_string(),
                match m.sparsity {
                    Some((a, r, i)) => format!("{a},{r},{i}"),
                    None => ",,".into(),
                },
                m.objective.to_string(),
            ),
            Err(e) => (format!("failed: {e}"), String::new(), ",,".into(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{snr},{sp},{obj}",
            csv_field(&c.image),
            c.geometry,
            c.delta,
            c.seed,
            c.algorithm.name(),
            csv_field(&status)
        )
        .unwrap();
    }
    out
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Seed-averaged SNR and sparsity tables, one block per image and geometry.
pub fn summary_table(spec: &ExperimentSpec, cells: &[CellResult]) -> String {
    let mut out = String::new();
    let mut blocks: Vec<(String, String)> = Vec::new();
    for c in cells {
        let key = (c.image.clone(), c.geometry.clone());
        if !blocks.contains(&key) {
            blocks.push(key);
        }
    }
    let pick = |img: &str, geo: &str, a: Algorithm, d: f64| -> Vec<&CellMetrics> {
        cells
            .iter()
            .filter(|c| c.image == img && c.geometry == geo && c.algorithm == a && c.delta == d)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect()
    };
    for (img, geo) in &blocks {
        writeln!(out, "{img} / {geo} (mean over {} seed(s))", spec.seeds.len()).unwrap();
        write!(out, "{:<10}", "SNR (dB)").unwrap();
        for d in &spec.deltas {
            write!(out, "{:>14}", format!("delta={d}")).unwrap();
        }
        out.push('\n');
        for &a in &spec.algorithms {
            write!(out, "{:<10}", a.name()).unwrap();
            for &d in &spec.deltas {
                let snrs: Vec<f64> = pick(img, geo, a, d).iter().map(|m| m.snr_db).collect();
                match mean(&snrs) {
                    Some(v) => write!(out, "{v:>14.2}").unwrap(),
                    None => write!(out, "{:>14}", "failed").unwrap(),
                }
            }
            out.push('\n');
        }
        let learned: Vec<Algorithm> = spec.algorithms.iter().copied().filter(|a| *a != Algorithm::PrBaseline).collect();
        if !learned.is_empty() {
            write!(out, "{:<10}", "S (%)").unwrap();
            for d in &spec.deltas {
                write!(out, "{:>24}", format!("delta={d} a/Re/Im")).unwrap();
            }
            out.push('\n');
            for a in learned {
                write!(out, "{:<10}", a.name()).unwrap();
                for &d in &spec.deltas {
                    let sp: Vec<(f64, f64, f64)> = pick(img, geo, a, d).iter().filter_map(|m| m.sparsity).collect();
                    let col = |k: usize| {
                        mean(&sp.iter().map(|s| [s.0, s.1, s.2][k]).collect::<Vec<_>>())
                    };
                    match (col(0), col(1), col(2)) {
                        (Some(x), Some(y), Some(z)) => write!(out, "{:>24}", format!("{x:.2}/{y:.2}/{z:.2}")).unwrap(),
                        _ => write!(out, "{:>24}", "failed").unwrap(),
                    }
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// `sha256sum`-style listing of `files` (relative to `root`), sorted by path.
pub fn write_manifest(root: &Path, files: &[PathBuf]) -> Result<PathBuf> {
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut text = String::new();
    for rel in sorted {
        let digest = Sha256::digest(std::fs::read(root.join(rel))?);
        let shown = rel.to_string_lossy().replace('\\', "/");
        writeln!(text, "{}  {shown}", hex::encode(digest)).unwrap();
    }
    let path = root.join("manifest.sha256");
    std::fs::write(&path, text)?;
    Ok(path)
}

fn load_images(spec: &ExperimentSpec) -> Vec<std::result::Result<ComplexImage, String>> {
    spec.images
        .iter()
        .map(|s| s.load(spec.size).map_err(|e| format!("loading {}: {e}", s.name())))
        .collect()
}

fn groups<'a>(spec: &'a ExperimentSpec, images: &'a [std::result::Result<ComplexImage, String>]) -> Vec<Group<'a>> {
    let mut out = Vec::new();
    for (source, image) in spec.images.iter().zip(images) {
        for geometry in spec.geometries() {
            for &delta in &spec.deltas {
                for &seed in &spec.seeds {
                    out.push(Group {
                        source,
                        image,
                        geometry: geometry.clone(),
                        delta,
                        seed,
                    });
                }
            }
        }
    }
    out
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

/// Runs every (image, geometry, delta, seed, algorithm) cell and writes
/// reconstructions, dictionaries, traces, `summary.csv`, `summary.txt` and
/// `manifest.sha256` under `spec.out`. Failed cells are reported, not fatal.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let root = spec.out.clone();
    std::fs::create_dir_all(&root)?;
    let images = load_images(spec);
    let groups = groups(spec, &images);
    let cells: Vec<CellResult> = pool(spec.jobs)?
        .install(|| groups.par_iter().map(|g| run_group(spec, &root, g)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect();
    let mut files: Vec<PathBuf> = cells.iter().flat_map(|c| c.files.iter().cloned()).collect();
    let mut extra = Vec::new();
    write_file(&root, "summary.csv".into(), summary_csv(&cells).as_bytes(), &mut extra)?;
    write_file(&root, "summary.txt".into(), summary_table(spec, &cells).as_bytes(), &mut extra)?;
    files.extend(extra);
    let manifest = write_manifest(&root, &files)?;
    Ok(ExperimentReport { cells, manifest })
}

/// Writes the scaled truth (`truth.cprm`, `truth_mag.pgm`) and the counts
/// (`counts.cprf`, one row) of every group, plus a manifest. Returns the file list.
pub fn run_simulation(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let root = spec.out.clone();
    std::fs::create_dir_all(&root)?;
    let images = load_images(spec);
    let mut files = Vec::new();
    for g in groups(spec, &images) {
        let image = g.image.as_ref().map_err(|e| CliError::Usage(e.clone()))?;
        let sim = simulate(spec, image, &g.geometry, g.delta, g.seed)?;
        let dir = PathBuf::from(g.source.name())
            .join(g.geometry.label())
            .join(format!("delta-{}", g.delta))
            .join(format!("seed-{}", g.seed));
        let t = &sim.truth;
        let bin = container::encode(container::MAGIC_MASK, t.rows(), t.cols(), t.as_slice())?;
        write_file(&root, dir.join("truth.cprm"), &bin, &mut files)?;
        write_file(&root, dir.join("truth_mag.pgm"), &magnitude_pgm(t), &mut files)?;
        let counts: Vec<C64> = sim.f.as_slice().iter().map(|&c| C64::new(c, 0.0)).collect();
        let bin = container::encode(MAGIC_COUNTS, 1, counts.len(), &counts)?;
        write_file(&root, dir.join("counts.cprf"), &bin, &mut files)?;
    }
    write_manifest(&root, &files)?;
    Ok(files)
}

/// SNR of an estimate against a truth, both read with `load_image`.
pub fn snr_files(estimate: &Path, truth: &Path, denom: SnrDenominator) -> Result<metrics::SnrReport> {
    let a = image_io::load_image(estimate)?;
    let b = image_io::load_image(truth)?;
    Ok(metrics::snr(&a, &b, denom)?)
}
