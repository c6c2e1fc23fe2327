use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InitU, Problem, SolverConfig, SolverOutput};
use crate::error::{check_len, Error, Result};
use crate::inner_admm::{run_inner, AdmmState, InnerParams, InnerVariant, PatchTerm};
use crate::measurement::MeasurementOperator;
use crate::metrics::{self, successive_errors};
use crate::model::{fidelity_energy, ComplexImage, ImageDomain, IterationRecord, MeasurementVector};

/// Power iteration for the leading eigenvector of `A^H diag(f) A`
/// (restricted to real vectors in the real domain), scaled so that
/// `||A u||^2 = sum f`.
pub fn spectral_init(
    op: &dyn MeasurementOperator,
    f: &MeasurementVector,
    iters: usize,
    seed: u64,
    domain: ImageDomain,
) -> Result<ComplexImage> {
    check_len("measurements", op.num_measurements(), f.len())?;
    let (rows, cols) = op.image_shape();
    let n = rows * cols;
    let total = f.total();
    if total == 0.0 {
        return Ok(ComplexImage::zeros(rows, cols));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<C64> = (0..n)
        .map(|_| {
            let re = rng.random_range(-1.0..1.0);
            let im = rng.random_range(-1.0..1.0);
            C64::new(re, if domain == ImageDomain::Real { 0.0 } else { im })
        })
        .collect();
    let mut ax = vec![C64::new(0.0, 0.0); op.num_measurements()];
    for _ in 0..iters {
        op.apply(&x, &mut ax);
        for (a, w) in ax.iter_mut().zip(f.as_slice()) {
            *a *= w;
        }
        op.apply_adjoint(&ax, &mut x);
        if domain == ImageDomain::Real {
            x.iter_mut().for_each(|z| z.im = 0.0);
        }
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite("spectral initialization"));
        }
        for z in &mut x {
            *z /= norm;
        }
    }
    op.apply(&x, &mut ax);
    let energy: f64 = ax.iter().map(|z| z.norm_sqr()).sum();
    let scale = (total / energy).sqrt();
    Ok(ComplexImage::from_vec_unchecked(rows, cols, x.into_iter().map(|z| z * scale).collect()))
}

/// ADMM on `eta B(|A u|^2, f)` alone (no patch prior). Each recorded
/// iteration is one ADMM sweep; `cfg.baseline.iters` sweeps in total.
pub fn run_pr_baseline(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    let op = problem.op;
    let (rows, cols) = op.image_shape();
    let bp = cfg.baseline;
    if !(bp.eta > 0.0 && bp.r > 0.0) {
        return Err(Error::InvalidParameter("baseline needs eta, r > 0".into()));
    }
    if cfg.trace_every == 0 {
        return Err(Error::InvalidParameter("trace_every must be at least 1".into()));
    }
    let u0 = match &cfg.init_u {
        InitU::Zeros => ComplexImage::zeros(rows, cols),
        InitU::Given(u) => {
            check_len("initial rows", rows, u.rows())?;
            check_len("initial cols", cols, u.cols())?;
            project(u.clone(), cfg.params.domain)
        }
        InitU::AdjointSpectral | InitU::FromBaseline => spectral_init(op, problem.f, 50, cfg.seed, cfg.params.domain)?,
    };
    let term = PatchTerm::empty((rows, cols));
    let sweep = InnerParams {
        iters: 1,
        tol: None,
        domain: cfg.params.domain,
        ..bp
    };
    let mut state = AdmmState::cold(op, u0, bp.r)?;
    let start = std::time::Instant::now();
    let mut records = vec![record(problem, cfg, 0, &state.u, None, start)?];
    for k in 1..=bp.iters {
        let prev = state.u.clone();
        let out = run_inner(
            &term,
            op,
            problem.f,
            &sweep,
            &state.u,
            InnerVariant::Amm,
            Some((state.z, state.lambda)),
        )?;
        state = out.state;
        if k % cfg.trace_every == 0 || k == bp.iters {
            records.push(record(problem, cfg, k, &state.u, Some(&prev), start)?);
        }
    }
    Ok(SolverOutput {
        u: state.u,
        dict: None,
        alpha: None,
        trace: metrics::assemble_trace(records)?,
        monitor: Vec::new(),
        steps: None,
    })
}

fn record(
    problem: &Problem<'_>,
    cfg: &SolverConfig,
    iter: usize,
    u: &ComplexImage,
    prev: Option<&ComplexImage>,
    start: std::time::Instant,
) -> Result<IterationRecord> {
    let objective = fidelity_energy(u, problem.op, problem.f, cfg.baseline.eta)?;
    let snr_db = match problem.truth {
        Some(t) if u.norm() > 0.0 => metrics::snr(u, t, cfg.snr_denominator)?.snr_db,
        _ => f64::NAN,
    };
    let err_u = match prev {
        Some(p) if u.norm() > 0.0 => {
            let eye = crate::linalg::CMat::identity(1, 1);
            successive_errors(u, p, &eye, &eye)?.0
        }
        _ => f64::NAN,
    };
    Ok(IterationRecord {
        iter,
        objective,
        snr_db,
        err_u,
        err_d: 0.0,
        sparsity: 0.0,
        seconds: if cfg.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// `u` times the unit phase that maximizes `||Re u||`, with the sign chosen
/// so that `sum Re u >= 0`. Zero images come back unchanged.
pub fn align_global_phase(u: &ComplexImage) -> ComplexImage {
    let sq: C64 = u.as_slice().iter().map(|z| z * z).sum();
    let mut rot = if sq.norm() > 0.0 {
        C64::from_polar(1.0, -0.5 * sq.arg())
    } else {
        C64::new(1.0, 0.0)
    };
    let sum_re: f64 = u.as_slice().iter().map(|z| (z * rot).re).sum();
    if sum_re < 0.0 {
        rot = -rot;
    }
    u.scaled(rot)
}

pub(crate) fn project(u: ComplexImage, domain: ImageDomain) -> ComplexImage {
    match domain {
        ImageDomain::Complex => u,
        ImageDomain::Real => u.map(|z| C64::new(z.re, 0.0)),
    }
}
