use num_complex::Complex64 as C64;

use super::{
    align_global_phase, run_pr_baseline, spectral_init, estimate_lipschitz, InitU, Problem, SolverConfig, SolverOutput, StepMonitor,
    StepRule,
};
use crate::error::{check_len, Result};
use crate::inner_admm::{run_inner, InnerParams, InnerVariant, PatchTerm};
use crate::linalg::{self, CMat};
use crate::metrics;
use crate::model::{fidelity_energy, CoeffMatrix, ComplexImage, Dictionary, ImageDomain, IterationRecord, PalmSteps};
use crate::patches;
use crate::sparse;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scheme {
    Amm,
    Palm,
}

/// Alternating minimization: image by inner ADMM, dictionary by
/// orthogonal Procrustes, coefficients by hard thresholding.
pub fn run_amm(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    run_outer(problem, cfg, Scheme::Amm)
}

/// Proximal alternating linearized minimization with fixed steps.
pub fn run_palm(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    run_outer(problem, cfg, Scheme::Palm)
}

fn initial_image(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<ComplexImage> {
    let u = initial_image_raw(problem, cfg)?;
    Ok(if cfg.align_phase && cfg.params.domain == ImageDomain::Complex {
        align_global_phase(&u)
    } else {
        u
    })
}

fn initial_image_raw(problem: &Problem<'_>, cfg: &SolverConfig) -> Result<ComplexImage> {
    let (rows, cols) = problem.op.image_shape();
    match &cfg.init_u {
        InitU::Zeros => Ok(ComplexImage::zeros(rows, cols)),
        InitU::AdjointSpectral => spectral_init(problem.op, problem.f, 50, cfg.seed, cfg.params.domain),
        InitU::FromBaseline => {
            let base = SolverConfig {
                init_u: InitU::AdjointSpectral,
                ..cfg.clone()
            };
            Ok(run_pr_baseline(problem, &base)?.u)
        }
        InitU::Given(u) => {
            check_len("initial rows", rows, u.rows())?;
            check_len("initial cols", cols, u.cols())?;
            Ok(super::baseline::project(u.clone(), cfg.params.domain))
        }
    }
}

fn re_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn dist_sq(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

struct Iterate {
    u: ComplexImage,
    dict: Dictionary,
    alpha: CoeffMatrix,
    patches: CMat,
    fidelity: f64,
    objective: f64,
}

fn run_outer(problem: &Problem<'_>, cfg: &SolverConfig, scheme: Scheme) -> Result<SolverOutput> {
    cfg.validate()?;
    let op = problem.op;
    let f = problem.f;
    let params = &cfg.params;
    let shape = op.image_shape();
    let pcfg = cfg.patch;
    let rule = params.threshold_rule;
    let mode = params.l0_mode;
    let start = std::time::Instant::now();

    let u0 = initial_image(problem, cfg)?;
    let dict0 = sparse::init_dct_dictionary(pcfg.patch_side)?;
    let p0 = patches::extract(&u0, &pcfg)?;
    let alpha0 = sparse::sparse_code_amm(&dict0, &p0, params.tau, mode, rule)?;
    let steps = match cfg.step_rule {
        StepRule::Fixed => params.steps,
        StepRule::LipschitzScaled { factor } => {
            let l = estimate_lipschitz(shape, &pcfg, dict0.matrix(), alpha0.matrix(), 10_000)?;
            PalmSteps {
                c: factor * l.u,
                d: (factor * l.d).max(1e-12),
                e: factor * l.alpha,
            }
        }
    };
    let weights = patches::coverage_weights(&pcfg, shape)?;
    let w_max = weights.iter().cloned().fold(0.0, f64::max);

    let objective = |u: &ComplexImage, d: &Dictionary, a: &CoeffMatrix, p: &CMat| -> Result<(f64, f64)> {
        let fid = fidelity_energy(u, op, f, params.eta)?;
        let resid = linalg::matmul(d.matrix(), a.matrix()) - p;
        let coupling = 0.5 * linalg::frobenius_sq(&resid);
        let total = if d.is_orthogonal() {
            coupling + fid + params.tau * a.l0(mode) as f64
        } else {
            f64::INFINITY
        };
        Ok((fid, total))
    };

    let (fid0, obj0) = objective(&u0, &dict0, &alpha0, &p0)?;
    let mut cur = Iterate {
        u: u0,
        dict: dict0,
        alpha: alpha0,
        patches: p0,
        fidelity: fid0,
        objective: obj0,
    };
    let record = |iter: usize, it: &Iterate, prev: Option<&Iterate>| -> Result<IterationRecord> {
        let snr_db = match problem.truth {
            Some(t) if it.u.norm() > 0.0 => metrics::snr(&it.u, t, cfg.snr_denominator)?.snr_db,
            _ => f64::NAN,
        };
        let (err_u, err_d) = match prev {
            Some(p) if it.u.norm() > 0.0 => {
                metrics::successive_errors(&it.u, &p.u, it.dict.matrix(), p.dict.matrix())?
            }
            _ => (f64::NAN, f64::NAN),
        };
        Ok(IterationRecord {
            iter,
            objective: it.objective,
            snr_db,
            err_u,
            err_d,
            sparsity: it.alpha.sparsity(),
            seconds: if cfg.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        })
    };

    let mut records = vec![record(0, &cur, None)?];
    let mut monitor = Vec::with_capacity(params.outer_iters);
    let inner = InnerParams {
        eta: params.eta,
        r: params.r,
        iters: params.inner_iters,
        domain: params.domain,
        tol: None,
    };
    let variant = match scheme {
        Scheme::Amm => InnerVariant::Amm,
        Scheme::Palm => InnerVariant::Palm { c: steps.c },
    };
    let mut warm = None;

    for k in 1..=params.outer_iters {
        let y = linalg::matmul(cur.dict.matrix(), cur.alpha.matrix());
        let term = PatchTerm::new(&y, &pcfg, shape)?;
        let out = run_inner(&term, op, f, &inner, &cur.u, variant, if cfg.warm_start { warm.take() } else { None })?;

        // Image subproblem objective at the candidate and at the current image.
        let fid_new = fidelity_energy(&out.state.u, op, f, params.eta)?;
        let (sub_old, sub_new) = match scheme {
            Scheme::Amm => (
                term.energy(cur.u.as_slice()) + cur.fidelity,
                term.energy(out.state.u.as_slice()) + fid_new,
            ),
            Scheme::Palm => {
                let grad = term.gradient(cur.u.as_slice());
                let delta: Vec<C64> =
                    out.state.u.as_slice().iter().zip(cur.u.as_slice()).map(|(a, b)| a - b).collect();
                let lin = re_dot(&grad, &delta) + 0.5 * steps.c * re_dot(&delta, &delta);
                (cur.fidelity, fid_new + lin)
            }
        };
        let inner_slack = if sub_new > sub_old { sub_new - sub_old } else { 0.0 };
        let reject = cfg.monotone_safeguard && !(sub_new <= sub_old);
        let (u_next, fid_next) = if reject {
            (cur.u.clone(), cur.fidelity)
        } else {
            (out.state.u, fid_new)
        };
        warm = Some((out.state.z, out.state.lambda));

        let p_next = patches::extract(&u_next, &pcfg)?;
        let (d_next, a_next) = match scheme {
            Scheme::Amm => {
                let trunc = cfg.truncated_warmup.and_then(|(t, n)| (k <= n).then_some(t));
                let d = sparse::update_dictionary_amm(&p_next, &cur.alpha, pcfg.patch_side, trunc, Some(&cur.dict))?;
                let a = sparse::sparse_code_amm(&d, &p_next, params.tau, mode, rule)?;
                (d, a)
            }
            Scheme::Palm => {
                let d = sparse::update_dictionary_palm(&cur.dict, &p_next, &cur.alpha, steps.d)?;
                let a = sparse::sparse_code_palm(&cur.alpha, &d, &p_next, params.tau, steps.e, mode, rule)?;
                (d, a)
            }
        };
        let (_, obj_next) = objective(&u_next, &d_next, &a_next, &p_next)?;
        let next = Iterate {
            u: u_next,
            dict: d_next,
            alpha: a_next,
            patches: p_next,
            fidelity: fid_next,
            objective: obj_next,
        };

        let du = dist_sq(next.u.as_slice(), cur.u.as_slice());
        let dd = linalg::frobenius_sq(&(next.dict.matrix() - cur.dict.matrix()));
        let da = linalg::frobenius_sq(&(next.alpha.matrix() - cur.alpha.matrix()));
        let step_sq = du + dd + da;
        let mut entry = StepMonitor {
            iter: k,
            objective_before: cur.objective,
            objective_after: next.objective,
            step_sq,
            lambda_plus: f64::NAN,
            inner_slack,
            safeguard_used: reject,
            subgradient_norm: f64::NAN,
            subgradient_bound: f64::NAN,
            u_norm: next.u.norm(),
        };
        if scheme == Scheme::Palm {
            let l_d = linalg::gram_spectral_norm(cur.alpha.matrix(), 10_000, 1e-12)?;
            entry.lambda_plus = (steps.c - w_max).min(steps.d - l_d).min(steps.e - 1.0);
            if cfg.subgradient_check {
                let (norm, bound) = subgradient(&cur, &next, &y, &pcfg, shape, steps, w_max, step_sq.sqrt())?;
                entry.subgradient_norm = norm;
                entry.subgradient_bound = bound;
            }
        }
        log::debug!(
            "{} k={k} objective={:.6e} slack={:.3e} safeguard={reject}",
            if scheme == Scheme::Amm { "amm" } else { "palm" },
            next.objective,
            inner_slack
        );
        monitor.push(entry);
        let prev = std::mem::replace(&mut cur, next);
        if k % cfg.trace_every == 0 || k == params.outer_iters {
            records.push(record(k, &cur, Some(&prev))?);
        }
    }

    Ok(SolverOutput {
        u: cur.u,
        dict: Some(cur.dict),
        alpha: Some(cur.alpha),
        trace: metrics::assemble_trace(records)?,
        monitor,
        steps: (scheme == Scheme::Palm).then_some(steps),
    })
}

/// Norm of the subgradient element built from one PALM step and the bound
/// `(3 max(c, d, e) + M) ||Z^{k+1} - Z^k||`, where `M` bounds the Lipschitz
/// constant of the full gradient of `H` over the points involved.
#[allow(clippy::too_many_arguments)]
fn subgradient(
    cur: &Iterate,
    next: &Iterate,
    y: &CMat,
    pcfg: &patches::PatchConfig,
    shape: (usize, usize),
    steps: PalmSteps,
    w_max: f64,
    step: f64,
) -> Result<(f64, f64)> {
    let d1 = next.dict.matrix();
    let a1 = next.alpha.matrix();
    let a0 = cur.alpha.matrix();
    let p1 = &next.patches;
    let r1 = linalg::matmul(d1, a1) - p1;
    let r2 = y - p1;
    let r3 = linalg::matmul(d1, a0) - p1;

    // Image block: c (u^k - u^{k+1}) + grad_u H(Z^{k+1}) - grad_u H(Z^k).
    let g_new = patches::adjoint_accumulate(&r1, pcfg, shape)?;
    let g_old = patches::adjoint_accumulate(&(y - &cur.patches), pcfg, shape)?;
    let mut a_u = 0.0;
    for i in 0..cur.u.len() {
        let v = (cur.u.as_slice()[i] - next.u.as_slice()[i]) * steps.c - g_new.as_slice()[i] + g_old.as_slice()[i];
        a_u += v.norm_sqr();
    }
    let a_d = linalg::frobenius_sq(
        &((cur.dict.matrix() - d1) * C64::new(steps.d, 0.0) + linalg::matmul_adj_rhs(&r1, a1)
            - linalg::matmul_adj_rhs(&r2, a0)),
    );
    let a_a = linalg::frobenius_sq(
        &((a0 - a1) * C64::new(steps.e, 0.0) + linalg::matmul_adj_lhs(d1, &r1) - linalg::matmul_adj_lhs(d1, &r3)),
    );
    let norm = (a_u + a_d + a_a).sqrt();

    let fro = |m: &CMat| linalg::frobenius_sq(m).sqrt();
    let a = fro(a0).max(fro(a1));
    let p = fro(&cur.patches).max(fro(p1));
    let q = fro(&r1).max(fro(&r2)).max(fro(&r3)).max(fro(&(y - &cur.patches)));
    let s = w_max.sqrt();
    let m_hat = w_max + s * (a + 1.0) + a * (a + 1.0 + s) + q + 1.0 + p + s;
    let lam = steps.c.max(steps.d).max(steps.e);
    Ok((norm, (3.0 * lam + m_hat) * step))
}
