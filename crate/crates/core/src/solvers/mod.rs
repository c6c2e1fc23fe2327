//! Outer solvers: alternating minimization (AMM), proximal alternating
//! linearized minimization (PALM) and the unregularized phase retrieval
//! baseline that initializes both.

mod baseline;
mod outer;

pub use baseline::{align_global_phase, run_pr_baseline, spectral_init};
pub use outer::{run_amm, run_palm};

use crate::error::{check_len, Error, Result};
use crate::inner_admm::InnerParams;
use crate::linalg::{self, CMat};
use crate::measurement::MeasurementOperator;
use crate::metrics::SnrDenominator;
use crate::model::{CoeffMatrix, ComplexImage, Dictionary, MeasurementVector, ModelParams, SolverTrace};
use crate::patches::{self, PatchConfig};
use crate::sparse::Truncation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Amm,
    Palm,
    PrBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Amm => "amm",
            Algorithm::Palm => "palm",
            Algorithm::PrBaseline => "pr",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amm" => Ok(Algorithm::Amm),
            "palm" => Ok(Algorithm::Palm),
            "pr" | "pr_baseline" => Ok(Algorithm::PrBaseline),
            other => Err(Error::InvalidParameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Starting image of the outer loop.
#[derive(Clone, Debug, PartialEq)]
pub enum InitU {
    Zeros,
    /// Leading eigenvector of `A^H diag(f) A`, scaled to the measured energy.
    AdjointSpectral,
    /// Output of the baseline solver (itself started spectrally).
    FromBaseline,
    Given(ComplexImage),
}

/// Image, dictionary and coefficient steps of PALM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `ModelParams::steps` as given.
    Fixed,
    /// `factor` times the moduli estimated at the starting point.
    LipschitzScaled { factor: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub params: ModelParams,
    pub patch: PatchConfig,
    pub init_u: InitU,
    /// Record every n-th outer iteration (the last one is always recorded).
    pub trace_every: usize,
    pub seed: u64,
    /// Carry `(z, Lambda)` of the inner ADMM across outer iterations.
    pub warm_start: bool,
    /// Reject an inexact image update that increases its own subproblem objective.
    pub monotone_safeguard: bool,
    /// Truncated dictionary SVD during the first `iters` AMM iterations.
    pub truncated_warmup: Option<(Truncation, usize)>,
    pub step_rule: StepRule,
    /// Compute the PALM subgradient bound each iteration (several extra products).
    pub subgradient_check: bool,
    /// Inner ADMM settings of the baseline; `iters` is its outer iteration count.
    pub baseline: InnerParams,
    pub snr_denominator: SnrDenominator,
    /// Fill the `seconds` column with wall time; off keeps traces reproducible.
    pub record_timing: bool,
    /// Rotate a complex starting image by the global phase that makes it closest to real.
    pub align_phase: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let params = ModelParams::default();
        Self {
            algorithm: Algorithm::Amm,
            baseline: InnerParams {
                eta: params.eta,
                r: params.r,
                iters: 100,
                domain: params.domain,
                tol: None,
            },
            params,
            patch: PatchConfig::default(),
            init_u: InitU::FromBaseline,
            trace_every: 1,
            seed: 0,
            warm_start: true,
            monotone_safeguard: true,
            truncated_warmup: None,
            step_rule: StepRule::Fixed,
            subgradient_check: false,
            snr_denominator: SnrDenominator::Estimate,
            record_timing: false,
            align_phase: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trace_every == 0 {
            return Err(Error::InvalidParameter("trace_every must be at least 1".into()));
        }
        if let StepRule::LipschitzScaled { factor } = self.step_rule {
            if !(factor > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "Lipschitz step factor must exceed 1, got {factor}"
                )));
            }
        }
        if let Some((t, _)) = self.truncated_warmup {
            if !(t.fraction > 0.0 && t.fraction <= 1.0) {
                return Err(Error::InvalidParameter("truncation fraction must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Measurements, their operator and an optional ground truth for SNR traces.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub op: &'a dyn MeasurementOperator,
    pub f: &'a MeasurementVector,
    pub truth: Option<&'a ComplexImage>,
}

impl<'a> Problem<'a> {
    pub fn new(op: &'a dyn MeasurementOperator, f: &'a MeasurementVector) -> Result<Self> {
        check_len("measurements", op.num_measurements(), f.len())?;
        Ok(Self { op, f, truth: None })
    }

    pub fn with_truth(mut self, truth: &'a ComplexImage) -> Result<Self> {
        check_len("truth rows", self.op.image_shape().0, truth.rows())?;
        check_len("truth cols", self.op.image_shape().1, truth.cols())?;
        self.truth = Some(truth);
        Ok(self)
    }
}

/// Per-iteration descent diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMonitor {
    pub iter: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    /// `||Z^{k+1} - Z^k||^2` over all three blocks.
    pub step_sq: f64,
    /// `min(c - L_u, d - L_D, e - L_alpha)` with the moduli at this step (PALM only).
    pub lambda_plus: f64,
    /// Increase of the image subproblem objective caused by the inexact
    /// inner solve (before any safeguard), zero when it decreased.
    pub inner_slack: f64,
    pub safeguard_used: bool,
    /// Norm of the computed subgradient element (PALM only).
    pub subgradient_norm: f64,
    /// `(3 max(c, d, e) + M) ||Z^k - Z^{k-1}||` with a Lipschitz bound `M`
    /// of the coupling gradient along the iterates (PALM only).
    pub subgradient_bound: f64,
    pub u_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub u: ComplexImage,
    /// `None` for the baseline.
    pub dict: Option<Dictionary>,
    pub alpha: Option<CoeffMatrix>,
    pub trace: SolverTrace,
    pub monitor: Vec<StepMonitor>,
    /// PALM steps actually used.
    pub steps: Option<crate::model::PalmSteps>,
}

/// Partial gradients of `H = 1/2 ||D alpha - R(u)||^2`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub u: ComplexImage,
    pub d: CMat,
    pub alpha: CMat,
}

fn coupling_residual(u: &ComplexImage, d: &CMat, alpha: &CMat, cfg: &PatchConfig) -> Result<CMat> {
    let p = patches::extract(u, cfg)?;
    check_len("dictionary rows", p.nrows(), d.nrows())?;
    check_len("coefficient rows", d.ncols(), alpha.nrows())?;
    check_len("coefficient columns", p.ncols(), alpha.ncols())?;
    Ok(linalg::matmul(d, alpha) - p)
}

/// `grad_u = W u - R^T(D alpha)`, `grad_D = (D alpha - R(u)) alpha^H`,
/// `grad_alpha = D^H (D alpha - R(u))`. `D` need not be orthogonal.
pub fn grad_h(u: &ComplexImage, d: &CMat, alpha: &CMat, cfg: &PatchConfig) -> Result<Gradients> {
    let resid = coupling_residual(u, d, alpha, cfg)?;
    let gu = patches::adjoint_accumulate(&resid, cfg, u.shape())?.map(|z| -z);
    Ok(Gradients {
        u: gu,
        d: linalg::matmul_adj_rhs(&resid, alpha),
        alpha: linalg::matmul_adj_lhs(d, &resid),
    })
}

/// `H` for an arbitrary square `D`, used as the reference for the gradients.
pub fn coupling_value(u: &ComplexImage, d: &CMat, alpha: &CMat, cfg: &PatchConfig) -> Result<f64> {
    Ok(0.5 * linalg::frobenius_sq(&coupling_residual(u, d, alpha, cfg)?))
}

/// Block Lipschitz moduli of the partial gradients of `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lipschitz {
    pub u: f64,
    pub d: f64,
    pub alpha: f64,
}

/// `L_u = max W`, `L_D = ||alpha alpha^H||_2` (power iteration) and
/// `L_alpha = ||D^H D||_2`, which is 1 for an orthogonal dictionary.
pub fn estimate_lipschitz(
    shape: (usize, usize),
    cfg: &PatchConfig,
    dict: &CMat,
    alpha: &CMat,
    max_iter: usize,
) -> Result<Lipschitz> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("power iteration needs at least one probe".into()));
    }
    let w = patches::coverage_weights(cfg, shape)?;
    let u = w.iter().cloned().fold(0.0, f64::max);
    let d = linalg::gram_spectral_norm(alpha, max_iter, 1e-12)?;
    let alpha_mod = if linalg::orthogonality_defect(dict) <= crate::model::ORTHOGONALITY_TOL {
        1.0
    } else {
        linalg::gram_spectral_norm(&dict.adjoint(), max_iter, 1e-12)?
    };
    Ok(Lipschitz { u, d, alpha: alpha_mod })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use crate::measurement::testutil::random_vec;
    use crate::sparse;

    fn random_mat(r: usize, c: usize, seed: u64) -> CMat {
        CMat::from_vec(r, c, random_vec(r * c, seed))
    }

    fn re_inner(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
    }

    #[test]
    fn gradients_vanish_at_exact_fit() {
        let cfg = PatchConfig::new(4, 1).unwrap();
        let u = ComplexImage::new(10, 10, random_vec(100, 1)).unwrap();
        let d = sparse::init_dct_dictionary(4).unwrap();
        let alpha = d.matrix().adjoint() * patches::extract(&u, &cfg).unwrap();
        let g = grad_h(&u, d.matrix(), &alpha, &cfg).unwrap();
        assert!(g.u.norm() < 1e-12);
        assert!(g.d.norm() < 1e-12);
        assert!(g.alpha.norm() < 1e-12);
    }

    #[test]
    fn alpha_gradient_with_orthogonal_dictionary() {
        let cfg = PatchConfig::new(4, 1).unwrap();
        let u = ComplexImage::new(10, 10, random_vec(100, 2)).unwrap();
        let d = sparse::init_dct_dictionary(4).unwrap();
        let alpha = random_mat(16, 49, 3);
        let g = grad_h(&u, d.matrix(), &alpha, &cfg).unwrap();
        let expect = &alpha - d.matrix().adjoint() * patches::extract(&u, &cfg).unwrap();
        assert!((g.alpha - expect).norm() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let cfg = PatchConfig::new(4, 1).unwrap();
        let h = 1e-6;
        for seed in 0..5u64 {
            let u = ComplexImage::new(10, 10, random_vec(100, 10 * seed)).unwrap();
            let d = random_mat(16, 16, 10 * seed + 1);
            let alpha = random_mat(16, 49, 10 * seed + 2);
            let g = grad_h(&u, &d, &alpha, &cfg).unwrap();
            let du = ComplexImage::new(10, 10, random_vec(100, 10 * seed + 3)).unwrap();
            let dd = random_mat(16, 16, 10 * seed + 4);
            let da = random_mat(16, 49, 10 * seed + 5);
            let hv = |u: &ComplexImage, d: &CMat, a: &CMat| coupling_value(u, d, a, &cfg).unwrap();
            let step = |x: &ComplexImage, dx: &ComplexImage, s: f64| {
                ComplexImage::new(10, 10, x.as_slice().iter().zip(dx.as_slice()).map(|(a, b)| a + b * s).collect())
                    .unwrap()
            };
            let fd_u = (hv(&step(&u, &du, h), &d, &alpha) - hv(&step(&u, &du, -h), &d, &alpha)) / (2.0 * h);
            let an_u = re_inner(g.u.as_slice(), du.as_slice());
            assert!((fd_u - an_u).abs() <= 1e-5 * an_u.abs().max(1.0));
            let hc = C64::new(h, 0.0);
            let fd_d = (hv(&u, &(&d + &dd * hc), &alpha) - hv(&u, &(&d - &dd * hc), &alpha)) / (2.0 * h);
            let an_d = re_inner(g.d.as_slice(), dd.as_slice());
            assert!((fd_d - an_d).abs() <= 1e-5 * an_d.abs().max(1.0));
            let fd_a = (hv(&u, &d, &(&alpha + &da * hc)) - hv(&u, &d, &(&alpha - &da * hc))) / (2.0 * h);
            let an_a = re_inner(g.alpha.as_slice(), da.as_slice());
            assert!((fd_a - an_a).abs() <= 1e-5 * an_a.abs().max(1.0));
        }
    }

    #[test]
    fn lipschitz_examples() {
        let cfg = PatchConfig::default();
        let d = sparse::init_dct_dictionary(8).unwrap();
        let alpha = random_mat(64, 4, 6);
        let l = estimate_lipschitz((40, 40), &cfg, d.matrix(), &alpha, 10_000).unwrap();
        assert_eq!(l.u, 64.0);
        assert_eq!(l.alpha, 1.0);

        let a4 = random_mat(4, 4, 7);
        let small = estimate_lipschitz((8, 8), &PatchConfig::new(2, 1).unwrap(), &CMat::identity(4, 4), &a4, 10_000)
            .unwrap();
        let dense = (&a4 * a4.adjoint()).symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        assert!((small.d - dense).abs() < 1e-9 * dense);
        assert!(estimate_lipschitz((8, 8), &cfg, d.matrix(), &alpha, 0).is_err());
    }

    #[test]
    fn algorithm_names_parse() {
        for a in [Algorithm::Amm, Algorithm::Palm, Algorithm::PrBaseline] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sgd".parse::<Algorithm>().is_err());
    }
}
