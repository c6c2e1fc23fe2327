//! Domain values of the reconstruction model and the functionals evaluated on them.
//!
//! The model couples an image `u`, an orthogonal patch dictionary `D` and a
//! coefficient matrix `alpha` through
//!
//! ```text
//! obj(u, D, alpha) = 1/2 ||D alpha - R(u)||^2 + eta * B(|A u|^2, f) + tau * ||alpha||_0
//! ```
//!
//! subject to `D^H D = I`, with `B(h, f) = 1/2 sum_j (h_j - f_j log h_j)`.

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CMat};
use crate::measurement::MeasurementOperator;
use crate::patches::{self, PatchConfig};

/// Tolerance on `||D^H D - I||_F` beyond which the orthogonality indicator is `+inf`.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Complex image stored row-major (lexicographic order), `data.len() == rows * cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    data: Vec<C64>,
    rows: usize,
    cols: usize,
}

impl ComplexImage {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        check_len("image data", rows * cols, data.len())?;
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.cols + col]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|z| z * s).collect())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&z| f(z)).collect())
    }

    /// `||self - other||`
    pub fn distance(&self, other: &ComplexImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Nonnegative photon counts or intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    data: Vec<f64>,
}

impl MeasurementVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurements"));
        }
        if let Some(pos) = data.iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "negative measurement {} at index {pos}",
                data[pos]
            )));
        }
        Ok(Self { data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Square patch dictionary with orthonormal columns (atoms).
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    matrix: CMat,
    patch_side: usize,
}

impl Dictionary {
    /// Wraps `matrix` (`l x l`, `l = patch_side^2`). Orthogonality is not
    /// enforced here; `objective` treats a violating dictionary as infeasible.
    pub fn new(matrix: CMat, patch_side: usize) -> Result<Self> {
        let l = patch_side * patch_side;
        check_len("dictionary rows", l, matrix.nrows())?;
        check_len("dictionary columns", l, matrix.ncols())?;
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("dictionary"));
        }
        Ok(Self { matrix, patch_side })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn atoms(&self) -> usize {
        self.matrix.ncols()
    }

    /// `||D^H D - I||_F`
    pub fn orthogonality_defect(&self) -> f64 {
        linalg::orthogonality_defect(&self.matrix)
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonality_defect() <= ORTHOGONALITY_TOL
    }
}

/// Sparse coefficients, one column per patch placement.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatrix {
    matrix: CMat,
}

impl CoeffMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        Ok(Self { matrix })
    }

    pub fn zeros(atoms: usize, placements: usize) -> Self {
        Self {
            matrix: CMat::zeros(atoms, placements),
        }
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn l0(&self, mode: L0Mode) -> usize {
        l0_norm(&self.matrix, mode)
    }

    pub fn sparsity(&self) -> f64 {
        sparsity_level(&self.matrix)
    }

    /// Sparsity level of the real parts only.
    pub fn sparsity_real(&self) -> f64 {
        percent(self.matrix.iter().filter(|z| z.re != 0.0).count(), self.matrix.len())
    }

    /// Sparsity level of the imaginary parts only.
    pub fn sparsity_imag(&self) -> f64 {
        percent(self.matrix.iter().filter(|z| z.im != 0.0).count(), self.matrix.len())
    }
}

/// Which L0 pseudo-norm is used for complex coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum L0Mode {
    /// Count entries with nonzero modulus.
    #[default]
    Isotropic,
    /// Count nonzero real parts plus nonzero imaginary parts.
    Anisotropic,
}

/// Threshold used by the hard-thresholding coefficient updates.
///
/// `Direct` compares magnitudes against `tau` (AMM) or `tau / e` (PALM).
/// `Standard` uses the exact L0 proximal threshold `sqrt(2 tau)` resp.
/// `sqrt(2 tau / e)`, which makes each coefficient update an exact block
/// minimizer of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    #[default]
    Direct,
    Standard,
}

impl ThresholdRule {
    /// Threshold for a sparsity weight `tau` and proximal step `step` (1 for AMM).
    pub fn threshold(self, tau: f64, step: f64) -> f64 {
        match self {
            ThresholdRule::Direct => tau / step,
            ThresholdRule::Standard => (2.0 * tau / step).sqrt(),
        }
    }
}

/// Admissible set of the image variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ImageDomain {
    #[default]
    Complex,
    /// Images constrained to real values; image updates solve the real-restricted system.
    Real,
}

/// Fixed proximal steps of the linearized solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PalmSteps {
    /// Image step.
    pub c: f64,
    /// Dictionary step.
    pub d: f64,
    /// Coefficient step; must exceed 1/2.
    pub e: f64,
}

impl Default for PalmSteps {
    fn default() -> Self {
        Self {
            c: 10.0,
            d: 50.0,
            e: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Sparsity weight.
    pub tau: f64,
    /// Data-fidelity weight.
    pub eta: f64,
    /// ADMM penalty.
    pub r: f64,
    pub l0_mode: L0Mode,
    pub threshold_rule: ThresholdRule,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub steps: PalmSteps,
    pub domain: ImageDomain,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            tau: 4.5e-4,
            eta: 8.0e-6,
            r: 1e-3,
            l0_mode: L0Mode::Isotropic,
            threshold_rule: ThresholdRule::Direct,
            inner_iters: 5,
            outer_iters: 100,
            steps: PalmSteps::default(),
            domain: ImageDomain::Complex,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("eta", self.eta),
            ("r", self.r),
            ("c", self.steps.c),
            ("d", self.steps.d),
            ("e", self.steps.e),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.steps.e <= 0.5 {
            return Err(Error::InvalidParameter(format!(
                "coefficient step e must exceed 1/2, got {}",
                self.steps.e
            )));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidParameter("inner_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One completed outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// Phase-aligned SNR in dB, NaN when no ground truth is attached.
    pub snr_db: f64,
    pub err_u: f64,
    pub err_d: f64,
    /// Percentage of nonzero coefficients.
    pub sparsity: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64 * 100.0
    }
}

/// Sum of `h_j - f_j log h_j`, without the 1/2. `+inf` where `h_j = 0 < f_j`.
pub(crate) fn kl_sum(h: &[f64], f: &[f64]) -> f64 {
    h.iter()
        .zip(f)
        .map(|(&h, &f)| {
            if f == 0.0 {
                h
            } else if h <= 0.0 {
                f64::INFINITY
            } else {
                h - f * h.ln()
            }
        })
        .sum()
}

/// `B(h, f) = 1/2 sum_j (h_j - f_j log h_j)` with `0 log 0 = 0`.
pub fn kl_divergence(h: &[f64], f: &[f64]) -> Result<f64> {
    check_len("kl_divergence", h.len(), f.len())?;
    for (j, (&hj, &fj)) in h.iter().zip(f).enumerate() {
        if hj < 0.0 || fj < 0.0 {
            return Err(Error::Domain(format!("negative entry at index {j}")));
        }
        if hj == 0.0 && fj > 0.0 {
            return Err(Error::Domain(format!(
                "h({j}) = 0 with positive count f({j}) = {fj}"
            )));
        }
    }
    Ok(0.5 * kl_sum(h, f))
}

/// Isotropic or anisotropic L0 pseudo-norm with an exact-zero test.
pub fn l0_norm(alpha: &CMat, mode: L0Mode) -> usize {
    match mode {
        L0Mode::Isotropic => alpha.iter().filter(|z| z.re != 0.0 || z.im != 0.0).count(),
        L0Mode::Anisotropic => alpha
            .iter()
            .map(|z| (z.re != 0.0) as usize + (z.im != 0.0) as usize)
            .sum(),
    }
}

/// Percentage of nonzero entries (isotropic count over `c * d`).
pub fn sparsity_level(alpha: &CMat) -> f64 {
    percent(l0_norm(alpha, L0Mode::Isotropic), alpha.len())
}

/// The three finite terms of the objective, kept separately for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    pub coupling: f64,
    pub fidelity: f64,
    pub sparsity: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.coupling + self.fidelity + self.sparsity
    }
}

/// `1/2 ||D alpha - R(u)||^2`
pub fn coupling_energy(
    u: &ComplexImage,
    dict: &Dictionary,
    alpha: &CoeffMatrix,
    cfg: &PatchConfig,
) -> Result<f64> {
    let patches = patches::extract(u, cfg)?;
    check_len("coefficient columns", patches.ncols(), alpha.matrix().ncols())?;
    check_len("coefficient rows", dict.atoms(), alpha.matrix().nrows())?;
    check_len("patch length", patches.nrows(), dict.matrix().nrows())?;
    let recon = linalg::matmul(dict.matrix(), alpha.matrix());
    Ok(0.5
        * recon
            .iter()
            .zip(patches.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>())
}

/// `eta * B(|A u|^2, f)`; `+inf` outside the domain of the log.
pub fn fidelity_energy(
    u: &ComplexImage,
    op: &dyn MeasurementOperator,
    f: &MeasurementVector,
    eta: f64,
) -> Result<f64> {
    let au = op.forward(u)?;
    check_len("measurements", au.len(), f.len())?;
    let h: Vec<f64> = au.iter().map(|z| z.norm_sqr()).collect();
    Ok(eta * 0.5 * kl_sum(&h, f.as_slice()))
}

pub fn objective_terms(
    u: &ComplexImage,
    dict: &Dictionary,
    alpha: &CoeffMatrix,
    op: &dyn MeasurementOperator,
    f: &MeasurementVector,
    params: &ModelParams,
    cfg: &PatchConfig,
) -> Result<ObjectiveTerms> {
    Ok(ObjectiveTerms {
        coupling: coupling_energy(u, dict, alpha, cfg)?,
        fidelity: fidelity_energy(u, op, f, params.eta)?,
        sparsity: params.tau * alpha.l0(params.l0_mode) as f64,
    })
}

/// Full objective; `+inf` when `D` is not orthogonal within [`ORTHOGONALITY_TOL`].
pub fn objective(
    u: &ComplexImage,
    dict: &Dictionary,
    alpha: &CoeffMatrix,
    op: &dyn MeasurementOperator,
    f: &MeasurementVector,
    params: &ModelParams,
    cfg: &PatchConfig,
) -> Result<f64> {
    let terms = objective_terms(u, dict, alpha, op, f, params, cfg)?;
    if !dict.is_orthogonal() {
        return Ok(f64::INFINITY);
    }
    Ok(terms.total())
}
