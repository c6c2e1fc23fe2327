//! ADMM for the image subproblem
//!
//! `min_u 1/2 ||Y - R(u)||^2 + eta B(|z|^2, f)  s.t.  z = A u`
//!
//! and its linearized variant, where the patch term is replaced by the
//! proximal model `<W u_k - R^T Y, u> + c/2 ||u - u_k||^2`.

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::linalg::CMat;
use crate::measurement::MeasurementOperator;
use crate::model::{ComplexImage, ImageDomain, MeasurementVector};
use crate::patches::{self, PatchConfig};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Patch target `Y` in the form the image solvers need: the overlap-add
/// `R^T Y`, the coverage weights `W` and `||Y||^2`, so that
/// `1/2 ||Y - R(u)||^2 = 1/2 (<W u, u> - 2 Re <R^T Y, u> + ||Y||^2)`.
#[derive(Clone, Debug)]
pub struct PatchTerm {
    shape: (usize, usize),
    back: Vec<C64>,
    weights: Vec<f64>,
    target_sq: f64,
}

impl PatchTerm {
    pub fn new(y: &CMat, cfg: &PatchConfig, shape: (usize, usize)) -> Result<Self> {
        let back = patches::adjoint_accumulate(y, cfg, shape)?.into_vec();
        let weights = patches::coverage_weights(cfg, shape)?;
        let target_sq = y.iter().map(|z| z.norm_sqr()).sum();
        Ok(Self {
            shape,
            back,
            weights,
            target_sq,
        })
    }

    /// No patch coupling at all (`W = 0`); used by the unregularized baseline.
    pub fn empty(shape: (usize, usize)) -> Self {
        let n = shape.0 * shape.1;
        Self {
            shape,
            back: vec![ZERO; n],
            weights: vec![0.0; n],
            target_sq: 0.0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// `R^T Y`.
    pub fn back(&self) -> &[C64] {
        &self.back
    }

    /// Diagonal of `W`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `1/2 ||Y - R(u)||^2`.
    pub fn energy(&self, u: &[C64]) -> f64 {
        let mut quad = 0.0;
        let mut cross = 0.0;
        for ((x, w), b) in u.iter().zip(&self.weights).zip(&self.back) {
            quad += w * x.norm_sqr();
            cross += (b * x.conj()).re;
        }
        (0.5 * (quad - 2.0 * cross + self.target_sq)).max(0.0)
    }

    /// `W u - R^T Y`, the gradient of [`PatchTerm::energy`].
    pub fn gradient(&self, u: &[C64]) -> Vec<C64> {
        u.iter()
            .zip(&self.weights)
            .zip(&self.back)
            .map(|((x, w), b)| x * w - b)
            .collect()
    }

    fn check(&self, op: &dyn MeasurementOperator) -> Result<()> {
        check_len("image rows", op.image_shape().0, self.shape.0)?;
        check_len("image cols", op.image_shape().1, self.shape.1)
    }
}

/// Scalar Poisson proximal map; `sign(0) = 1`.
#[inline]
pub fn poisson_prox_scalar(w: C64, f: f64, eta: f64, r: f64) -> C64 {
    let a = w.norm();
    let rho = (r * a + (r * r * a * a + 4.0 * eta * (eta + r) * f).sqrt()) / (2.0 * (eta + r));
    if a > 0.0 {
        w * (rho / a)
    } else {
        C64::new(rho, 0.0)
    }
}

/// Elementwise minimizer of `eta/2 (|z|^2 - f log |z|^2) + r/2 |z - w|^2`.
pub fn poisson_prox(w: &[C64], f: &[f64], eta: f64, r: f64) -> Result<Vec<C64>> {
    check_len("poisson_prox counts", w.len(), f.len())?;
    if !(eta > 0.0 && r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "poisson_prox needs eta, r > 0, got {eta}, {r}"
        )));
    }
    Ok(w
        .iter()
        .zip(f)
        .map(|(&w, &f)| poisson_prox_scalar(w, f, eta, r))
        .collect())
}

fn normal_apply(op: &dyn MeasurementOperator, r: f64, diag: &[f64], x: &[C64], tmp: &mut [C64], out: &mut [C64]) {
    op.apply(x, tmp);
    op.apply_adjoint(tmp, out);
    for ((o, xi), d) in out.iter_mut().zip(x).zip(diag) {
        *o = *o * r + xi * d;
    }
}

fn re_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Conjugate gradients on `(r A^H A + diag) x = rhs`. With the real inner
/// product `Re <a, b>` this is CG on the real 2n x 2n block form.
fn cg_solve(
    op: &dyn MeasurementOperator,
    r: f64,
    diag: &[f64],
    rhs: &[C64],
    x0: &[C64],
    domain: ImageDomain,
) -> Result<Vec<C64>> {
    let n = rhs.len();
    let project = |v: &mut [C64]| {
        if domain == ImageDomain::Real {
            v.iter_mut().for_each(|z| z.im = 0.0);
        }
    };
    let mut rhs = rhs.to_vec();
    project(&mut rhs);
    let rhs = &rhs[..];
    let rhs_norm = re_dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    let tol = 1e-10 * rhs_norm;
    let mut tmp = vec![ZERO; op.num_measurements()];
    let mut ap = vec![ZERO; n];
    let mut x = x0.to_vec();
    project(&mut x);
    normal_apply(op, r, diag, &x, &mut tmp, &mut ap);
    project(&mut ap);
    let mut res: Vec<C64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut p = res.clone();
    let mut rr = re_dot(&res, &res);
    let cap = 20 * n + 100;
    for _ in 0..cap {
        if rr.sqrt() <= tol {
            return Ok(x);
        }
        normal_apply(op, r, diag, &p, &mut tmp, &mut ap);
        project(&mut ap);
        let pap = re_dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular("normal operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            res[i] -= ap[i] * alpha;
        }
        let rr_new = re_dot(&res, &res);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = res[i] + p[i] * beta;
        }
    }
    if rr.sqrt() <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence("conjugate gradient image solve"))
    }
}

fn diagonal_solve(normal: &[f64], r: f64, diag: &[f64], rhs: &[C64], domain: ImageDomain) -> Result<Vec<C64>> {
    let keep_im = if domain == ImageDomain::Real { 0.0 } else { 1.0 };
    rhs.iter()
        .zip(normal.iter().zip(diag))
        .enumerate()
        .map(|(i, (b, (a, d)))| {
            let den = r * a + d;
            if den > 0.0 {
                Ok(C64::new(b.re, b.im * keep_im) / den)
            } else {
                Err(Error::Singular(format!("zero diagonal of the image system at pixel {i}")))
            }
        })
        .collect()
}

fn rhs_amm(op: &dyn MeasurementOperator, term: &PatchTerm, v: &[C64], r: f64) -> Vec<C64> {
    let mut rhs = vec![ZERO; op.num_pixels()];
    op.apply_adjoint(v, &mut rhs);
    for (o, b) in rhs.iter_mut().zip(&term.back) {
        *o = *o * r + b;
    }
    rhs
}

fn check_v(op: &dyn MeasurementOperator, term: &PatchTerm, v: &[C64]) -> Result<()> {
    term.check(op)?;
    check_len("v", op.num_measurements(), v.len())
}

/// `(r A^H A + W) u = r A^H v + R^T Y` by conjugate gradients, for any `A`.
/// In the real domain the system is restricted to real `u`.
pub fn solve_u_general(
    term: &PatchTerm,
    op: &dyn MeasurementOperator,
    v: &[C64],
    r: f64,
    domain: ImageDomain,
) -> Result<ComplexImage> {
    check_v(op, term, v)?;
    let rhs = rhs_amm(op, term, v, r);
    let u = cg_solve(op, r, &term.weights, &rhs, &vec![ZERO; rhs.len()], domain)?;
    Ok(ComplexImage::from_vec_unchecked(term.shape.0, term.shape.1, u))
}

/// Same system by elementwise division; needs a diagonal `A^H A`.
pub fn solve_u_diagonal(
    term: &PatchTerm,
    op: &dyn MeasurementOperator,
    v: &[C64],
    r: f64,
    domain: ImageDomain,
) -> Result<ComplexImage> {
    check_v(op, term, v)?;
    let normal = op
        .normal_diag()
        .ok_or_else(|| Error::InvalidParameter("operator has no diagonal normal operator".into()))?;
    let rhs = rhs_amm(op, term, v, r);
    let u = diagonal_solve(&normal, r, &term.weights, &rhs, domain)?;
    Ok(ComplexImage::from_vec_unchecked(term.shape.0, term.shape.1, u))
}

/// Linearized step
/// `(r A^H A + c I) u = r A^H v + R^T Y + (c I - W) u_k`.
/// Falls back to conjugate gradients when `A^H A` is not diagonal.
pub fn solve_u_palm(
    term: &PatchTerm,
    op: &dyn MeasurementOperator,
    v: &[C64],
    r: f64,
    u_k: &ComplexImage,
    c: f64,
    domain: ImageDomain,
) -> Result<ComplexImage> {
    check_v(op, term, v)?;
    check_len("u_k", op.num_pixels(), u_k.len())?;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("image step must be positive, got {c}")));
    }
    let mut rhs = rhs_amm(op, term, v, r);
    for ((o, x), w) in rhs.iter_mut().zip(u_k.as_slice()).zip(&term.weights) {
        *o += x * (c - w);
    }
    let diag = vec![c; rhs.len()];
    let u = match op.normal_diag() {
        Some(normal) => diagonal_solve(&normal, r, &diag, &rhs, domain)?,
        None => cg_solve(op, r, &diag, &rhs, u_k.as_slice(), domain)?,
    };
    Ok(ComplexImage::from_vec_unchecked(term.shape.0, term.shape.1, u))
}

/// Which image update the ADMM loop uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerVariant {
    /// Exact patch term.
    Amm,
    /// Proximal linearization at `u_init` with step `c`.
    Palm { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerParams {
    pub eta: f64,
    pub r: f64,
    pub iters: usize,
    pub domain: ImageDomain,
    /// Stop early once the primal residual falls below this value. Off by default.
    pub tol: Option<f64>,
}

impl Default for InnerParams {
    fn default() -> Self {
        Self {
            eta: 8.0e-6,
            r: 1e-3,
            iters: 5,
            domain: ImageDomain::Complex,
            tol: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub u: ComplexImage,
    pub z: Vec<C64>,
    pub lambda: Vec<C64>,
    pub r: f64,
}

impl AdmmState {
    /// `z = A u`, `Lambda = 0`.
    pub fn cold(op: &dyn MeasurementOperator, u: ComplexImage, r: f64) -> Result<Self> {
        let z = op.forward(&u)?;
        let lambda = vec![ZERO; z.len()];
        Ok(Self { u, z, lambda, r })
    }

    /// Rotate every iterate by the same global phase.
    pub fn rotated(&self, phase: C64) -> Self {
        Self {
            u: self.u.scaled(phase),
            z: self.z.iter().map(|z| z * phase).collect(),
            lambda: self.lambda.iter().map(|l| l * phase).collect(),
            r: self.r,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InnerOutput {
    pub state: AdmmState,
    /// `||z - A u||` after each iteration.
    pub residuals: Vec<f64>,
}

/// Runs the ADMM loop from `u_init`. `warm` supplies `(z, Lambda)` from a
/// previous call; otherwise `z = A u_init` and `Lambda = 0`.
pub fn run_inner(
    term: &PatchTerm,
    op: &dyn MeasurementOperator,
    f: &MeasurementVector,
    params: &InnerParams,
    u_init: &ComplexImage,
    variant: InnerVariant,
    warm: Option<(Vec<C64>, Vec<C64>)>,
) -> Result<InnerOutput> {
    term.check(op)?;
    let m = op.num_measurements();
    check_len("measurements", m, f.len())?;
    let r = params.r;
    if !(r > 0.0 && params.eta > 0.0) {
        return Err(Error::InvalidParameter("inner ADMM needs eta, r > 0".into()));
    }
    let mut state = match warm {
        Some((z, lambda)) => {
            check_len("warm z", m, z.len())?;
            check_len("warm multiplier", m, lambda.len())?;
            AdmmState {
                u: u_init.clone(),
                z,
                lambda,
                r,
            }
        }
        None => AdmmState::cold(op, u_init.clone(), r)?,
    };
    let mut au = vec![ZERO; m];
    let mut residuals = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        let v: Vec<C64> = state.z.iter().zip(&state.lambda).map(|(z, l)| z + l / r).collect();
        state.u = match variant {
            InnerVariant::Amm => match op.normal_diag() {
                Some(_) => solve_u_diagonal(term, op, &v, r, params.domain)?,
                None => solve_u_general(term, op, &v, r, params.domain)?,
            },
            InnerVariant::Palm { c } => solve_u_palm(term, op, &v, r, u_init, c, params.domain)?,
        };
        op.apply(state.u.as_slice(), &mut au);
        let w: Vec<C64> = au.iter().zip(&state.lambda).map(|(a, l)| a - l / r).collect();
        state.z = poisson_prox(&w, f.as_slice(), params.eta, r)?;
        let mut res = 0.0;
        for ((l, z), a) in state.lambda.iter_mut().zip(&state.z).zip(&au) {
            let d = z - a;
            *l += d * r;
            res += d.norm_sqr();
        }
        let res = res.sqrt();
        if !res.is_finite() {
            return Err(Error::NonFinite("inner ADMM residual"));
        }
        residuals.push(res);
        if params.tol.is_some_and(|t| res <= t) {
            break;
        }
    }
    Ok(InnerOutput { state, residuals })
}
