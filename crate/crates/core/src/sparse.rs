//! Orthogonal dictionary initialization and updates, and hard-thresholding
//! sparse coding.

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CoeffMatrix, Dictionary, L0Mode, ThresholdRule};

/// Orthonormal 2-D DCT-II basis of `patch_side^2` atoms. Atom `k1 * p + k2`
/// is the separable product of 1-D atoms `k1` (rows) and `k2` (columns).
pub fn init_dct_dictionary(patch_side: usize) -> Result<Dictionary> {
    if patch_side < 2 {
        return Err(Error::InvalidParameter(format!(
            "patch_side must be at least 2, got {patch_side}"
        )));
    }
    let p = patch_side;
    let basis = |k: usize, x: usize| {
        let s = if k == 0 { (1.0 / p as f64).sqrt() } else { (2.0 / p as f64).sqrt() };
        s * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2 * p) as f64).cos()
    };
    let m = CMat::from_fn(p * p, p * p, |row, col| {
        let (x1, x2) = (row / p, row % p);
        let (k1, k2) = (col / p, col % p);
        C64::new(basis(k1, x1) * basis(k2, x2), 0.0)
    });
    Dictionary::new(m, patch_side)
}

/// Warm-up truncation of the dictionary SVD: keep the leading
/// `fraction` of singular pairs and complete the remaining columns with an
/// orthonormal basis of the complements, so the result stays orthogonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub fraction: f64,
}

fn check_shapes(patches: &CMat, alpha: &CoeffMatrix) -> Result<()> {
    check_len("coefficient columns", patches.ncols(), alpha.matrix().ncols())?;
    check_len("square dictionary", patches.nrows(), alpha.matrix().nrows())
}

fn complement(basis: &CMat) -> CMat {
    let (l, k) = basis.shape();
    let mut stacked = CMat::zeros(l, k + l);
    stacked.view_mut((0, 0), (l, k)).copy_from(basis);
    stacked.view_mut((0, k), (l, l)).fill_with_identity();
    let q = nalgebra::linalg::QR::new(stacked).q();
    q.columns(k, l - k).into_owned()
}

fn procrustes(m: &CMat, truncation: Option<Truncation>, prev: Option<&CMat>) -> Result<CMat> {
    let (u, s, v_t) = linalg::svd(m)?;
    let l = m.nrows();
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let rank = s.iter().filter(|&&x| x > 1e-12 * s_max).count();
    let keep = match truncation {
        Some(t) if t.fraction < 1.0 => ((t.fraction * l as f64).ceil() as usize).clamp(1, l),
        _ => l,
    };
    let head_len = keep.min(rank);
    let u_h = u.columns(0, head_len).into_owned();
    let v_h = v_t.rows(0, head_len).adjoint();
    let head = linalg::matmul_adj_rhs(&u_h, &v_h);
    if head_len == l {
        return Ok(head);
    }
    let (u_c, v_c) = match (prev, keep < l) {
        // Every completion is optimal on the null directions of `m`; take
        // the one nearest the previous dictionary so unused atoms stay put.
        (Some(_), _) | (None, false) => (
            u.columns(head_len, l - head_len).into_owned(),
            v_t.rows(head_len, l - head_len).adjoint(),
        ),
        (None, true) => (complement(&u_h), complement(&v_h)),
    };
    let tail = match prev {
        Some(d) => {
            let core = linalg::matmul(&linalg::matmul_adj_lhs(&u_c, d), &v_c);
            linalg::matmul_adj_rhs(&linalg::matmul(&u_c, &linalg::polar_factor(&core)?), &v_c)
        }
        None => linalg::matmul_adj_rhs(&u_c, &v_c),
    };
    Ok(head + tail)
}

/// Block minimizer of `||D alpha - P||^2` over orthogonal `D`: `U V^H` with
/// `P alpha^H = U S V^H`. When `P alpha^H` is rank deficient the minimizer
/// is not unique; with `prev` the free part is chosen nearest to it.
pub fn update_dictionary_amm(
    patches: &CMat,
    alpha: &CoeffMatrix,
    patch_side: usize,
    truncation: Option<Truncation>,
    prev: Option<&Dictionary>,
) -> Result<Dictionary> {
    check_shapes(patches, alpha)?;
    let cross = linalg::matmul_adj_rhs(patches, alpha.matrix());
    Dictionary::new(procrustes(&cross, truncation, prev.map(|d| d.matrix()))?, patch_side)
}

/// Projected gradient step on the dictionary:
/// `D_hat = D (I - alpha alpha^H / d) + P alpha^H / d`, then its polar factor.
pub fn update_dictionary_palm(
    prev: &Dictionary,
    patches: &CMat,
    alpha: &CoeffMatrix,
    step: f64,
) -> Result<Dictionary> {
    check_shapes(patches, alpha)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("dictionary step must be positive, got {step}")));
    }
    let residual = patches - linalg::matmul(prev.matrix(), alpha.matrix());
    let grad_step = linalg::matmul_adj_rhs(&residual, alpha.matrix()) / C64::new(step, 0.0);
    let d_hat = prev.matrix() + grad_step;
    Dictionary::new(linalg::polar_factor(&d_hat)?, prev.patch_side())
}

#[inline]
fn keep(v: f64, thresh: f64) -> f64 {
    if v.abs() >= thresh {
        v
    } else {
        0.0
    }
}

/// Hard thresholding. Isotropic keeps an entry iff `|m| >= thresh`;
/// anisotropic applies that rule to real and imaginary parts separately.
pub fn hard_threshold(m: &CMat, thresh: f64, mode: L0Mode) -> CoeffMatrix {
    let out = match mode {
        L0Mode::Isotropic => m.map(|z| if z.norm() >= thresh { z } else { C64::new(0.0, 0.0) }),
        L0Mode::Anisotropic => m.map(|z| C64::new(keep(z.re, thresh), keep(z.im, thresh))),
    };
    CoeffMatrix::from_matrix_unchecked(out)
}

/// `Thresh(D^H P)` at the threshold the rule assigns to `tau`.
pub fn sparse_code_amm(
    dict: &Dictionary,
    patches: &CMat,
    tau: f64,
    mode: L0Mode,
    rule: ThresholdRule,
) -> Result<CoeffMatrix> {
    check_len("patch length", dict.matrix().nrows(), patches.nrows())?;
    let analysis = linalg::matmul_adj_lhs(dict.matrix(), patches);
    Ok(hard_threshold(&analysis, rule.threshold(tau, 1.0), mode))
}

/// Thresholds `(1 - 1/e) alpha_prev + (1/e) D^H P` at the threshold for `tau / e`.
pub fn sparse_code_palm(
    alpha_prev: &CoeffMatrix,
    dict: &Dictionary,
    patches: &CMat,
    tau: f64,
    step: f64,
    mode: L0Mode,
    rule: ThresholdRule,
) -> Result<CoeffMatrix> {
    check_len("patch length", dict.matrix().nrows(), patches.nrows())?;
    check_len("coefficient columns", patches.ncols(), alpha_prev.matrix().ncols())?;
    if !(step > 0.5) {
        return Err(Error::InvalidParameter(format!("coefficient step must exceed 1/2, got {step}")));
    }
    let analysis = linalg::matmul_adj_lhs(dict.matrix(), patches);
    let w = 1.0 / step;
    let hat = alpha_prev.matrix() * C64::new(1.0 - w, 0.0) + analysis * C64::new(w, 0.0);
    Ok(hard_threshold(&hat, rule.threshold(tau, step), mode))
}

/// Atom montage of one component of the dictionary: atoms laid out on a
/// `ceil(sqrt(c))` grid separated by one-pixel gutters, each atom rescaled
/// to `[0, 1]`. Returns `(rows, cols, values)` row-major.
pub fn atom_montage(dict: &Dictionary, part: impl Fn(C64) -> f64) -> (usize, usize, Vec<f64>) {
    let p = dict.patch_side();
    let c = dict.atoms();
    let grid = (c as f64).sqrt().ceil() as usize;
    let side = grid * (p + 1) + 1;
    let mut img = vec![1.0; side * side];
    for atom in 0..c {
        let values: Vec<f64> = dict.matrix().column(atom).iter().map(|&z| part(z)).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (gr, gc) = (atom / grid, atom % grid);
        for a in 0..p {
            for b in 0..p {
                let r = 1 + gr * (p + 1) + a;
                let col = 1 + gc * (p + 1) + b;
                img[r * side + col] = (values[a * p + b] - lo) / span;
            }
        }
    }
    (side, side, img)
}
