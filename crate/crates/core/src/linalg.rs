//! Dense complex matrix helpers shared by the dictionary and coefficient updates.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;

fn zgemm_into(
    m: usize,
    k: usize,
    n: usize,
    a: &[C64],
    (rsa, csa): (isize, isize),
    b: &[C64],
    (rsb, csb): (isize, isize),
    out: &mut CMat,
) {
    debug_assert_eq!(out.nrows(), m);
    debug_assert_eq!(out.ncols(), n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.fill(C64::new(0.0, 0.0));
        return;
    }
    // SAFETY: Complex<f64> is repr(C) with layout [re, im], identical to
    // matrixmultiply's c64. The strides describe views that stay inside the
    // borrowed slices (checked by the callers' dimension asserts).
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            b.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            out.as_mut_slice().as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `a * b`
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul inner dimension");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = CMat::zeros(m, n);
    zgemm_into(
        m,
        k,
        n,
        a.as_slice(),
        (1, m as isize),
        b.as_slice(),
        (1, k as isize),
        &mut out,
    );
    out
}

/// `a^H * b`
pub fn matmul_adj_lhs(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "matmul_adj_lhs inner dimension");
    let conj: Vec<C64> = a.iter().map(|z| z.conj()).collect();
    let (m, k, n) = (a.ncols(), a.nrows(), b.ncols());
    let mut out = CMat::zeros(m, n);
    // a is k x m column-major; its transpose has row stride k, column stride 1.
    zgemm_into(
        m,
        k,
        n,
        &conj,
        (k as isize, 1),
        b.as_slice(),
        (1, k as isize),
        &mut out,
    );
    out
}

/// `a * b^H`
pub fn matmul_adj_rhs(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.ncols(), "matmul_adj_rhs inner dimension");
    let conj: Vec<C64> = b.iter().map(|z| z.conj()).collect();
    let (m, k, n) = (a.nrows(), a.ncols(), b.nrows());
    let mut out = CMat::zeros(m, n);
    zgemm_into(
        m,
        k,
        n,
        a.as_slice(),
        (1, m as isize),
        &conj,
        (n as isize, 1),
        &mut out,
    );
    out
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `||M^H M - I||_F`
pub fn orthogonality_defect(m: &CMat) -> f64 {
    let gram = matmul_adj_lhs(m, m);
    let mut acc = 0.0;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (gram[(i, j)] - C64::new(target, 0.0)).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Full SVD `m = U diag(s) V^H`, returned as `(U, s, V^H)`.
pub fn svd(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence("svd"))?;
    let u = svd.u.ok_or(Error::NoConvergence("svd"))?;
    let v_t = svd.v_t.ok_or(Error::NoConvergence("svd"))?;
    Ok((u, svd.singular_values.iter().copied().collect(), v_t))
}

/// Nearest matrix with orthonormal columns in Frobenius norm: `U V^H`.
pub fn polar_factor(m: &CMat) -> Result<CMat> {
    let (u, _, v_t) = svd(m)?;
    Ok(matmul(&u, &v_t))
}

/// Spectral norm of the Hermitian PSD matrix `a a^H` by power iteration.
pub fn gram_spectral_norm(a: &CMat, max_iter: usize, tol: f64) -> Result<f64> {
    let gram = matmul_adj_rhs(a, a);
    let c = gram.nrows();
    if c == 0 {
        return Ok(0.0);
    }
    if frobenius_sq(&gram) == 0.0 {
        return Ok(0.0);
    }
    // Deterministic start that is not orthogonal to a generic dominant vector.
    let mut x = nalgebra::DVector::from_fn(c, |i, _| C64::new(1.0 + 0.01 * i as f64, 0.0));
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = &gram * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm / x.norm();
        x = y / C64::new(norm, 0.0);
        if (next - lambda).abs() <= tol * next {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::NoConvergence("power iteration"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut s = seed;
        CMat::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64) / (1u64 << 53) as f64 - 0.5;
            C64::new(a, b)
        })
    }

    #[test]
    fn gemm_variants_match_nalgebra() {
        let a = sample(5, 7, 1);
        let b = sample(7, 3, 2);
        let c = sample(5, 3, 3);
        let d = sample(4, 7, 4);
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-12);
        assert!((matmul_adj_lhs(&a, &c) - a.adjoint() * &c).norm() < 1e-12);
        assert!((matmul_adj_rhs(&a, &d) - &a * d.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn polar_factor_is_unitary() {
        let m = sample(6, 6, 9);
        let q = polar_factor(&m).unwrap();
        assert!(orthogonality_defect(&q) < 1e-12);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let a = sample(4, 9, 5);
        let (_, s, _) = svd(&a).unwrap();
        let top = s.iter().cloned().fold(0.0, f64::max);
        let est = gram_spectral_norm(&a, 10_000, 1e-14).unwrap();
        assert!((est - top * top).abs() < 1e-9 * top * top);
    }
}
