//! Dense complex eigen-solvers used by the diagnostics and the non-Hermitian analysis.

use nalgebra::{Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::algebra::{Operator, ZERO};

/// Eigen-decomposition of the Hermitian part of `m`; eigenvalues ascending.
pub fn hermitian_eigen(m: &Operator) -> (Vec<f64>, Operator) {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = Operator::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn hermitian_eigenvalues(m: &Operator) -> Vec<f64> {
    hermitian_eigen(m).0
}

/// `f(m)` for Hermitian `m` through its spectral decomposition.
pub fn hermitian_function(m: &Operator, f: impl Fn(f64) -> f64) -> Operator {
    let (vals, vecs) = hermitian_eigen(m);
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        let fv = Complex64::new(f(v), 0.0);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Eigenvalues below this fraction of the largest one are round-off for
/// positive semidefinite inputs.
pub const PSD_CLAMP: f64 = 1e-14;

/// Principal square root of a positive semidefinite matrix. Eigenvalues below
/// `PSD_CLAMP · λ_max` are set to zero so that round-off in null directions is
/// not amplified by the square root.
pub fn psd_sqrt(m: &Operator) -> Operator {
    let (vals, vecs) = hermitian_eigen(m);
    let cut = vals.last().copied().unwrap_or(0.0).max(0.0) * PSD_CLAMP;
    let mut scaled = vecs.clone();
    for (c, &v) in vals.iter().enumerate() {
        let fv = Complex64::new(if v > cut { v.sqrt() } else { 0.0 }, 0.0);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// True when `m + shift·I` admits a Cholesky factorisation, i.e. the smallest
/// eigenvalue of the Hermitian part exceeds `-shift`.
pub fn exceeds_min_eigenvalue(m: &Operator, shift: f64) -> bool {
    let n = m.nrows();
    // Column-major lower factor of the Hermitian part plus the shift.
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = m[(j, j)].re + shift;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let ljj = d.sqrt();
        l[j * n + j] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    true
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
///
/// Uses the complex Schur form `m = Q T Q†` and back substitution on the
/// triangular factor. Eigenvectors are normalised to unit 2-norm. For defective
/// matrices the returned vectors of a coalesced pair are (nearly) parallel.
pub fn eig(m: &Operator) -> (Vec<Complex64>, Operator) {
    let n = m.nrows();
    let (q, t) = Schur::new(m.clone()).unpack();
    let lambdas: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let scale = t.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    let tiny = scale * f64::EPSILON;

    let mut y = Operator::zeros(n, n);
    for k in 0..n {
        let lk = lambdas[k];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = ZERO;
            for l in (j + 1)..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            let mut d = t[(j, j)] - lk;
            if d.norm() < tiny {
                d = Complex64::new(tiny, 0.0);
            }
            y[(j, k)] = -s / d;
        }
        // Rescale column to avoid overflow in long back-substitution chains.
        let nrm = y.column(k).norm();
        if nrm > 0.0 {
            let inv = Complex64::new(1.0 / nrm, 0.0);
            for r in 0..=k {
                y[(r, k)] *= inv;
            }
        }
    }
    let mut v = q * y;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            let inv = Complex64::new(1.0 / nrm, 0.0);
            for r in 0..n {
                v[(r, k)] *= inv;
            }
        }
    }
    (lambdas, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sqrt_squares_back() {
        let m = Operator::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let s = psd_sqrt(&m);
        let back = &s * &s;
        assert!((back - m).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn general_eig_residuals() {
        let m = Operator::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.2),
                c(0.3, -1.0),
                c(0.0, 0.5),
                c(-0.7, 0.0),
                c(0.1, -0.4),
                c(2.0, 0.0),
                c(0.25, 0.25),
                c(0.0, 0.0),
                c(-1.0, -0.3),
            ],
        );
        let (vals, vecs) = eig(&m);
        for k in 0..3 {
            let r = &m * vecs.column(k) - vecs.column(k) * vals[k];
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn cholesky_shift_detects_negative_eigenvalue() {
        let m = Operator::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1e-4, 0.0)]);
        assert!(!exceeds_min_eigenvalue(&m, 1e-6));
        assert!(exceeds_min_eigenvalue(&m, 1e-3));
    }
}
