//! Effective non-Hermitian Hamiltonian and exceptional-point indicators.

use num_complex::Complex64;

use crate::algebra::Operator;
use crate::error::{Error, Result};
use crate::lindblad::CollapseOperator;
use crate::linalg;

/// Overlaps `|<L|R>|` (unit vectors) below this are treated as coalesced.
pub const OVERLAP_FLOOR: f64 = 1e-12;
/// Petermann factor reported for a coalesced mode.
pub const PETERMANN_SENTINEL: f64 = 1e24;
/// Eigenvalues closer than this make the left/right pairing ambiguous.
pub const CLUSTER_TOL: f64 = 1e-10;

/// `H − (i/2) Σ_k L_k† L_k`.
pub fn effective_hamiltonian(h: &Operator, collapse: &[CollapseOperator]) -> Result<Operator> {
    if !h.is_square() {
        return Err(Error::domain("Hamiltonian must be square"));
    }
    let n = h.nrows();
    let mut out = h.clone();
    let half_i = Complex64::new(0.0, 0.5);
    for c in collapse {
        let l = &c.matrix;
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::domain(format!(
                "collapse operator ({} on {}) has the wrong dimension",
                c.spec.kind.label(),
                c.spec.site
            )));
        }
        out -= l.adjoint() * l * half_i;
    }
    Ok(out)
}

/// Eigenvalues with column-aligned right and left eigenvectors, both of unit norm.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<Complex64>,
    pub right_vectors: Operator,
    pub left_vectors: Operator,
    /// Modes whose eigenvalue has a neighbour within [`CLUSTER_TOL`].
    pub ambiguous: Vec<bool>,
}

/// Right eigenvectors of `m` and left eigenvectors from the eigenvectors of `m†`,
/// matched by pairing `λ_k` with the nearest `conj(μ_j)`.
pub fn eigensystem(m: &Operator) -> Result<EigenSystem> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::domain("matrix must be square and non-empty"));
    }
    let n = m.nrows();
    let (vals, right) = linalg::eig(m);
    let (adj_vals, adj_vecs) = linalg::eig(&m.adjoint());
    let mut used = vec![false; n];
    let mut left = Operator::zeros(n, n);
    for (k, lk) in vals.iter().enumerate() {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, mu) in adj_vals.iter().enumerate() {
            let d = (mu.conj() - lk).norm();
            if !used[j] && d < best_d {
                best = Some(j);
                best_d = d;
            }
        }
        let j = best.expect("as many adjoint eigenvalues as eigenvalues");
        used[j] = true;
        left.set_column(k, &adj_vecs.column(j));
    }
    let ambiguous = (0..n)
        .map(|k| (0..n).any(|j| j != k && (vals[j] - vals[k]).norm() < CLUSTER_TOL))
        .collect();
    Ok(EigenSystem { eigenvalues: vals, right_vectors: right, left_vectors: left, ambiguous })
}

/// Smallest distance between two eigenvalues in the complex plane.
///
/// For 2×2 input the spacing is `2|√(tr²/4 − det)|`, evaluated directly so that an
/// exact coalescence gives an exact zero.
pub fn deps(h_eff: &Operator) -> Result<f64> {
    if !h_eff.is_square() || h_eff.nrows() < 2 {
        return Err(Error::domain("eigenvalue spacing needs a square matrix of dimension at least 2"));
    }
    if h_eff.nrows() == 2 {
        let (a, b, c, d) = (h_eff[(0, 0)], h_eff[(0, 1)], h_eff[(1, 0)], h_eff[(1, 1)]);
        let half = (a - d) * 0.5;
        return Ok(2.0 * (half * half + b * c).sqrt().norm());
    }
    Ok(min_spacing(&linalg::eig(h_eff).0))
}

pub fn min_spacing(vals: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..vals.len() {
        for j in (i + 1)..vals.len() {
            best = best.min((vals[i] - vals[j]).norm());
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Petermann {
    /// `K_k = ‖L_k‖²‖R_k‖² / |<L_k|R_k>|²`, aligned with the eigenvalues.
    pub factors: Vec<f64>,
    pub k_max: f64,
    /// Modes reported as [`PETERMANN_SENTINEL`] because `|<L|R>|` vanished.
    pub near_ep: Vec<bool>,
    /// Modes whose left/right pairing was ambiguous.
    pub ambiguous: Vec<bool>,
    pub eigenvalues: Vec<Complex64>,
}

pub fn petermann_factors(h_eff: &Operator) -> Result<Petermann> {
    let es = eigensystem(h_eff)?;
    let n = es.eigenvalues.len();
    let mut factors = Vec::with_capacity(n);
    let mut near_ep = Vec::with_capacity(n);
    for k in 0..n {
        let r = es.right_vectors.column(k);
        let l = es.left_vectors.column(k);
        let (nr, nl) = (r.norm_squared(), l.norm_squared());
        let overlap = l.dotc(&r).norm();
        if overlap < OVERLAP_FLOOR * (nr * nl).sqrt() {
            factors.push(PETERMANN_SENTINEL);
            near_ep.push(true);
        } else {
            factors.push(nr * nl / (overlap * overlap));
            near_ep.push(false);
        }
    }
    let k_max = factors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Petermann { factors, k_max, near_ep, ambiguous: es.ambiguous, eigenvalues: es.eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{lift_single, sigma_minus, Operator};
    use crate::lindblad::{CollapseKind, CollapseSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ep_model(g: f64, gamma: f64) -> Operator {
        Operator::from_row_slice(2, 2, &[c(0.0, 0.0), c(g, 0.0), c(g, 0.0), c(0.0, -gamma)])
    }

    fn random_hermitian(n: usize, seed: u64) -> Operator {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Operator::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()) * c(0.5, 0.0)
    }

    #[test]
    fn no_collapse_is_identity_map() {
        let h = random_hermitian(4, 1);
        assert_eq!(effective_hamiltonian(&h, &[]).unwrap(), h);
    }

    #[test]
    fn single_qubit_emission() {
        let gamma: f64 = 0.3;
        let h = Operator::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        let l = lift_single(&sigma_minus(), 0, 1).unwrap() * c(gamma.sqrt(), 0.0);
        let op = CollapseOperator { spec: CollapseSpec { kind: CollapseKind::Emission, site: 0, rate: gamma }, matrix: l };
        let heff = effective_hamiltonian(&h, &[op]).unwrap();
        let mut expect = h.clone();
        expect[(0, 0)] -= c(0.0, gamma / 2.0);
        assert!((heff - expect).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn ep_model_spacing() {
        assert_eq!(deps(&ep_model(0.5, 1.0)).unwrap(), 0.0);
        assert!(deps(&ep_model(0.25, 0.5)).unwrap() < 1e-10);
        assert_abs_diff_eq!(deps(&ep_model(1.0, 1.0)).unwrap(), 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(deps(&ep_model(1.0, 1.0)).unwrap(), 1.732, epsilon = 5e-4);
        let (vals, _) = linalg::eig(&ep_model(1.0, 1.0));
        assert_abs_diff_eq!(min_spacing(&vals), 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_spacing_and_errors() {
        let m = Operator::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, -0.1), c(2.0, 0.0), c(1.0, -0.1)]));
        assert_eq!(deps(&m).unwrap(), 0.0);
        assert!(deps(&Operator::zeros(1, 1)).is_err());
    }

    #[test]
    fn petermann_grows_towards_ep() {
        let mut prev = 1.0;
        for g in [1.0, 0.8, 0.6, 0.55, 0.52, 0.51, 0.501] {
            let p = petermann_factors(&ep_model(g, 1.0)).unwrap();
            assert!(p.k_max > prev, "g={g} K={}", p.k_max);
            // Closed form for this model above the EP: K = g² / (g² − γ²/4).
            assert_abs_diff_eq!(p.k_max, g * g / (g * g - 0.25), epsilon = 1e-6 * p.k_max);
            prev = p.k_max;
        }
    }

    #[test]
    fn petermann_sentinel_at_ep() {
        let p = petermann_factors(&ep_model(0.5, 1.0)).unwrap();
        assert!(p.k_max > 1e6);
        let j = Operator::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let p = petermann_factors(&j).unwrap();
        assert!(p.near_ep.iter().any(|&f| f));
        assert_eq!(p.k_max, PETERMANN_SENTINEL);
    }

    #[test]
    fn eigensystem_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = Operator::from_fn(6, 6, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let es = eigensystem(&m).unwrap();
        let scale = m.norm();
        for k in 0..6 {
            let lam = es.eigenvalues[k];
            let r = es.right_vectors.column(k);
            let l = es.left_vectors.column(k);
            assert!((&m * r - r * lam).norm() <= 1e-8 * scale);
            assert!((l.adjoint() * &m - l.adjoint() * lam).norm() <= 1e-8 * scale);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn hermitian_petermann_is_one(seed in any::<u64>(), n in 2usize..7) {
            let h = random_hermitian(n, seed);
            let p = petermann_factors(&h).unwrap();
            prop_assert!((p.k_max - 1.0).abs() < 1e-9, "K_max = {}", p.k_max);
        }

        #[test]
        fn spacing_shift_invariant(seed in any::<u64>(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Operator::from_fn(4, 4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let shifted = &m + Operator::identity(4, 4) * c(re, im);
            let a = deps(&m).unwrap();
            let b = deps(&shifted).unwrap();
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
