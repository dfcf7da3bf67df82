//! Initial system and bath states.

use num_complex::Complex64;

use crate::algebra::{kron, BathTopology, Operator};
use crate::error::{Error, Result};
use crate::linalg;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Wraps `m` after checking hermiticity, unit trace and positivity.
    pub fn new(m: Operator) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::domain("density matrix must be square and non-empty"));
        }
        let herm = crate::algebra::hermiticity_error(&m);
        if herm > HERMITICITY_TOL {
            return Err(Error::domain(format!("matrix is not Hermitian (max |ρ-ρ†| = {herm:.3e})")));
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::domain(format!("trace {tr} differs from 1")));
        }
        if !linalg::exceeds_min_eigenvalue(&m, POSITIVITY_TOL) {
            return Err(Error::domain("matrix has an eigenvalue below -1e-8"));
        }
        Ok(DensityMatrix(m))
    }

    /// Wraps `m` without checks. Callers guarantee the invariants.
    pub(crate) fn from_raw(m: Operator) -> Self {
        DensityMatrix(m)
    }

    /// `|ψ><ψ|` for a (not necessarily normalised) state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::domain("zero state vector"));
        }
        let n = psi.len();
        let m = Operator::from_fn(n, n, |r, c| psi[r] * psi[c].conj() / norm2);
        Ok(DensityMatrix(m))
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(pops: &[f64]) -> Result<Self> {
        let n = pops.len();
        let m = Operator::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(pops[r], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        DensityMatrix::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(Operator::identity(dim, dim) / Complex64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    pub fn expectation(&self, op: &Operator) -> Complex64 {
        (&self.0 * op).trace()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(kron(&self.0, &other.0))
    }
}

/// `|+><+|`.
pub fn plus_state() -> DensityMatrix {
    let h = Complex64::new(0.5, 0.0);
    DensityMatrix(Operator::from_element(2, 2, h))
}

/// Computational basis state `|k><k|` of a single qubit (`k` = 0 is excited).
pub fn basis_state(k: usize) -> DensityMatrix {
    let mut m = Operator::zeros(2, 2);
    m[(k.min(1), k.min(1))] = Complex64::new(1.0, 0.0);
    DensityMatrix(m)
}

/// Bose occupation `1/(e^{βω} - 1)`.
pub fn thermal_occupation(beta: f64, omega: f64) -> Result<f64> {
    let x = beta * omega;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(format!(
            "thermal occupation diverges for beta*omega = {x}"
        )));
    }
    Ok(1.0 / x.exp_m1())
}

/// Gibbs state of `(ω/2) σz`: `diag(e^{-βω/2}, e^{βω/2}) / (2 cosh(βω/2))`.
pub fn thermal_qubit_state(beta: f64, omega: f64) -> Result<DensityMatrix> {
    if !(beta >= 0.0 && omega > 0.0 && beta.is_finite() && omega.is_finite()) {
        return Err(Error::domain(format!("invalid thermal parameters beta={beta}, omega={omega}")));
    }
    // Populations written in terms of e^{-βω} to stay finite at large βω.
    let r = (-beta * omega).exp();
    let excited = r / (1.0 + r);
    let ground = 1.0 / (1.0 + r);
    let mut m = Operator::zeros(2, 2);
    m[(0, 0)] = Complex64::new(excited, 0.0);
    m[(1, 1)] = Complex64::new(ground, 0.0);
    Ok(DensityMatrix(m))
}

/// `ρ_sys ⊗ ρ_th(ω_1) ⊗ … `, with the system factor placed at `topo.system_index`
/// and each bath node thermal at its own on-site frequency.
pub fn initial_product_state(system_state: &DensityMatrix, topo: &BathTopology) -> Result<DensityMatrix> {
    topo.validate()?;
    if system_state.dim() != 2 {
        return Err(Error::domain(format!(
            "system state must be 2x2, got {}x{}",
            system_state.dim(),
            system_state.dim()
        )));
    }
    let mut acc: Option<Operator> = None;
    for node in 0..topo.n_qubits {
        let factor = if node == topo.system_index {
            system_state.matrix().clone()
        } else {
            thermal_qubit_state(topo.beta, topo.omega[node])?.into_matrix()
        };
        acc = Some(match acc {
            None => factor,
            Some(a) => kron(&a, &factor),
        });
    }
    Ok(DensityMatrix(acc.expect("n_qubits >= 1")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{partial_trace, von_neumann_entropy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn plus_state_is_pure() {
        let p = plus_state();
        assert!(p.matrix().iter().all(|z| *z == Complex64::new(0.5, 0.0)));
        assert_abs_diff_eq!(p.purity(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(von_neumann_entropy(&p), 0.0, epsilon = 1e-12);
        DensityMatrix::new(p.into_matrix()).unwrap();
    }

    #[test]
    fn occupation_values() {
        assert_abs_diff_eq!(thermal_occupation(1.0, 1.0).unwrap(), 0.582, epsilon = 5e-4);
        let e2 = (2.0f64).exp();
        assert_abs_diff_eq!(thermal_occupation(2.0, 1.0).unwrap(), 1.0 / (e2 - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(thermal_occupation(2.0, 1.0).unwrap(), 0.1565, epsilon = 5e-5);
        assert!(thermal_occupation(0.0, 1.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let n = thermal_occupation(k as f64, 1.0).unwrap();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-16);
    }

    #[test]
    fn thermal_state_values() {
        let t = thermal_qubit_state(1.0, 1.0).unwrap();
        let e = (0.5f64).exp();
        let z = e + 1.0 / e;
        assert_abs_diff_eq!(t.matrix()[(0, 0)].re, 1.0 / e / z, epsilon = 1e-15);
        assert_abs_diff_eq!(t.matrix()[(0, 0)].re, 0.2689, epsilon = 5e-5);
        assert_abs_diff_eq!(t.matrix()[(1, 1)].re, 0.7311, epsilon = 5e-5);
        assert_abs_diff_eq!(von_neumann_entropy(&t), 0.582, epsilon = 5e-4);
        let hot = thermal_qubit_state(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(hot.matrix()[(0, 0)].re, 0.5);
        for (b, w) in [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0), (0.3, 5.0)] {
            let t = thermal_qubit_state(b, w).unwrap();
            let ratio = t.matrix()[(0, 0)].re / t.matrix()[(1, 1)].re;
            assert_abs_diff_eq!(ratio, (-b * w as f64).exp(), epsilon = 1e-15);
            DensityMatrix::new(t.into_matrix()).unwrap();
        }
    }

    #[test]
    fn product_state_marginals_and_entropy() {
        let one = BathTopology::uniform(1, 1.0, 1.0);
        assert_eq!(initial_product_state(&plus_state(), &one).unwrap(), plus_state());

        let topo = BathTopology::uniform(3, 1.0, 1.0);
        let rho = initial_product_state(&plus_state(), &topo).unwrap();
        let sys = partial_trace(&rho, &[0], 3).unwrap();
        assert!((sys.matrix() - plus_state().matrix()).iter().all(|z| z.norm() < 1e-12));

        let six = BathTopology::uniform(6, 1.0, 1.0);
        let rho6 = initial_product_state(&plus_state(), &six).unwrap();
        let s1 = von_neumann_entropy(&thermal_qubit_state(1.0, 1.0).unwrap());
        assert_abs_diff_eq!(von_neumann_entropy(&rho6), 5.0 * s1, epsilon = 1e-9);
        assert_abs_diff_eq!(von_neumann_entropy(&rho6), 2.910, epsilon = 3e-3);
    }

    #[test]
    fn product_state_rejects_wrong_dimension() {
        let topo = BathTopology::uniform(2, 1.0, 1.0);
        let big = DensityMatrix::maximally_mixed(4);
        assert!(initial_product_state(&big, &topo).is_err());
    }
}
