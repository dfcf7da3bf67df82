//! Pauli operators on an `N`-qubit register and Heisenberg-network Hamiltonians.
//!
//! Basis convention: `|0>` is the `+1` eigenstate of `σz` and tensor factor 0 is the
//! most significant bit of a basis index. Under `H_q = (ω/2) σz` the state `|0>` is
//! therefore the excited level.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex operator on a qubit register.
pub type Operator = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    /// The 2×2 matrix, row-major.
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            PauliAxis::X => [[ZERO, ONE], [ONE, ZERO]],
            PauliAxis::Y => [[ZERO, -I], [I, ZERO]],
            PauliAxis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PauliAxis::X => "x",
            PauliAxis::Y => "y",
            PauliAxis::Z => "z",
        }
    }
}

/// `σ⁻ = |1><0|`: lowers the excited `|0>` level.
pub fn sigma_minus() -> [[Complex64; 2]; 2] {
    [[ZERO, ZERO], [ONE, ZERO]]
}

/// `σ⁺ = |0><1|`.
pub fn sigma_plus() -> [[Complex64; 2]; 2] {
    [[ZERO, ONE], [ZERO, ZERO]]
}

/// Bit mask selecting `site` inside a basis index of an `n_qubits` register.
#[inline]
pub(crate) fn site_mask(site: usize, n_qubits: usize) -> usize {
    1 << (n_qubits - 1 - site)
}

/// Embeds a single-qubit matrix at `site`: `I^{⊗site} ⊗ m ⊗ I^{⊗(n-site-1)}`.
pub fn lift_single(m: &[[Complex64; 2]; 2], site: usize, n_qubits: usize) -> Result<Operator> {
    if n_qubits == 0 || site >= n_qubits {
        return Err(Error::domain(format!(
            "site {site} out of range for a {n_qubits}-qubit register"
        )));
    }
    let dim = 1usize << n_qubits;
    let mask = site_mask(site, n_qubits);
    let mut out = Operator::zeros(dim, dim);
    for r in 0..dim {
        let rb = usize::from(r & mask != 0);
        for cb in 0..2 {
            let v = m[rb][cb];
            if v != ZERO {
                let c = if cb == 1 { r | mask } else { r & !mask };
                out[(r, c)] = v;
            }
        }
    }
    Ok(out)
}

/// `σ_axis` acting on `site` of an `n_qubits` register.
pub fn lift_pauli(axis: PauliAxis, site: usize, n_qubits: usize) -> Result<Operator> {
    lift_single(&axis.matrix(), site, n_qubits)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Operator::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

/// Largest entry modulus of `m - m†`.
pub fn hermiticity_error(m: &Operator) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &Operator) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Per-axis exchange constants of one edge: `Jx σxσx + Jy σyσy + Jz σzσz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Coupling {
    pub fn isotropic(j: f64) -> Self {
        Coupling { x: j, y: j, z: j }
    }

    pub fn anisotropic(x: f64, y: f64, z: f64) -> Self {
        Coupling { x, y, z }
    }

    pub fn get(&self, axis: PauliAxis) -> f64 {
        match axis {
            PauliAxis::X => self.x,
            PauliAxis::Y => self.y,
            PauliAxis::Z => self.z,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.x == self.y && self.y == self.z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub coupling: Coupling,
}

impl Edge {
    pub fn new(i: usize, j: usize, j_value: f64) -> Self {
        Edge { i, j, coupling: Coupling::isotropic(j_value) }
    }
}

/// Qubit network: on-site frequencies, exchange edges and the dissipators attached to
/// individual nodes. All thermal channels share one inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct BathTopology {
    pub n_qubits: usize,
    pub system_index: usize,
    pub omega: Vec<f64>,
    pub edges: Vec<Edge>,
    /// `(site, γ)` pure-dephasing channels.
    pub dephasing: Vec<(usize, f64)>,
    /// `(site, γ)` thermal emission/absorption channel pairs.
    pub thermal: Vec<(usize, f64)>,
    pub beta: f64,
}

impl BathTopology {
    /// `n_qubits` uncoupled nodes at frequency `omega`, no dissipation.
    pub fn uniform(n_qubits: usize, omega: f64, beta: f64) -> Self {
        BathTopology {
            n_qubits,
            system_index: 0,
            omega: vec![omega; n_qubits],
            edges: Vec::new(),
            dephasing: Vec::new(),
            thermal: Vec::new(),
            beta,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn bath_nodes(&self) -> Vec<usize> {
        (0..self.n_qubits).filter(|&i| i != self.system_index).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::validation("n_qubits must be at least 1"));
        }
        if self.n_qubits > 10 {
            return Err(Error::validation(format!(
                "n_qubits = {} exceeds the dense-matrix limit of 10",
                self.n_qubits
            )));
        }
        let in_range = |id: usize, what: &str| -> Result<()> {
            if id >= self.n_qubits {
                Err(Error::validation(format!(
                    "{what} node id {id} outside [0, {})",
                    self.n_qubits
                )))
            } else {
                Ok(())
            }
        };
        in_range(self.system_index, "system_index")?;
        if self.omega.len() != self.n_qubits {
            return Err(Error::validation(format!(
                "omega has {} entries for {} qubits",
                self.omega.len(),
                self.n_qubits
            )));
        }
        for (i, &w) in self.omega.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::validation(format!("omega[{i}] = {w} must be positive")));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::validation(format!("beta = {} must be positive", self.beta)));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            in_range(e.i, "edge")?;
            in_range(e.j, "edge")?;
            if e.i == e.j {
                return Err(Error::validation(format!("edge ({}, {}) is a self-loop", e.i, e.j)));
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            if !seen.insert(key) {
                return Err(Error::validation(format!(
                    "duplicate edge between {} and {}",
                    key.0, key.1
                )));
            }
            for a in PauliAxis::ALL {
                if !e.coupling.get(a).is_finite() {
                    return Err(Error::validation(format!("edge ({}, {}) has a non-finite J", e.i, e.j)));
                }
            }
        }
        for (what, list) in [("dephasing gamma", &self.dephasing), ("thermal gamma", &self.thermal)] {
            for &(site, g) in list.iter() {
                in_range(site, what)?;
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::validation(format!("{what} at node {site} = {g} must be >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// `Σ_i (ω_i/2) σz^{(i)}`.
pub fn build_local_hamiltonian(topo: &BathTopology) -> Result<Operator> {
    topo.validate()?;
    let n = topo.n_qubits;
    let dim = topo.dim();
    let mut h = Operator::zeros(dim, dim);
    for r in 0..dim {
        let mut e = 0.0;
        for (site, &w) in topo.omega.iter().enumerate() {
            let s = if r & site_mask(site, n) == 0 { 1.0 } else { -1.0 };
            e += 0.5 * w * s;
        }
        h[(r, r)] = Complex64::new(e, 0.0);
    }
    Ok(h)
}

/// Term `σ_a^{(i)} σ_a^{(j)}` accumulated into `h` with weight `w`, built entrywise.
fn add_pair_term(h: &mut Operator, axis: PauliAxis, i: usize, j: usize, n: usize, w: f64) {
    let dim = 1usize << n;
    let (mi, mj) = (site_mask(i, n), site_mask(j, n));
    let p = axis.matrix();
    for r in 0..dim {
        let (ri, rj) = (usize::from(r & mi != 0), usize::from(r & mj != 0));
        for ci in 0..2 {
            let a = p[ri][ci];
            if a == ZERO {
                continue;
            }
            for cj in 0..2 {
                let b = p[rj][cj];
                if b == ZERO {
                    continue;
                }
                let mut c = r;
                c = if ci == 1 { c | mi } else { c & !mi };
                c = if cj == 1 { c | mj } else { c & !mj };
                h[(r, c)] += a * b * w;
            }
        }
    }
}

/// `Σ_edges Σ_α J_α σ_α^{(i)} σ_α^{(j)}`.
pub fn build_interaction_hamiltonian(topo: &BathTopology) -> Result<Operator> {
    topo.validate()?;
    let n = topo.n_qubits;
    let dim = topo.dim();
    let mut h = Operator::zeros(dim, dim);
    for e in &topo.edges {
        for axis in PauliAxis::ALL {
            let w = e.coupling.get(axis);
            if w != 0.0 {
                add_pair_term(&mut h, axis, e.i, e.j, n, w);
            }
        }
    }
    Ok(h)
}

pub fn build_total_hamiltonian(topo: &BathTopology) -> Result<Operator> {
    Ok(build_local_hamiltonian(topo)? + build_interaction_hamiltonian(topo)?)
}

/// `Σ_i σz^{(i)}`.
pub fn total_sigma_z(n_qubits: usize) -> Result<Operator> {
    let dim = 1usize << n_qubits;
    let mut acc = Operator::zeros(dim, dim);
    for site in 0..n_qubits {
        acc += lift_pauli(PauliAxis::Z, site, n_qubits)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pauli2(axis: PauliAxis) -> Operator {
        let m = axis.matrix();
        Operator::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn lift_matches_kron_layout() {
        let id = Operator::identity(2, 2);
        let z0 = lift_pauli(PauliAxis::Z, 0, 2).unwrap();
        assert_eq!(z0, kron(&pauli2(PauliAxis::Z), &id));
        let x1 = lift_pauli(PauliAxis::X, 1, 2).unwrap();
        assert_eq!(x1, kron(&id, &pauli2(PauliAxis::X)));
        let y1 = lift_pauli(PauliAxis::Y, 1, 3).unwrap();
        assert_eq!(y1, kron(&kron(&id, &pauli2(PauliAxis::Y)), &id));
    }

    #[test]
    fn distinct_sites_commute() {
        let x0 = lift_pauli(PauliAxis::X, 0, 2).unwrap();
        let y1 = lift_pauli(PauliAxis::Y, 1, 2).unwrap();
        assert_eq!(max_abs(&commutator(&x0, &y1)), 0.0);
    }

    #[test]
    fn lift_rejects_bad_site() {
        assert!(matches!(lift_pauli(PauliAxis::X, 2, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn paulis_square_to_identity() {
        for n in 1..=6 {
            let id = Operator::identity(1 << n, 1 << n);
            for site in 0..n {
                for axis in PauliAxis::ALL {
                    let p = lift_pauli(axis, site, n).unwrap();
                    assert_eq!(&p * &p, id);
                }
            }
        }
    }

    #[test]
    fn single_qubit_local_hamiltonian() {
        let h = build_local_hamiltonian(&BathTopology::uniform(1, 1.0, 1.0)).unwrap();
        assert_eq!(h, Operator::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(-0.5)]));
    }

    #[test]
    fn three_qubit_local_spectrum() {
        // Enumerate (1/2)(s0 + s1 + s2) over all sign patterns.
        let h = build_local_hamiltonian(&BathTopology::uniform(3, 1.0, 1.0)).unwrap();
        let mut diag: Vec<f64> = (0..8).map(|k| h[(k, k)].re).collect();
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, vec![-1.5, -0.5, -0.5, -0.5, 0.5, 0.5, 0.5, 1.5]);
        assert_abs_diff_eq!(h.trace().norm(), 0.0);
    }

    #[test]
    fn two_qubit_heisenberg_elements() {
        let mut topo = BathTopology::uniform(2, 1.0, 1.0);
        topo.edges.push(Edge::new(0, 1, 1.0));
        let h = build_interaction_hamiltonian(&topo).unwrap();
        // XX+YY+ZZ = 2 SWAP - I
        assert_abs_diff_eq!(h[(1, 1)].re, -1.0);
        assert_abs_diff_eq!(h[(1, 2)].re, 2.0);
        assert_abs_diff_eq!(h[(0, 0)].re, 1.0);
        assert_abs_diff_eq!(h[(3, 3)].re, 1.0);
        assert_abs_diff_eq!(h.trace().norm(), 0.0);

        topo.edges[0].coupling = Coupling::isotropic(0.0);
        assert_eq!(max_abs(&build_interaction_hamiltonian(&topo).unwrap()), 0.0);
    }

    #[test]
    fn interaction_matches_product_of_lifts() {
        let mut topo = BathTopology::uniform(3, 1.0, 1.0);
        topo.edges.push(Edge { i: 0, j: 2, coupling: Coupling::anisotropic(0.3, -0.2, 0.7) });
        let h = build_interaction_hamiltonian(&topo).unwrap();
        let mut expect = Operator::zeros(8, 8);
        for axis in PauliAxis::ALL {
            let a = lift_pauli(axis, 0, 3).unwrap();
            let b = lift_pauli(axis, 2, 3).unwrap();
            expect += (&a * &b) * c(topo.edges[0].coupling.get(axis));
        }
        assert!(max_abs(&(h - expect)) < 1e-15);
    }

    #[test]
    fn triangle_conserves_magnetization() {
        let mut topo = BathTopology::uniform(3, 1.0, 1.0);
        topo.edges = vec![Edge::new(0, 1, 0.2), Edge::new(0, 2, 0.2), Edge::new(1, 2, 0.2)];
        let h = build_total_hamiltonian(&topo).unwrap();
        let sz = total_sigma_z(3).unwrap();
        assert!(max_abs(&commutator(&h, &sz)) < 1e-12);
        assert!(hermiticity_error(&h) < 1e-12);
    }

    #[test]
    fn validation_catches_bad_topologies() {
        let mut topo = BathTopology::uniform(2, 1.0, 1.0);
        topo.edges = vec![Edge::new(0, 1, 0.1), Edge::new(1, 0, 0.1)];
        assert!(topo.validate().is_err());
        topo.edges = vec![Edge::new(1, 1, 0.1)];
        assert!(topo.validate().is_err());
        topo.edges.clear();
        topo.thermal.push((1, -0.1));
        assert!(topo.validate().is_err());
        topo.thermal.clear();
        topo.omega[0] = 0.0;
        assert!(topo.validate().is_err());
    }
}
