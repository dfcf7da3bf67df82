//! State diagnostics: reduced states, entropies, distances, correlations,
//! energies and the trace-distance backflow measure.

use num_complex::Complex64;

use crate::algebra::{build_interaction_hamiltonian, lift_pauli, site_mask, BathTopology, Operator, PauliAxis, ZERO};
use crate::error::{Error, Result};
use crate::lindblad::{dissipator, CollapseOperator, TimeGrid};
use crate::linalg;
use crate::states::DensityMatrix;

/// Eigenvalues below this are treated as zero in entropies.
pub const ENTROPY_CLAMP: f64 = 1e-14;

fn check_n_qubits(rho: &DensityMatrix, n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > 16 || rho.dim() != 1usize << n_qubits {
        return Err(Error::domain(format!("state of dimension {} is not a {n_qubits}-qubit state", rho.dim())));
    }
    Ok(())
}

fn sorted_subset(set: &[usize], n_qubits: usize) -> Result<Vec<usize>> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    if let Some(&bad) = s.iter().find(|&&k| k >= n_qubits) {
        return Err(Error::domain(format!("node {bad} out of range for {n_qubits} qubits")));
    }
    Ok(s)
}

/// Reduced state on the `keep` nodes (listed in ascending node order in the
/// output tensor factorisation).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize], n_qubits: usize) -> Result<DensityMatrix> {
    check_n_qubits(rho, n_qubits)?;
    if keep.is_empty() {
        return Err(Error::domain("partial trace needs at least one kept node"));
    }
    let keep = sorted_subset(keep, n_qubits)?;
    let traced: Vec<usize> = (0..n_qubits).filter(|k| !keep.contains(k)).collect();
    if traced.is_empty() {
        return Ok(rho.clone());
    }
    let scatter = |bits: usize, nodes: &[usize]| -> usize {
        nodes
            .iter()
            .enumerate()
            .filter(|(pos, _)| bits >> (nodes.len() - 1 - pos) & 1 == 1)
            .fold(0, |acc, (_, &node)| acc | site_mask(node, n_qubits))
    };
    let dk = 1usize << keep.len();
    let dt = 1usize << traced.len();
    let keep_idx: Vec<usize> = (0..dk).map(|b| scatter(b, &keep)).collect();
    let traced_idx: Vec<usize> = (0..dt).map(|b| scatter(b, &traced)).collect();
    let m = rho.matrix();
    let mut out = Operator::zeros(dk, dk);
    for (r, &kr) in keep_idx.iter().enumerate() {
        for (c, &kc) in keep_idx.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_idx {
                acc += m[(kr | t, kc | t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(DensityMatrix::from_raw(out))
}

/// `−Σ λ ln λ` in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    linalg::hermitian_eigenvalues(rho.matrix())
        .into_iter()
        .filter(|&l| l > ENTROPY_CLAMP)
        .map(|l| -l * l.ln())
        .sum()
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `[Tr √(√σ ρ √σ)]²`, clamped to `[0, 1]`.
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho, sigma)?;
    for (name, s) in [("rho", rho), ("sigma", sigma)] {
        if !linalg::exceeds_min_eigenvalue(s.matrix(), crate::states::POSITIVITY_TOL) {
            return Err(Error::domain(format!("{name} is not positive semidefinite")));
        }
    }
    let rs = linalg::psd_sqrt(sigma.matrix());
    let inner = &rs * rho.matrix() * &rs;
    let vals = linalg::hermitian_eigenvalues(&inner);
    let cut = vals.last().copied().unwrap_or(0.0).max(0.0) * linalg::PSD_CLAMP;
    let tr: f64 = vals.into_iter().filter(|&l| l > cut).map(f64::sqrt).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// `½ Σ |λ(ρ1 − ρ2)|`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho1, rho2)?;
    Ok(trace_norm_hermitian(&(rho1.matrix() - rho2.matrix())) * 0.5)
}

fn trace_norm_hermitian(m: &Operator) -> f64 {
    linalg::hermitian_eigenvalues(m).into_iter().map(f64::abs).sum()
}

fn proper_partition(partition_a: &[usize], n_qubits: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let a = sorted_subset(partition_a, n_qubits)?;
    if a.is_empty() || a.len() == n_qubits {
        return Err(Error::domain("partition must be a nonempty proper subset of the nodes"));
    }
    let b = (0..n_qubits).filter(|k| !a.contains(k)).collect();
    Ok((a, b))
}

/// Partial transpose over the nodes in `partition_a`.
pub fn partial_transpose(rho: &DensityMatrix, partition_a: &[usize], n_qubits: usize) -> Result<Operator> {
    check_n_qubits(rho, n_qubits)?;
    let a = sorted_subset(partition_a, n_qubits)?;
    let mask = a.iter().fold(0, |acc, &k| acc | site_mask(k, n_qubits));
    let m = rho.matrix();
    let d = rho.dim();
    Ok(Operator::from_fn(d, d, |r, c| m[((r & !mask) | (c & mask), (c & !mask) | (r & mask))]))
}

/// `(‖ρ^{T_A}‖₁ − 1)/2`.
pub fn negativity(rho: &DensityMatrix, partition_a: &[usize], n_qubits: usize) -> Result<f64> {
    check_n_qubits(rho, n_qubits)?;
    proper_partition(partition_a, n_qubits)?;
    let pt = partial_transpose(rho, partition_a, n_qubits)?;
    Ok(((trace_norm_hermitian(&pt) - 1.0) * 0.5).max(0.0))
}

/// `S(A) + S(B) − S(AB)`.
pub fn mutual_information(rho: &DensityMatrix, partition_a: &[usize], n_qubits: usize) -> Result<f64> {
    check_n_qubits(rho, n_qubits)?;
    let (a, b) = proper_partition(partition_a, n_qubits)?;
    let sa = von_neumann_entropy(&partial_trace(rho, &a, n_qubits)?);
    let sb = von_neumann_entropy(&partial_trace(rho, &b, n_qubits)?);
    Ok(sa + sb - von_neumann_entropy(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEnergies {
    /// `Tr[ρ (ω_i/2) σz_i]` per node.
    pub per_node: Vec<f64>,
    /// Sum of the local terms.
    pub total: f64,
    /// `Tr[ρ H_int]`, kept separate from the local sum.
    pub interaction: f64,
}

pub fn local_energies(rho: &DensityMatrix, topo: &BathTopology) -> Result<LocalEnergies> {
    topo.validate()?;
    check_n_qubits(rho, topo.n_qubits)?;
    let n = topo.n_qubits;
    let m = rho.matrix();
    let per_node: Vec<f64> = (0..n)
        .map(|site| {
            let mask = site_mask(site, n);
            let z: f64 = (0..rho.dim()).map(|k| if k & mask == 0 { m[(k, k)].re } else { -m[(k, k)].re }).sum();
            0.5 * topo.omega[site] * z
        })
        .collect();
    let h_int = build_interaction_hamiltonian(topo)?;
    let interaction = rho.expectation(&h_int).re;
    Ok(LocalEnergies { total: per_node.iter().sum(), per_node, interaction })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyFlows {
    /// `Tr[H (−i[H, ρ])]`.
    pub coherent: f64,
    /// `Tr[H 𝒟(ρ)]`.
    pub dissipative: f64,
}

impl EnergyFlows {
    pub fn total(&self) -> f64 {
        self.coherent + self.dissipative
    }
}

/// Energy flow rates of `target` under the generator with Hamiltonian `h`.
/// Pass `target = h` for the global balance, or a local Hamiltonian for a
/// per-subsystem flow.
pub fn energy_flows_for(rho: &DensityMatrix, h: &Operator, target: &Operator, collapse: &[CollapseOperator]) -> Result<EnergyFlows> {
    let d = rho.dim();
    for m in [h, target] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::domain("operator dimension does not match the state"));
        }
    }
    let r = rho.matrix();
    let unitary = (h * r - r * h) * Complex64::new(0.0, -1.0);
    let coherent = (target * unitary).trace().re;
    let dissipative = if collapse.is_empty() { 0.0 } else { (target * dissipator(collapse, r)).trace().re };
    Ok(EnergyFlows { coherent, dissipative })
}

pub fn energy_flows(rho: &DensityMatrix, h: &Operator, collapse: &[CollapseOperator]) -> Result<EnergyFlows> {
    energy_flows_for(rho, h, h, collapse)
}

/// Per-node flows of the local energies `(ω_i/2) σz_i`.
pub fn local_energy_flows(rho: &DensityMatrix, topo: &BathTopology, h: &Operator, collapse: &[CollapseOperator]) -> Result<Vec<EnergyFlows>> {
    (0..topo.n_qubits)
        .map(|site| {
            let hi = lift_pauli(PauliAxis::Z, site, topo.n_qubits)? * Complex64::new(0.5 * topo.omega[site], 0.0);
            energy_flows_for(rho, h, &hi, collapse)
        })
        .collect()
}

/// Information backflow extracted from a trace-distance series.
#[derive(Debug, Clone, PartialEq)]
pub struct BackflowResult {
    /// Integrated positive growth of the smoothed distance.
    pub total: f64,
    /// `total` divided by the run duration.
    pub rate: f64,
    /// Maximal intervals on which the derivative exceeded the threshold.
    pub positive_intervals: Vec<(f64, f64)>,
    pub threshold: f64,
    pub window: usize,
}

/// Window length used for smoothing `n` samples: `max(5, round(n/200))`, odd.
pub fn backflow_window(n: usize) -> usize {
    let w = ((n as f64 / 200.0).round() as usize).max(5);
    if w % 2 == 0 {
        w + 1
    } else {
        w
    }
}

/// Centered moving average; near the ends the window shrinks symmetrically.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    let mut prefix = vec![0.0; n + 1];
    for (k, v) in x.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v;
    }
    (0..n)
        .map(|k| {
            let h = half.min(k).min(n - 1 - k);
            let (a, b) = (k - h, k + h + 1);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Central differences in the interior, one-sided at the ends.
pub fn grid_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (x[1] - x[0]) / dt
            } else if k == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[k + 1] - x[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Integrated positive part of `dD/dt` above a tail-noise threshold.
pub fn blp_backflow(d: &[f64], grid: &TimeGrid) -> Result<BackflowResult> {
    let n = d.len();
    if n != grid.n_points {
        return Err(Error::domain(format!("series has {n} points, grid has {}", grid.n_points)));
    }
    let window = backflow_window(n);
    if n < window {
        return Err(Error::domain(format!("series of length {n} is shorter than the smoothing window {window}")));
    }
    let dt = grid.dt();
    let smooth = moving_average(d, window);
    let deriv = grid_derivative(&smooth, dt);
    let tail = ((n as f64) * 0.1).ceil() as usize;
    let threshold = 3.0 * median(deriv[n - tail.max(1)..].iter().map(|v| v.abs()).collect());

    let g: Vec<f64> = deriv.iter().map(|&v| if v > threshold { v } else { 0.0 }).collect();
    let total: f64 = g.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();

    let mut positive_intervals = Vec::new();
    let mut start: Option<usize> = None;
    for k in 0..=n {
        let on = k < n && g[k] > 0.0;
        match (on, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                positive_intervals.push((grid.time(s), grid.time(k - 1)));
                start = None;
            }
            _ => {}
        }
    }
    Ok(BackflowResult { total, rate: total / grid.span(), positive_intervals, threshold, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{kron, Edge};
    use crate::states::{basis_state, plus_state, thermal_qubit_state};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bell() -> DensityMatrix {
        let s = 0.5f64.sqrt();
        DensityMatrix::pure(&[c(s), c(0.0), c(0.0), c(s)]).unwrap()
    }

    fn random_state(dim: usize, rank: usize, seeds: &[f64]) -> DensityMatrix {
        let mut it = seeds.iter().cycle();
        let a = Operator::from_fn(dim, rank, |_, _| Complex64::new(*it.next().unwrap(), *it.next().unwrap()));
        let m = &a * a.adjoint() + Operator::identity(dim, dim) * c(1e-3);
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    }

    #[test]
    fn partial_trace_cases() {
        let a = thermal_qubit_state(1.0, 1.0).unwrap();
        let b = plus_state();
        let ab = a.tensor(&b);
        let ra = partial_trace(&ab, &[0], 2).unwrap();
        let rb = partial_trace(&ab, &[1], 2).unwrap();
        assert!((ra.matrix() - a.matrix()).iter().all(|z| z.norm() < 1e-12));
        assert!((rb.matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-12));
        for k in [0, 1] {
            let r = partial_trace(&bell(), &[k], 2).unwrap();
            assert!((r.matrix() - DensityMatrix::maximally_mixed(2).matrix()).iter().all(|z| z.norm() < 1e-12));
        }
        assert_eq!(partial_trace(&ab, &[1, 0], 2).unwrap(), ab);
        assert!(partial_trace(&ab, &[], 2).is_err());
        assert!(partial_trace(&ab, &[2], 2).is_err());
    }

    #[test]
    fn partial_trace_keeps_non_adjacent_nodes_in_order() {
        let s0 = basis_state(0);
        let s1 = plus_state();
        let s2 = basis_state(1);
        let full = s0.tensor(&s1).tensor(&s2);
        let r = partial_trace(&full, &[2, 0], 3).unwrap();
        assert_eq!(r, s0.tensor(&s2));
    }

    #[test]
    fn entropy_cases() {
        assert_abs_diff_eq!(von_neumann_entropy(&plus_state()), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(von_neumann_entropy(&DensityMatrix::maximally_mixed(2)), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(von_neumann_entropy(&thermal_qubit_state(1.0, 1.0).unwrap()), 0.582, epsilon = 5e-4);
    }

    #[test]
    fn fidelity_and_distance_cases() {
        let z0 = basis_state(0);
        let z1 = basis_state(1);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_abs_diff_eq!(uhlmann_fidelity(&z0, &z0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(uhlmann_fidelity(&z0, &z1).unwrap(), 0.0, epsilon = 1e-12);
        // ⟨ψ|σ|ψ⟩ for a pure argument.
        assert_abs_diff_eq!(uhlmann_fidelity(&z0, &mixed).unwrap(), mixed.matrix()[(0, 0)].re, epsilon = 1e-12);
        assert_abs_diff_eq!(uhlmann_fidelity(&plus_state(), &thermal_qubit_state(1.0, 1.0).unwrap()).unwrap(), 0.5, epsilon = 1e-12);

        assert_abs_diff_eq!(trace_distance(&z0, &z0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace_distance(&z0, &z1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&z0, &mixed).unwrap(), 0.5, epsilon = 1e-12);
        assert!(trace_distance(&z0, &DensityMatrix::maximally_mixed(4)).is_err());
    }

    #[test]
    fn correlation_cases() {
        let prod = thermal_qubit_state(1.0, 1.0).unwrap().tensor(&plus_state());
        assert_abs_diff_eq!(negativity(&prod, &[0], 2).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(negativity(&bell(), &[0], 2).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mutual_information(&prod, &[0], 2).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mutual_information(&bell(), &[1], 2).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-10);
        let classical = DensityMatrix::diagonal(&[0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(mutual_information(&classical, &[0], 2).unwrap(), 2f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(negativity(&classical, &[0], 2).unwrap(), 0.0, epsilon = 1e-12);
        assert!(negativity(&bell(), &[], 2).is_err());
        assert!(negativity(&bell(), &[0, 1], 2).is_err());
        assert!(mutual_information(&bell(), &[0, 1], 2).is_err());
    }

    #[test]
    fn local_energy_cases() {
        let topo = BathTopology::uniform(3, 1.0, 1.0);
        let excited = basis_state(0).tensor(&basis_state(0)).tensor(&basis_state(0));
        let e = local_energies(&excited, &topo).unwrap();
        assert_eq!(e.per_node, vec![0.5; 3]);
        assert_abs_diff_eq!(e.total, 1.5);
        let mixed = local_energies(&DensityMatrix::maximally_mixed(8), &topo).unwrap();
        assert!(mixed.per_node.iter().all(|v| v.abs() < 1e-15));

        let one = BathTopology::uniform(1, 1.0, 1.0);
        let th = thermal_qubit_state(1.0, 1.0).unwrap();
        let p = th.matrix();
        let e1 = local_energies(&th, &one).unwrap();
        assert_abs_diff_eq!(e1.total, 0.5 * (p[(0, 0)].re - p[(1, 1)].re), epsilon = 1e-15);
        assert_abs_diff_eq!(e1.total, -0.2311, epsilon = 5e-5);

        let mut coupled = BathTopology::uniform(2, 1.0, 1.0);
        coupled.edges = vec![Edge::new(0, 1, 0.3)];
        let e = local_energies(&bell(), &coupled).unwrap();
        // ⟨XX + YY + ZZ⟩ = 1 − 1 + 1 on (|00⟩ + |11⟩)/√2.
        assert_abs_diff_eq!(e.interaction, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn flow_cases() {
        let mut topo = BathTopology::uniform(2, 1.0, 1.0);
        topo.edges = vec![Edge::new(0, 1, 0.2)];
        topo.thermal = vec![(1, 0.1)];
        let h = crate::algebra::build_total_hamiltonian(&topo).unwrap();
        let ops = crate::lindblad::build_collapse_operators(&topo).unwrap();
        let rho = plus_state().tensor(&basis_state(0));
        let closed = energy_flows(&rho, &h, &[]).unwrap();
        assert_eq!(closed.dissipative, 0.0);
        assert_abs_diff_eq!(closed.coherent, 0.0, epsilon = 1e-14);
        let open = energy_flows(&rho, &h, &ops).unwrap();
        assert_abs_diff_eq!(open.coherent, 0.0, epsilon = 1e-14);
        assert!(open.dissipative < 0.0);
        let local = local_energy_flows(&rho, &topo, &h, &ops).unwrap();
        assert_eq!(local.len(), 2);
        // An excited bath qubit loses energy to its reservoir.
        assert!(local[1].dissipative < 0.0);
    }

    #[test]
    fn backflow_monotone_series_is_zero() {
        let grid = TimeGrid::new(0.0, 60.0, 3001).unwrap();
        let d: Vec<f64> = grid.times().iter().map(|t| (-t).exp()).collect();
        let r = blp_backflow(&d, &grid).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.positive_intervals.is_empty());
        assert_eq!(r.rate, 0.0);
    }

    #[test]
    fn backflow_piecewise_series() {
        // Fall 1 → 0.3 on [0, 0.5], linear rise 0.3 → 0.5 on [0.5, 4.5], then a
        // relaxation 0.5 → 0.1 whose tail slope sets a negligible threshold.
        let grid = TimeGrid::new(0.0, 14.5, 29001).unwrap();
        let d: Vec<f64> = grid
            .times()
            .iter()
            .map(|&t| {
                if t <= 0.5 {
                    1.0 - 1.4 * t
                } else if t <= 4.5 {
                    0.3 + 0.05 * (t - 0.5)
                } else {
                    0.1 + 0.4 * (-(t - 4.5)).exp()
                }
            })
            .collect();
        let r = blp_backflow(&d, &grid).unwrap();
        assert!((r.total - 0.2).abs() < 0.02 * 0.2, "total {}", r.total);
        assert_abs_diff_eq!(r.rate, r.total / 14.5, epsilon = 1e-12);
        assert_eq!(r.positive_intervals.len(), 1);
        let (a, b) = r.positive_intervals[0];
        assert!((a - 0.5).abs() < 0.1 && (b - 4.5).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn backflow_rejects_short_series() {
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(blp_backflow(&[1.0, 0.9, 0.8, 0.7], &grid).is_err());
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(blp_backflow(&[1.0; 9], &grid).is_err());
    }

    #[test]
    fn backflow_refinement_invariance() {
        let series = |n: usize| {
            let grid = TimeGrid::new(0.0, 40.0, n).unwrap();
            let d: Vec<f64> = grid.times().iter().map(|t| (-0.1 * t).exp() * (0.6 + 0.4 * (0.8 * t).cos().powi(2))).collect();
            blp_backflow(&d, &grid).unwrap().total
        };
        let coarse = series(4000);
        let fine = series(8000);
        assert!(coarse > 0.0);
        assert!(((fine - coarse) / coarse).abs() < 0.01, "{coarse} vs {fine}");
    }

    #[test]
    fn window_rule() {
        assert_eq!(backflow_window(100), 5);
        assert_eq!(backflow_window(5000), 25);
        assert_eq!(backflow_window(2000), 11);
        assert_eq!(backflow_window(1800), 9);
    }

    #[test]
    fn kron_marginals_from_three_qubits() {
        let a = thermal_qubit_state(2.0, 1.0).unwrap();
        let full = DensityMatrix::new(kron(&kron(a.matrix(), bell().matrix()), &Operator::identity(1, 1))).unwrap();
        let r = partial_trace(&full, &[1, 2], 3).unwrap();
        assert!((r.matrix() - bell().matrix()).iter().all(|z| z.norm() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn fuchs_van_de_graaf(v in proptest::collection::vec(-1.0f64..1.0, 32), w in proptest::collection::vec(-1.0f64..1.0, 32), r1 in 1usize..5, r2 in 1usize..5) {
            let a = random_state(4, r1, &v);
            let b = random_state(4, r2, &w);
            let f = uhlmann_fidelity(&a, &b).unwrap();
            let f2 = uhlmann_fidelity(&b, &a).unwrap();
            let d = trace_distance(&a, &b).unwrap();
            prop_assert!((f - f2).abs() < 1e-10);
            prop_assert!(1.0 - f.sqrt() <= d + 1e-9);
            prop_assert!(d <= (1.0 - f).max(0.0).sqrt() + 1e-9);
        }

        #[test]
        fn correlations_are_nonnegative(v in proptest::collection::vec(-1.0f64..1.0, 128), rank in 1usize..8, cut in 0usize..3) {
            let rho = random_state(8, rank, &v);
            let part = [cut];
            let mi = mutual_information(&rho, &part, 3).unwrap();
            prop_assert!(mi >= -1e-9);
            let n1 = negativity(&rho, &part, 3).unwrap();
            let others: Vec<usize> = (0..3).filter(|&k| k != cut).collect();
            let n2 = negativity(&rho, &others, 3).unwrap();
            prop_assert!(n1 >= 0.0);
            prop_assert!((n1 - n2).abs() < 1e-10);
            prop_assert!(von_neumann_entropy(&rho) <= 3.0 * 2f64.ln() + 1e-12);
            let red = partial_trace(&rho, &others, 3).unwrap();
            prop_assert!((red.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(crate::algebra::hermiticity_error(red.matrix()) < 1e-12);
        }
    }
}
