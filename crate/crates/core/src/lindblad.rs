//! Collapse operators and fixed-step RK4 integration of the Lindblad master equation.
//!
//! The public interface takes dense operators. Internally the generator is stored
//! as compressed sparse rows (Pauli-network Hamiltonians and single-site jumps have
//! only a handful of entries per row), which keeps a six-qubit step cheap.

use num_complex::Complex64;

use crate::algebra::{lift_pauli, lift_single, sigma_minus, sigma_plus, BathTopology, Operator, PauliAxis, ZERO};
use crate::error::{Error, Result};
use crate::linalg;
use crate::states::{thermal_occupation, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseKind {
    Dephasing,
    Emission,
    Absorption,
}

impl CollapseKind {
    pub fn label(self) -> &'static str {
        match self {
            CollapseKind::Dephasing => "dephasing",
            CollapseKind::Emission => "emission",
            CollapseKind::Absorption => "absorption",
        }
    }
}

/// One dissipative channel; `rate` is the prefactor under the square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseSpec {
    pub kind: CollapseKind,
    pub site: usize,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct CollapseOperator {
    pub spec: CollapseSpec,
    /// `√rate · O` lifted to the full register.
    pub matrix: Operator,
}

/// Dephasing `√γ σz` per dephasing entry; per thermal entry the pair
/// `√(γ(1+n_th)) σ⁻` and `√(γ n_th) σ⁺`. Zero-rate channels are omitted.
pub fn build_collapse_operators(topo: &BathTopology) -> Result<Vec<CollapseOperator>> {
    topo.validate()?;
    let n = topo.n_qubits;
    let mut out = Vec::new();
    let mut push = |kind: CollapseKind, site: usize, rate: f64, m: Operator| {
        if rate > 0.0 {
            let s = Complex64::new(rate.sqrt(), 0.0);
            out.push(CollapseOperator { spec: CollapseSpec { kind, site, rate }, matrix: m * s });
        }
    };
    for &(site, g) in &topo.dephasing {
        push(CollapseKind::Dephasing, site, g, lift_pauli(PauliAxis::Z, site, n)?);
    }
    for &(site, g) in &topo.thermal {
        let nth = thermal_occupation(topo.beta, topo.omega[site])?;
        push(CollapseKind::Emission, site, g * (1.0 + nth), lift_single(&sigma_minus(), site, n)?);
        push(CollapseKind::Absorption, site, g * nth, lift_single(&sigma_plus(), site, n)?);
    }
    Ok(out)
}

fn check_dims(h: &Operator, collapse: &[CollapseOperator], dim: usize) -> Result<()> {
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::domain(format!(
            "Hamiltonian is {}x{}, state is {dim}x{dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    for c in collapse {
        if c.matrix.nrows() != dim || c.matrix.ncols() != dim {
            return Err(Error::domain(format!(
                "collapse operator ({} on {}) has the wrong dimension",
                c.spec.kind.label(),
                c.spec.site
            )));
        }
    }
    Ok(())
}

/// Dissipator part `Σ_k (L ρ L† − ½{L†L, ρ})` (dense).
pub fn dissipator(collapse: &[CollapseOperator], rho: &Operator) -> Operator {
    let n = rho.nrows();
    let mut out = Operator::zeros(n, n);
    let half = Complex64::new(0.5, 0.0);
    for c in collapse {
        let l = &c.matrix;
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += l * rho * &ld - (&ldl * rho + rho * &ldl) * half;
    }
    out
}

/// `-i[H, ρ] + Σ_k (L ρ L† − ½{L†L, ρ})`, dense reference implementation.
pub fn lindblad_rhs(h: &Operator, collapse: &[CollapseOperator], rho: &Operator) -> Result<Operator> {
    let dim = rho.nrows();
    if !rho.is_square() {
        return Err(Error::domain("state must be square"));
    }
    check_dims(h, collapse, dim)?;
    let mi = Complex64::new(0.0, -1.0);
    Ok((h * rho - rho * h) * mi + dissipator(collapse, rho))
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl Csr {
    pub fn from_dense(m: &Operator) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { dim, row_ptr, cols, vals }
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// At most one non-zero per row.
    fn monomial_rows(&self) -> Option<Vec<(usize, usize, Complex64)>> {
        let mut rows = Vec::new();
        for r in 0..self.dim {
            match self.row_ptr[r + 1] - self.row_ptr[r] {
                0 => {}
                1 => {
                    let k = self.row_ptr[r];
                    rows.push((r, self.cols[k], self.vals[k]));
                }
                _ => return None,
            }
        }
        Some(rows)
    }

    /// `Tr[A X]` for row-major `x`.
    pub fn trace_product(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for r in 0..self.dim {
            for (k, v) in self.row(r) {
                acc += v * x[k * self.dim + r];
            }
        }
        acc
    }

    /// `out = A X` for row-major `x`.
    fn mul_dense(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        out.fill(ZERO);
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, v) in self.row(r) {
                let src = &x[k * n..(k + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }
}

enum Jump {
    /// Single-entry rows with real values, stored as parallel arrays.
    RealMonomial { rows: Vec<usize>, cols: Vec<usize>, vals: Vec<f64> },
    /// Single-entry rows: `(row, col, value)`.
    Monomial(Vec<(usize, usize, Complex64)>),
    General(Csr),
}

/// Off-diagonal part of `H_eff`.
enum OffDiagonal {
    Real { row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64> },
    Complex(Csr),
}

/// Sparse Lindblad generator `X ↦ -i(H_eff X − X H_eff†) + Σ L X L†`
/// with `H_eff = H − (i/2) Σ L†L`.
///
/// Diagonal real jumps (dephasing) are merged into one entrywise weight
/// matrix; real single-entry jumps (σ±) and real off-diagonal Hamiltonian
/// entries avoid complex products.
pub(crate) struct Generator {
    dim: usize,
    diag: Vec<Complex64>,
    off: OffDiagonal,
    heff: Csr,
    diagonal_weights: Option<Vec<f64>>,
    jumps: Vec<Jump>,
    scratch: Vec<Complex64>,
}

impl Generator {
    pub fn new(h: &Operator, collapse: &[CollapseOperator]) -> Result<Self> {
        let dim = h.nrows();
        check_dims(h, collapse, dim)?;
        let mut heff = h.clone();
        let mhalf = Complex64::new(0.0, -0.5);
        for c in collapse {
            heff += (c.matrix.adjoint() * &c.matrix) * mhalf;
        }
        let diag: Vec<Complex64> = (0..dim).map(|k| heff[(k, k)]).collect();
        let mut off_only = heff.clone();
        for k in 0..dim {
            off_only[(k, k)] = ZERO;
        }
        let off_csr = Csr::from_dense(&off_only);
        let off = if off_csr.vals.iter().all(|v| v.im == 0.0) {
            OffDiagonal::Real {
                row_ptr: off_csr.row_ptr.clone(),
                cols: off_csr.cols.clone(),
                vals: off_csr.vals.iter().map(|v| v.re).collect(),
            }
        } else {
            OffDiagonal::Complex(off_csr)
        };

        let mut diagonal_weights: Option<Vec<f64>> = None;
        let mut jumps = Vec::new();
        for c in collapse {
            let csr = Csr::from_dense(&c.matrix);
            match csr.monomial_rows() {
                Some(rows) if rows.iter().all(|&(_, _, v)| v.im == 0.0) => {
                    if rows.iter().all(|&(r, k, _)| r == k) {
                        let mut a = vec![0.0; dim];
                        for &(r, _, v) in &rows {
                            a[r] = v.re;
                        }
                        let w = diagonal_weights.get_or_insert_with(|| vec![0.0; dim * dim]);
                        for r in 0..dim {
                            for col in 0..dim {
                                w[r * dim + col] += a[r] * a[col];
                            }
                        }
                    } else {
                        jumps.push(Jump::RealMonomial {
                            rows: rows.iter().map(|e| e.0).collect(),
                            cols: rows.iter().map(|e| e.1).collect(),
                            vals: rows.iter().map(|e| e.2.re).collect(),
                        });
                    }
                }
                Some(rows) => jumps.push(Jump::Monomial(rows)),
                None => jumps.push(Jump::General(csr)),
            }
        }
        Ok(Generator {
            dim,
            diag,
            off,
            heff: Csr::from_dense(&heff),
            diagonal_weights,
            jumps,
            scratch: vec![ZERO; dim * dim],
        })
    }

    /// `m = H_eff x`.
    fn heff_times(&self, x: &[Complex64], m: &mut [Complex64]) {
        let n = self.dim;
        for r in 0..n {
            let d = self.diag[r];
            let (dst, src_r) = (&mut m[r * n..(r + 1) * n], &x[r * n..(r + 1) * n]);
            for (o, s) in dst.iter_mut().zip(src_r) {
                *o = d * s;
            }
            match &self.off {
                OffDiagonal::Real { row_ptr, cols, vals } => {
                    for idx in row_ptr[r]..row_ptr[r + 1] {
                        let v = vals[idx];
                        let src = &x[cols[idx] * n..(cols[idx] + 1) * n];
                        for (o, s) in dst.iter_mut().zip(src) {
                            o.re += v * s.re;
                            o.im += v * s.im;
                        }
                    }
                }
                OffDiagonal::Complex(csr) => {
                    for (k, v) in csr.row(r) {
                        let src = &x[k * n..(k + 1) * n];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += v * s;
                        }
                    }
                }
            }
        }
    }

    /// `out = 𝓛(x)`. With `hermitian` set, `x` is assumed Hermitian and
    /// `X H_eff† = (H_eff X)†` is used, which also makes `out` exactly Hermitian.
    pub fn apply(&mut self, x: &[Complex64], out: &mut [Complex64], hermitian: bool) {
        let n = self.dim;
        let mut m = std::mem::take(&mut self.scratch);
        self.heff_times(x, &mut m);
        if hermitian {
            for (r0, c0) in upper_tiles(n) {
                for r in r0..(r0 + TILE).min(n) {
                    for c in c0.max(r)..(c0 + TILE).min(n) {
                        let a = m[r * n + c];
                        let b = m[c * n + r];
                        // -i a + i conj(b)
                        let v = Complex64::new(a.im + b.im, b.re - a.re);
                        out[r * n + c] = v;
                        out[c * n + r] = v.conj();
                    }
                }
            }
        } else {
            // -i H_eff X + i X H_eff†
            let iu = Complex64::new(0.0, 1.0);
            for r in 0..n {
                let xr = &x[r * n..(r + 1) * n];
                for c in 0..n {
                    let mut acc = xr[c] * self.diag[c].conj();
                    for (k, v) in self.heff.row(c) {
                        if k != c {
                            acc += xr[k] * v.conj();
                        }
                    }
                    let a = m[r * n + c];
                    out[r * n + c] = Complex64::new(a.im, -a.re) + iu * acc;
                }
            }
        }
        self.scratch = m;
        if let Some(w) = &self.diagonal_weights {
            for ((o, xi), wi) in out.iter_mut().zip(x).zip(w) {
                *o += xi * *wi;
            }
        }
        for jump in &self.jumps {
            match jump {
                Jump::RealMonomial { rows, cols, vals } => {
                    for ((&r, &kr), &vr) in rows.iter().zip(cols).zip(vals) {
                        let dst = &mut out[r * n..(r + 1) * n];
                        let src = &x[kr * n..(kr + 1) * n];
                        for ((&c, &kc), &vc) in rows.iter().zip(cols).zip(vals) {
                            let w = vr * vc;
                            let s = src[kc];
                            let d = &mut dst[c];
                            d.re += w * s.re;
                            d.im += w * s.im;
                        }
                    }
                }
                Jump::Monomial(rows) => {
                    for &(r, kr, vr) in rows {
                        let base = r * n;
                        let src = kr * n;
                        for &(c, kc, vc) in rows {
                            out[base + c] += vr * vc.conj() * x[src + kc];
                        }
                    }
                }
                Jump::General(l) => {
                    // T = L X, then out += T L†
                    let mut t = vec![ZERO; n * n];
                    l.mul_dense(x, &mut t);
                    for c in 0..n {
                        for (k, v) in l.row(c) {
                            let w = v.conj();
                            for r in 0..n {
                                out[r * n + c] += t[r * n + k] * w;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Uniform time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::validation(format!("time grid needs at least 2 points, got {n_points}")));
        }
        if !(t_end > t_start && t_start.is_finite() && t_end.is_finite()) {
            return Err(Error::validation(format!("time grid [{t_start}, {t_end}] is empty")));
        }
        Ok(TimeGrid { t_start, t_end, n_points })
    }

    /// `t ∈ [0, 500]`, 5000 points.
    pub fn short() -> Self {
        TimeGrid { t_start: 0.0, t_end: 500.0, n_points: 5000 }
    }

    /// `t ∈ [0, 1500]`, 5000 points.
    pub fn long() -> Self {
        TimeGrid { t_start: 0.0, t_end: 1500.0, n_points: 5000 }
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }

    /// `1/(2Δt)` in cycles per time unit.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt()
    }

    /// `1/(N Δt)` in cycles per time unit.
    pub fn resolution(&self) -> f64 {
        1.0 / (self.n_points as f64 * self.dt())
    }
}

#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub op: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: Operator) -> Self {
        Observable { name: name.into(), op }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Option<Vec<DensityMatrix>>,
    /// Named expectation series, one value per grid point.
    pub observables: Vec<(String, Vec<Complex64>)>,
    /// Largest `|Tr ρ − 1|` seen on the grid.
    pub max_trace_error: f64,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&[Complex64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Real parts of a named series.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.series(name).map(|s| s.iter().map(|z| z.re).collect())
    }
}

/// Controls for [`evolve`].
///
/// The internal step is `h ≤ min(Δt, step_constant/ω_max, generator_step_constant/ω_L)`
/// where `ω_max` is the qubit frequency scale and `ω_L` is
/// [`characteristic_frequency`] of the generator.
#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Keep every grid-point state in the trajectory.
    pub store_states: bool,
    pub step_constant: f64,
    pub generator_step_constant: f64,
    /// Extra factor on the number of substeps per grid interval (convergence checks).
    pub substep_multiplier: usize,
    /// Verify `λ_min(ρ) ≥ −1e−6` at every grid point.
    pub check_positivity: bool,
    /// Largest qubit frequency. `None` falls back to `ω_L`.
    pub omega_max: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            store_states: false,
            step_constant: DEFAULT_STEP_CONSTANT,
            generator_step_constant: GENERATOR_STEP_CONSTANT,
            substep_multiplier: 1,
            check_positivity: true,
            omega_max: None,
        }
    }
}

pub const DEFAULT_STEP_CONSTANT: f64 = 0.05;
pub const GENERATOR_STEP_CONSTANT: f64 = 0.2;
/// Trace drift or negative eigenvalue beyond this aborts integration.
pub const FAILURE_TOL: f64 = 1e-6;

/// Spectral-radius bound of the Lindblad generator: the spread of the
/// Hamiltonian spectrum plus the summed collapse rates.
pub fn characteristic_frequency(h: &Operator, collapse: &[CollapseOperator]) -> f64 {
    let evals = linalg::hermitian_eigenvalues(h);
    let spread = evals.last().copied().unwrap_or(0.0) - evals.first().copied().unwrap_or(0.0);
    let decay: f64 = collapse.iter().map(|c| c.spec.rate).sum();
    let diag_max = (0..h.nrows()).map(|k| h[(k, k)].re.abs()).fold(0.0, f64::max);
    (spread + decay).max(diag_max).max(1e-12)
}

/// Fixed-step RK4 propagator for one generator on one grid.
pub struct Evolution {
    generator: Generator,
    grid: TimeGrid,
    substeps: usize,
    h: f64,
    store_states: bool,
    check_positivity: bool,
}

/// Per-grid-point callback: `(index, time, state)`.
pub type Visitor<'a> = dyn FnMut(usize, f64, &Operator) -> Result<()> + 'a;

impl Evolution {
    pub fn new(h: &Operator, collapse: &[CollapseOperator], grid: TimeGrid, opts: &EvolveOptions) -> Result<Self> {
        TimeGrid::new(grid.t_start, grid.t_end, grid.n_points)?;
        let generator = Generator::new(h, collapse)?;
        let omega_l = characteristic_frequency(h, collapse);
        let omega_max = match opts.omega_max {
            Some(w) if w > 0.0 && w.is_finite() => w,
            Some(w) => return Err(Error::domain(format!("omega_max must be positive, got {w}"))),
            None => omega_l,
        };
        for c in [opts.step_constant, opts.generator_step_constant] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::domain(format!("step constants must be positive, got {c}")));
            }
        }
        let dt = grid.dt();
        let h_max = (opts.step_constant / omega_max).min(opts.generator_step_constant / omega_l).min(dt);
        let substeps = ((dt / h_max).ceil() as usize).max(1) * opts.substep_multiplier.max(1);
        Ok(Evolution {
            generator,
            grid,
            substeps,
            h: dt / substeps as f64,
            store_states: opts.store_states,
            check_positivity: opts.check_positivity,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn rk4(&mut self, x: &mut [Complex64], bufs: &mut Rk4Buffers, hermitian: bool) {
        let h = self.h;
        let Rk4Buffers { k1, k2, k3, k4, tmp } = bufs;
        self.generator.apply(x, k1, hermitian);
        axpy_into(tmp, x, k1, 0.5 * h);
        self.generator.apply(tmp, k2, hermitian);
        axpy_into(tmp, x, k2, 0.5 * h);
        self.generator.apply(tmp, k3, hermitian);
        axpy_into(tmp, x, k3, h);
        self.generator.apply(tmp, k4, hermitian);
        let w = h / 6.0;
        for ((((xi, a), b), c), d) in x.iter_mut().zip(k1.iter()).zip(k2.iter()).zip(k3.iter()).zip(k4.iter()) {
            xi.re += (a.re + 2.0 * (b.re + c.re) + d.re) * w;
            xi.im += (a.im + 2.0 * (b.im + c.im) + d.im) * w;
        }
    }

    /// Evolves a density matrix, recording `Tr[ρ O]` for each observable at every
    /// grid point and calling `visit` on each grid-point state.
    pub fn run_state(
        &mut self,
        rho0: &DensityMatrix,
        observables: &[Observable],
        visit: &mut Visitor<'_>,
    ) -> Result<Trajectory> {
        let n = self.generator.dim;
        if rho0.dim() != n {
            return Err(Error::domain(format!("initial state is {}x{}, generator acts on dimension {n}", rho0.dim(), rho0.dim())));
        }
        for o in observables {
            if o.op.nrows() != n || o.op.ncols() != n {
                return Err(Error::domain(format!("observable {} has the wrong dimension", o.name)));
            }
        }
        let obs: Vec<Csr> = observables.iter().map(|o| Csr::from_dense(&o.op)).collect();
        let mut series: Vec<Vec<Complex64>> = vec![Vec::with_capacity(self.grid.n_points); obs.len()];
        let mut states = self.store_states.then(|| Vec::with_capacity(self.grid.n_points));
        let mut x = to_row_major(rho0.matrix());
        let mut bufs = Rk4Buffers::new(n);
        let mut max_trace_error = 0.0f64;

        for k in 0..self.grid.n_points {
            if k > 0 {
                for _ in 0..self.substeps {
                    self.rk4(&mut x, &mut bufs, true);
                    hermitize(&mut x, n);
                }
            }
            let t = self.grid.time(k);
            let m = from_row_major(&x, n);
            let tr = m.trace();
            let drift = (tr - Complex64::new(1.0, 0.0)).norm();
            max_trace_error = max_trace_error.max(drift);
            if !drift.is_finite() || drift > FAILURE_TOL {
                return Err(Error::Integration { step: k, time: t, reason: format!("trace drifted to {tr}") });
            }
            if self.check_positivity && !linalg::exceeds_min_eigenvalue(&m, FAILURE_TOL) {
                return Err(Error::Integration {
                    step: k,
                    time: t,
                    reason: "state developed an eigenvalue below -1e-6".into(),
                });
            }
            for (s, o) in series.iter_mut().zip(&obs) {
                s.push(o.trace_product(&x));
            }
            visit(k, t, &m)?;
            if let Some(st) = states.as_mut() {
                st.push(DensityMatrix::from_raw(m));
            }
        }
        Ok(Trajectory {
            grid: self.grid,
            states,
            observables: observables.iter().map(|o| o.name.clone()).zip(series).collect(),
            max_trace_error,
        })
    }

    /// Propagates an arbitrary operator `X(t) = e^{𝓛 t} X0` (no state invariants are
    /// assumed or checked) and returns `Tr[O X(t_k)]` for each observable.
    pub fn run_operator(&mut self, x0: &Operator, observables: &[Observable]) -> Result<Vec<Vec<Complex64>>> {
        self.propagate(x0, false, observables, &mut |_, _, _| Ok(()))
    }

    /// Propagates a Hermitian operator (for example a difference of two states)
    /// with the Hermitian fast path, calling `visit` at each grid point.
    pub fn run_hermitian(&mut self, x0: &Operator, observables: &[Observable], visit: &mut Visitor<'_>) -> Result<Vec<Vec<Complex64>>> {
        let err = crate::algebra::hermiticity_error(x0);
        if err > crate::states::HERMITICITY_TOL {
            return Err(Error::domain(format!("operator is not Hermitian (max |X-X†| = {err:.3e})")));
        }
        self.propagate(x0, true, observables, visit)
    }

    fn propagate(&mut self, x0: &Operator, hermitian: bool, observables: &[Observable], visit: &mut Visitor<'_>) -> Result<Vec<Vec<Complex64>>> {
        let n = self.generator.dim;
        if x0.nrows() != n || x0.ncols() != n {
            return Err(Error::domain("operator has the wrong dimension"));
        }
        for o in observables {
            if o.op.nrows() != n || o.op.ncols() != n {
                return Err(Error::domain(format!("observable {} has the wrong dimension", o.name)));
            }
        }
        let obs: Vec<Csr> = observables.iter().map(|o| Csr::from_dense(&o.op)).collect();
        let mut series: Vec<Vec<Complex64>> = vec![Vec::with_capacity(self.grid.n_points); obs.len()];
        let mut x = to_row_major(x0);
        if hermitian {
            hermitize(&mut x, n);
        }
        let mut bufs = Rk4Buffers::new(n);
        for k in 0..self.grid.n_points {
            if k > 0 {
                for _ in 0..self.substeps {
                    self.rk4(&mut x, &mut bufs, hermitian);
                    if hermitian {
                        hermitize(&mut x, n);
                    }
                }
            }
            let t = self.grid.time(k);
            if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Integration { step: k, time: t, reason: "non-finite operator entries".into() });
            }
            for (s, o) in series.iter_mut().zip(&obs) {
                s.push(o.trace_product(&x));
            }
            visit(k, t, &from_row_major(&x, n))?;
        }
        Ok(series)
    }
}

struct Rk4Buffers {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        let z = vec![ZERO; n * n];
        Rk4Buffers { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }
}

#[inline]
fn axpy_into(out: &mut [Complex64], x: &[Complex64], k: &[Complex64], a: f64) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        o.re = xi.re + ki.re * a;
        o.im = xi.im + ki.im * a;
    }
}

const TILE: usize = 16;

/// Top-left corners of the tiles covering the upper triangle.
fn upper_tiles(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).step_by(TILE).flat_map(move |r0| (r0..n).step_by(TILE).map(move |c0| (r0 - r0 % TILE, c0 - c0 % TILE)))
}

/// `x ← (x + x†)/2`.
fn hermitize(x: &mut [Complex64], n: usize) {
    for (r0, c0) in upper_tiles(n) {
        for r in r0..(r0 + TILE).min(n) {
            for c in c0.max(r)..(c0 + TILE).min(n) {
                if r == c {
                    x[r * n + r].im = 0.0;
                    continue;
                }
                let a = x[r * n + c];
                let b = x[c * n + r];
                let avg = (a + b.conj()) * 0.5;
                x[r * n + c] = avg;
                x[c * n + r] = avg.conj();
            }
        }
    }
}

pub(crate) fn to_row_major(m: &Operator) -> Vec<Complex64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * m.ncols());
    for r in 0..n {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

pub(crate) fn from_row_major(x: &[Complex64], n: usize) -> Operator {
    Operator::from_row_slice(n, n, x)
}

/// Integrates the master equation from `rho0` over `grid`, recording the
/// expectation of every observable at each grid point.
pub fn evolve(
    h: &Operator,
    collapse: &[CollapseOperator],
    rho0: &DensityMatrix,
    grid: TimeGrid,
    observables: &[Observable],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mut ev = Evolution::new(h, collapse, grid, opts)?;
    ev.run_state(rho0, observables, &mut |_, _, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{build_total_hamiltonian, max_abs, Edge};
    use crate::states::{basis_state, initial_product_state, plus_state};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_state(dim: usize, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Operator::from_fn(dim, dim, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    }

    fn triangle() -> BathTopology {
        let mut t = BathTopology::uniform(3, 1.0, 1.0);
        t.edges = vec![Edge::new(0, 1, 0.2), Edge::new(0, 2, 0.2), Edge::new(1, 2, 0.2)];
        t.dephasing = vec![(0, 0.005)];
        t.thermal = vec![(1, 0.005), (2, 0.005)];
        t
    }

    #[test]
    fn collapse_operator_rates() {
        let ops = build_collapse_operators(&triangle()).unwrap();
        assert_eq!(ops.len(), 5);
        let deph = &ops[0];
        assert_eq!(deph.spec.kind, CollapseKind::Dephasing);
        let expect = lift_pauli(PauliAxis::Z, 0, 3).unwrap() * c(0.005f64.sqrt());
        assert!(max_abs(&(&deph.matrix - expect)) < 1e-15);

        let nth = 1.0 / (1f64.exp() - 1.0);
        let em = ops.iter().find(|o| o.spec.kind == CollapseKind::Emission).unwrap();
        let ab = ops.iter().find(|o| o.spec.kind == CollapseKind::Absorption).unwrap();
        assert_abs_diff_eq!(em.spec.rate, 0.005 * (1.0 + nth), epsilon = 1e-15);
        assert_abs_diff_eq!(ab.spec.rate, 0.005 * nth, epsilon = 1e-15);
        assert_abs_diff_eq!(em.spec.rate, 0.005 * 1.582, epsilon = 1e-6);
        assert_abs_diff_eq!(ab.spec.rate / em.spec.rate, (-1.0f64).exp(), epsilon = 1e-12);

        let mut closed = triangle();
        closed.dephasing = vec![(0, 0.0)];
        closed.thermal = vec![(1, 0.0), (2, 0.0)];
        assert!(build_collapse_operators(&closed).unwrap().is_empty());
    }

    #[test]
    fn detailed_balance_ratio_for_several_temperatures() {
        for (beta, omega) in [(0.5, 1.0), (1.0, 2.0), (3.0, 0.7)] {
            let mut t = BathTopology::uniform(2, omega, beta);
            t.thermal = vec![(1, 0.1)];
            let ops = build_collapse_operators(&t).unwrap();
            assert_abs_diff_eq!(ops[1].spec.rate / ops[0].spec.rate, (-beta * omega as f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rhs_simple_cases() {
        let zero = Operator::zeros(2, 2);
        let rhs = lindblad_rhs(&zero, &[], plus_state().matrix()).unwrap();
        assert_eq!(max_abs(&rhs), 0.0);

        let mut t = BathTopology::uniform(1, 1.0, 1.0);
        t.dephasing = vec![(0, 0.3)];
        let ops = build_collapse_operators(&t).unwrap();
        let rhs = lindblad_rhs(&zero, &ops, plus_state().matrix()).unwrap();
        assert_abs_diff_eq!(rhs[(0, 1)].re, -2.0 * 0.3 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rhs[(1, 0)].re, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(rhs[(0, 0)].norm(), 0.0, epsilon = 1e-15);

        assert!(lindblad_rhs(&Operator::zeros(4, 4), &ops, plus_state().matrix()).is_err());
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let topo = triangle();
        let h = build_total_hamiltonian(&topo).unwrap();
        let ops = build_collapse_operators(&topo).unwrap();
        for seed in 0..5 {
            let rho = random_state(8, seed);
            let rhs = lindblad_rhs(&h, &ops, rho.matrix()).unwrap();
            assert!(rhs.trace().norm() < 1e-12);
            assert!(crate::algebra::hermiticity_error(&rhs) < 1e-12);
        }
    }

    #[test]
    fn sparse_generator_matches_dense_reference() {
        let mut topo = triangle();
        topo.edges[1].coupling = crate::algebra::Coupling::anisotropic(0.1, 0.3, -0.2);
        let h = build_total_hamiltonian(&topo).unwrap();
        let mut ops = build_collapse_operators(&topo).unwrap();
        // A non-monomial jump exercises the general path.
        let x = lift_pauli(PauliAxis::X, 1, 3).unwrap() + lift_pauli(PauliAxis::Z, 2, 3).unwrap();
        ops.push(CollapseOperator { spec: CollapseSpec { kind: CollapseKind::Dephasing, site: 1, rate: 0.02 }, matrix: x * c(0.02f64.sqrt()) });
        let mut gen = Generator::new(&h, &ops).unwrap();
        let rho = random_state(8, 7);
        let reference = lindblad_rhs(&h, &ops, rho.matrix()).unwrap();
        let mut out = vec![ZERO; 64];
        gen.apply(&to_row_major(rho.matrix()), &mut out, true);
        assert!(max_abs(&(from_row_major(&out, 8) - &reference)) < 1e-13);
        // Non-Hermitian input, general path.
        let xop = rho.matrix() * lift_pauli(PauliAxis::X, 1, 3).unwrap();
        let reference = lindblad_rhs(&h, &ops, &xop).unwrap();
        gen.apply(&to_row_major(&xop), &mut out, false);
        assert!(max_abs(&(from_row_major(&out, 8) - &reference)) < 1e-13);
    }

    #[test]
    fn larmor_precession() {
        let topo = BathTopology::uniform(1, 1.0, 1.0);
        let h = build_total_hamiltonian(&topo).unwrap();
        let grid = TimeGrid::new(0.0, 20.0, 401).unwrap();
        let obs = vec![
            Observable::new("sx", lift_pauli(PauliAxis::X, 0, 1).unwrap()),
            Observable::new("sz", lift_pauli(PauliAxis::Z, 0, 1).unwrap()),
        ];
        let traj = evolve(&h, &[], &plus_state(), grid, &obs, &EvolveOptions::default()).unwrap();
        let sx = traj.real("sx").unwrap();
        let sz = traj.real("sz").unwrap();
        for (k, t) in grid.times().into_iter().enumerate() {
            assert_abs_diff_eq!(sx[k], t.cos(), epsilon = 1e-6);
            assert_abs_diff_eq!(sz[k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplitude_damping_decay() {
        // Zero temperature: only emission survives.
        let mut topo = BathTopology::uniform(1, 1.0, 200.0);
        topo.thermal = vec![(0, 0.1)];
        let h = build_total_hamiltonian(&topo).unwrap();
        let ops = build_collapse_operators(&topo).unwrap();
        assert!(ops.iter().all(|o| o.spec.kind == CollapseKind::Emission || o.spec.rate < 1e-80));
        let grid = TimeGrid::new(0.0, 10.0, 101).unwrap();
        let p0 = Operator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let traj = evolve(&h, &ops, &basis_state(0), grid, &[Observable::new("p", p0)], &EvolveOptions::default()).unwrap();
        let p = traj.real("p").unwrap();
        assert_abs_diff_eq!(p[100], (-1.0f64).exp(), epsilon = 1e-4);
        assert_abs_diff_eq!(p[100], 0.3679, epsilon = 1e-4);
    }

    #[test]
    fn closed_uncoupled_register_is_frozen() {
        let mut topo = triangle();
        for e in &mut topo.edges {
            e.coupling = crate::algebra::Coupling::isotropic(0.0);
        }
        topo.dephasing.clear();
        topo.thermal.clear();
        let h = build_total_hamiltonian(&topo).unwrap();
        // A diagonal state commutes with the diagonal Hamiltonian.
        let rho0 = initial_product_state(&basis_state(0), &topo).unwrap();
        let mut ev = Evolution::new(&h, &[], TimeGrid::new(0.0, 5.0, 11).unwrap(), &EvolveOptions { store_states: true, ..Default::default() }).unwrap();
        let traj = ev.run_state(&rho0, &[], &mut |_, _, _| Ok(())).unwrap();
        for s in traj.states.unwrap() {
            assert_eq!(s.matrix(), rho0.matrix());
        }
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        let g = TimeGrid::long();
        assert_abs_diff_eq!(g.dt(), 1500.0 / 4999.0);
    }
}
