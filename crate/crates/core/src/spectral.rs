//! Bath correlation function, spectral density and log-normalised FFT features.
//!
//! Frequencies are in cycles per time unit. Bin `k` of an `N`-point series sits
//! at `k / (N Δt)`; the one-sided spectra keep bins `0..=N/2`.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::algebra::{build_total_hamiltonian, lift_pauli, BathTopology, Operator, PauliAxis, ZERO};
use crate::error::{Error, Result};
use crate::lindblad::{build_collapse_operators, EvolveOptions, Evolution, Observable, TimeGrid};
use crate::states::{initial_product_state, plus_state, DensityMatrix};

/// Offset inside the logarithm of the feature normalisation.
pub const LOG_EPS: f64 = 1e-12;

/// A mean-removed series whose residual is below this fraction of its largest
/// magnitude is treated as flat.
pub const FLAT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub mags: Vec<f64>,
}

impl Spectrum {
    /// True when every non-DC bin is exactly zero.
    pub fn is_flat(&self) -> bool {
        self.mags.iter().skip(1).all(|&m| m == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Concatenated x, y and z blocks.
    pub values: Vec<f64>,
    /// Number of bins per axis.
    pub bins: usize,
    /// Axes whose log spectrum was constant and which were emitted as zeros.
    pub degenerate: [bool; 3],
}

impl FeatureVector {
    pub fn block(&self, axis: PauliAxis) -> &[f64] {
        let k = match axis {
            PauliAxis::X => 0,
            PauliAxis::Y => 1,
            PauliAxis::Z => 2,
        };
        &self.values[k * self.bins..(k + 1) * self.bins]
    }
}

/// Number of one-sided bins for an `n`-point series.
pub fn positive_bins(n: usize) -> usize {
    n / 2 + 1
}

/// `Σ_i σ_axis^{(i)}` over the bath nodes.
pub fn collective_bath_operator(topo: &BathTopology, axis: PauliAxis) -> Result<Operator> {
    let nodes = topo.bath_nodes();
    if nodes.is_empty() {
        return Err(Error::domain("topology has no bath qubits"));
    }
    let dim = topo.dim();
    let mut b = Operator::zeros(dim, dim);
    for i in nodes {
        b += lift_pauli(axis, i, topo.n_qubits)?;
    }
    Ok(b)
}

/// `C(t) = Tr[B · e^{𝓛t}(B ρ0)]` for a prepared evolution.
pub fn correlator_from(evolution: &mut Evolution, rho0: &DensityMatrix, b: &Operator) -> Result<Vec<Complex64>> {
    let x0 = b * rho0.matrix();
    let obs = [Observable::new("B", b.clone())];
    let mut out = evolution.run_operator(&x0, &obs)?;
    Ok(out.pop().unwrap_or_default())
}

/// Collective bath correlator with `B = Σ σx` over the bath, from the product
/// state with the system in `|+>`.
pub fn bath_correlator(topo: &BathTopology, grid: TimeGrid) -> Result<Vec<Complex64>> {
    bath_correlator_axis(topo, grid, PauliAxis::X)
}

pub fn bath_correlator_axis(topo: &BathTopology, grid: TimeGrid, axis: PauliAxis) -> Result<Vec<Complex64>> {
    let b = collective_bath_operator(topo, axis)?;
    let h = build_total_hamiltonian(topo)?;
    let collapse = build_collapse_operators(topo)?;
    let opts = EvolveOptions {
        omega_max: topo.omega.iter().copied().reduce(f64::max),
        ..EvolveOptions::default()
    };
    let mut ev = Evolution::new(&h, &collapse, grid, &opts)?;
    let rho0 = initial_product_state(&plus_state(), topo)?;
    correlator_from(&mut ev, &rho0, &b)
}

fn mean_removed(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len().max(1) as f64;
    let mean = c.iter().sum::<Complex64>() / n;
    let scale = c.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let mut out: Vec<Complex64> = c.iter().map(|z| z - mean).collect();
    let resid = out.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if resid <= FLAT_TOL * scale {
        out.iter_mut().for_each(|z| *z = ZERO);
    }
    out
}

fn bin_freqs(n: usize, grid: &TimeGrid) -> Vec<f64> {
    let df = grid.resolution();
    (0..positive_bins(n)).map(|k| k as f64 * df).collect()
}

/// `|J(ω)| = |Σ_k C'(t_k) e^{+2πi f t_k}|` at `f ≥ 0`, with `C'` the mean-removed
/// correlator. The `e^{+iωt}` kernel places the component `e^{−iω₀t}` at `+ω₀`.
pub fn spectral_density(c: &[Complex64], grid: &TimeGrid) -> Result<Spectrum> {
    if c.len() != grid.n_points {
        return Err(Error::domain(format!(
            "series has {} samples, grid has {} points",
            c.len(),
            grid.n_points
        )));
    }
    let mut buf = mean_removed(c);
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let freqs = bin_freqs(c.len(), grid);
    let mags = buf[..freqs.len()].iter().map(|z| z.norm()).collect();
    Ok(Spectrum { freqs, mags })
}

/// One-sided forward-DFT magnitudes of a mean-removed real series.
pub fn magnitude_spectrum(s: &[f64], grid: &TimeGrid) -> Result<Spectrum> {
    if s.len() != grid.n_points {
        return Err(Error::domain(format!(
            "series has {} samples, grid has {} points",
            s.len(),
            grid.n_points
        )));
    }
    let c: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut buf = mean_removed(&c);
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let freqs = bin_freqs(s.len(), grid);
    let mags = buf[..freqs.len()].iter().map(|z| z.norm()).collect();
    Ok(Spectrum { freqs, mags })
}

/// Frequency and magnitude of the largest non-DC bin; `None` for a flat spectrum.
pub fn dominant_peak(spec: &Spectrum) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (&f, &m) in spec.freqs.iter().zip(&spec.mags).skip(1) {
        if m > 0.0 && best.map_or(true, |(_, bm)| m > bm) {
            best = Some((f, m));
        }
    }
    best
}

/// Frequency of the largest non-DC bin. A flat spectrum returns 0 and logs a warning.
pub fn dominant_frequency(spec: &Spectrum) -> f64 {
    match dominant_peak(spec) {
        Some((f, _)) => f,
        None => {
            log::warn!("dominant_frequency: spectrum is flat, returning 0");
            0.0
        }
    }
}

/// `max / mean` of the non-DC magnitudes; 0 for a flat spectrum.
pub fn peak_sharpness(spec: &Spectrum) -> f64 {
    let body = &spec.mags[1.min(spec.mags.len())..];
    if body.is_empty() {
        return 0.0;
    }
    let mean = body.iter().sum::<f64>() / body.len() as f64;
    let max = body.iter().copied().fold(0.0, f64::max);
    if mean > 0.0 {
        max / mean
    } else {
        0.0
    }
}

/// `log10(A + ε)` min-max normalised to `[0, 1]`; `None` when the log spectrum is constant.
pub fn log_normalize(mags: &[f64]) -> Option<Vec<f64>> {
    let logs: Vec<f64> = mags.iter().map(|&a| (a + LOG_EPS).log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    Some(logs.iter().map(|&l| ((l - lo) / range).clamp(0.0, 1.0)).collect())
}

/// Fingerprint of the three system Pauli expectations: per axis, mean removal,
/// one-sided FFT magnitudes, `log10(A + 1e−12)` and min-max normalisation,
/// concatenated in x, y, z order. A constant log spectrum yields a zero block.
pub fn fft_features(sx: &[f64], sy: &[f64], sz: &[f64], grid: &TimeGrid) -> Result<FeatureVector> {
    if sx.len() != sy.len() || sy.len() != sz.len() {
        return Err(Error::domain("axis series have different lengths"));
    }
    let bins = positive_bins(sx.len());
    let mut values = Vec::with_capacity(3 * bins);
    let mut degenerate = [false; 3];
    for (k, s) in [sx, sy, sz].into_iter().enumerate() {
        let spec = magnitude_spectrum(s, grid)?;
        match log_normalize(&spec.mags) {
            Some(v) => values.extend(v),
            None => {
                degenerate[k] = true;
                values.extend(std::iter::repeat(0.0).take(bins));
            }
        }
    }
    Ok(FeatureVector { values, bins, degenerate })
}

/// Min-max normalisation applied block by block to an existing feature vector.
/// Constant blocks become zero blocks, so normalised vectors are fixed points.
pub fn renormalize_features(values: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || values.len() != 3 * bins {
        return Err(Error::domain(format!("{} values do not form three blocks of {bins}", values.len())));
    }
    let mut out = Vec::with_capacity(values.len());
    for block in values.chunks(bins) {
        let lo = block.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 0.0 {
            out.extend(block.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)));
        } else {
            out.extend(std::iter::repeat(0.0).take(bins));
        }
    }
    Ok(out)
}
