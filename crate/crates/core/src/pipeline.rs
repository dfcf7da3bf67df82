//! Single-run and batch drivers: evolution, diagnostics, spectra, non-Hermitian
//! indicators and the regression targets of each run.

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{build_interaction_hamiltonian, build_total_hamiltonian, lift_pauli, BathTopology, Operator, PauliAxis};
use crate::config::{Network, RunConfig};
use crate::diagnostics::{blp_backflow, partial_trace, uhlmann_fidelity, von_neumann_entropy, BackflowResult};
use crate::error::{Error, Result};
use crate::lindblad::{build_collapse_operators, EvolveOptions, Evolution, Observable};
use crate::ml::{Dataset, TARGET_NAMES};
use crate::nonhermitian::{deps, effective_hamiltonian, petermann_factors};
use crate::presets::NetworkParams;
use crate::spectral::{
    collective_bath_operator, correlator_from, dominant_peak, fft_features, magnitude_spectrum, spectral_density,
    FeatureVector, Spectrum,
};
use crate::states::{basis_state, initial_product_state, plus_state, thermal_qubit_state, DensityMatrix};

/// Regression targets of one run, in [`TARGET_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub values: [f64; 7],
    /// `(target, reason)` for every value that is not a finite measurement.
    pub flags: Vec<(String, String)>,
}

impl Targets {
    pub fn get(&self, name: &str) -> Option<f64> {
        TARGET_NAMES.iter().position(|n| *n == name).map(|k| self.values[k])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-grid-point diagnostics of the `|+>` run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticSeries {
    pub system_entropy: Vec<f64>,
    /// Uhlmann fidelity of the system state to the thermal state at its frequency.
    pub thermal_fidelity: Vec<f64>,
    pub bath_entropy: Vec<f64>,
    pub mutual_information: Vec<f64>,
    pub system_energy: Vec<f64>,
    pub bath_energy: Vec<f64>,
    pub interaction_energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub times: Vec<f64>,
    /// System `<σx>`, `<σy>`, `<σz>`.
    pub system: [Vec<f64>; 3],
    pub bath_nodes: Vec<usize>,
    /// Per bath node, `[<σx>, <σy>, <σz>]`.
    pub bath: Vec<[Vec<f64>; 3]>,
    /// Trace distance between the system states evolved from `|0>` and `|1>`.
    pub trace_distance: Vec<f64>,
    pub diagnostics: Option<DiagnosticSeries>,
    pub correlator: Option<Vec<Complex64>>,
    pub spectral_density: Option<Spectrum>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub label: String,
    /// Parameter block of layered networks (after randomization).
    pub params: Option<NetworkParams>,
    pub features: FeatureVector,
    pub targets: Targets,
    pub backflow: BackflowResult,
    pub deps: f64,
    pub k_max: f64,
    /// Modes whose Petermann factor is a sentinel or whose pairing was ambiguous.
    pub petermann_flags: usize,
    /// Files written for this run, filled in by the caller after emitting outputs.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub record: RunRecord,
    pub series: RunSeries,
}

fn bloch_state(r: [f64; 3]) -> DensityMatrix {
    let m = Operator::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.5 * (1.0 + r[2]), 0.0),
            Complex64::new(0.5 * r[0], -0.5 * r[1]),
            Complex64::new(0.5 * r[0], 0.5 * r[1]),
            Complex64::new(0.5 * (1.0 - r[2]), 0.0),
        ],
    );
    DensityMatrix::from_raw(m)
}

fn with_config(e: Error, cfg: &RunConfig, params: Option<&NetworkParams>) -> Error {
    match e {
        Error::Integration { step, time, reason } => Error::Integration {
            step,
            time,
            reason: format!("{reason} [config {}: {}]", cfg.label, describe(params)),
        },
        other => other,
    }
}

fn describe(params: Option<&NetworkParams>) -> String {
    match params {
        None => "explicit topology".into(),
        Some(p) => crate::presets::PARAM_NAMES
            .iter()
            .map(|n| format!("{n}={}", p.get(n).unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn system_observables(topo: &BathTopology) -> Result<Vec<Observable>> {
    let n = topo.n_qubits;
    let mut obs = Vec::new();
    for axis in PauliAxis::ALL {
        obs.push(Observable::new(format!("s{}", axis.label()), lift_pauli(axis, topo.system_index, n)?));
    }
    Ok(obs)
}

/// Runs the full pipeline for one configuration (randomization ranges are ignored).
pub fn run_single(cfg: &RunConfig) -> Result<RunOutput> {
    run_with(cfg, cfg.network.clone(), 0)
}

fn run_with(cfg: &RunConfig, network: Network, run_id: usize) -> Result<RunOutput> {
    let params = network.params().copied();
    run_inner(cfg, &network, run_id).map_err(|e| with_config(e, cfg, params.as_ref()))
}

fn run_inner(cfg: &RunConfig, network: &Network, run_id: usize) -> Result<RunOutput> {
    let topo = network.topology()?;
    let n = topo.n_qubits;
    let grid = cfg.grid;
    let h = build_total_hamiltonian(&topo)?;
    let collapse = build_collapse_operators(&topo)?;
    let opts = EvolveOptions {
        omega_max: topo.omega.iter().copied().reduce(f64::max),
        ..EvolveOptions::default()
    };
    let mut evolution = Evolution::new(&h, &collapse, grid, &opts)?;
    let bath_nodes = topo.bath_nodes();

    let mut observables = system_observables(&topo)?;
    for &b in &bath_nodes {
        for axis in PauliAxis::ALL {
            observables.push(Observable::new(format!("{}_{b}", axis.label()), lift_pauli(axis, b, n)?));
        }
    }
    observables.push(Observable::new("H_int", build_interaction_hamiltonian(&topo)?));

    // |+> run; the heavier reduced-state diagnostics are gathered on the fly.
    let rho0 = initial_product_state(&plus_state(), &topo)?;
    let mut bath_entropy = Vec::new();
    let mut total_entropy = Vec::new();
    let heavy = cfg.outputs.diagnostics && !bath_nodes.is_empty();
    let traj = evolution.run_state(&rho0, &observables, &mut |_, _, m| {
        if heavy {
            let rho = DensityMatrix::from_raw(m.clone());
            bath_entropy.push(von_neumann_entropy(&partial_trace(&rho, &bath_nodes, n)?));
            total_entropy.push(von_neumann_entropy(&rho));
        }
        Ok(())
    })?;
    let real = |name: &str| traj.real(name).expect("observable recorded");
    let system = [real("sx"), real("sy"), real("sz")];
    let bath: Vec<[Vec<f64>; 3]> = bath_nodes
        .iter()
        .map(|b| [real(&format!("x_{b}")), real(&format!("y_{b}")), real(&format!("z_{b}"))])
        .collect();

    // Difference of the |0> and |1> runs, propagated as one traceless operator.
    let x0 = initial_product_state(&basis_state(0), &topo)?.into_matrix()
        - initial_product_state(&basis_state(1), &topo)?.into_matrix();
    let diff = evolution.run_hermitian(&x0, &system_observables(&topo)?, &mut |_, _, _| Ok(()))?;
    let trace_distance: Vec<f64> = (0..grid.n_points)
        .map(|k| 0.5 * (diff[0][k].re.powi(2) + diff[1][k].re.powi(2) + diff[2][k].re.powi(2)).sqrt())
        .collect();
    let backflow = blp_backflow(&trace_distance, &grid)?;

    let diagnostics = if cfg.outputs.diagnostics {
        let target = thermal_qubit_state(topo.beta, topo.omega[topo.system_index])?;
        let mut d = DiagnosticSeries::default();
        let w_sys = topo.omega[topo.system_index];
        let ints = real("H_int");
        for k in 0..grid.n_points {
            let rs = bloch_state([system[0][k], system[1][k], system[2][k]]);
            let s_sys = von_neumann_entropy(&rs);
            d.system_entropy.push(s_sys);
            d.thermal_fidelity.push(uhlmann_fidelity(&rs, &target)?);
            d.system_energy.push(0.5 * w_sys * system[2][k]);
            d.bath_energy.push(bath_nodes.iter().zip(&bath).map(|(&b, s)| 0.5 * topo.omega[b] * s[2][k]).sum());
            d.interaction_energy.push(ints[k]);
            if heavy {
                d.bath_entropy.push(bath_entropy[k]);
                d.mutual_information.push(s_sys + bath_entropy[k] - total_entropy[k]);
            }
        }
        Some(d)
    } else {
        None
    };

    let (correlator, spectrum) = if cfg.outputs.spectra && !bath_nodes.is_empty() {
        let b = collective_bath_operator(&topo, cfg.correlator_axis)?;
        let c = correlator_from(&mut evolution, &rho0, &b)?;
        let s = spectral_density(&c, &grid)?;
        (Some(c), Some(s))
    } else {
        (None, None)
    };

    let features = fft_features(&system[0], &system[1], &system[2], &grid)?;

    let heff = effective_hamiltonian(&h, &collapse)?;
    let (spacing, k_max, petermann_flags) = if heff.nrows() >= 2 {
        let p = petermann_factors(&heff)?;
        let flags = p.near_ep.iter().zip(&p.ambiguous).filter(|(a, b)| **a || **b).count();
        (deps(&heff)?, p.k_max, flags)
    } else {
        (f64::NAN, f64::NAN, 0)
    };

    let mut flags = Vec::new();
    let params = network.params().copied();
    let mut values = [f64::NAN; 7];
    match &params {
        Some(p) => {
            values[0] = p.j_l12;
            values[1] = p.gamma_l1;
            values[2] = p.gamma_l2;
            values[3] = p.j_sb;
        }
        None => {
            for name in &TARGET_NAMES[..4] {
                flags.push((name.to_string(), "explicit topology has no layered parameter".into()));
            }
        }
    }
    values[4] = backflow.rate;
    values[5] = if spacing > 0.0 && spacing.is_finite() {
        spacing.ln()
    } else {
        flags.push(("log_deps".into(), format!("eigenvalue spacing is {spacing}")));
        f64::NAN
    };
    let sx_spec = magnitude_spectrum(&system[0], &grid)?;
    values[6] = match dominant_peak(&sx_spec) {
        Some((f, _)) => f,
        None => {
            log::warn!("run {run_id}: system <σx> is flat; dominant frequency set to 0");
            flags.push(("dominant_freq".into(), "flat spectrum".into()));
            0.0
        }
    };

    let record = RunRecord {
        run_id,
        label: cfg.label.clone(),
        params,
        features,
        targets: Targets { values, flags },
        backflow,
        deps: spacing,
        k_max,
        petermann_flags,
        files: Vec::new(),
    };
    let series = RunSeries {
        times: grid.times(),
        system,
        bath_nodes,
        bath,
        trace_distance,
        diagnostics,
        correlator,
        spectral_density: spectrum,
    };
    Ok(RunOutput { record, series })
}

/// Parameter draws of run `run_id`: each range in order from a ChaCha8 stream
/// keyed by `(seed, run_id)`, so draws do not depend on scheduling.
pub fn draw_params(cfg: &RunConfig, run_id: usize) -> Result<Network> {
    let Network::Layered { layout, mut params } = cfg.network.clone() else {
        if cfg.randomize.is_empty() {
            return Ok(cfg.network.clone());
        }
        return Err(Error::validation("randomization needs a layered network"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run_id as u64);
    for r in &cfg.randomize {
        let u: f64 = rng.gen();
        let v = if r.min == r.max {
            r.min
        } else if r.log_scale() {
            (r.min.ln() + (r.max.ln() - r.min.ln()) * u).exp()
        } else {
            r.min + (r.max - r.min) * u
        };
        params.set(&r.name, v)?;
    }
    Ok(Network::Layered { layout, params })
}

#[derive(Debug)]
pub struct BatchRun {
    pub run_id: usize,
    pub network: Network,
    pub outcome: Result<RunRecord>,
}

#[derive(Debug)]
pub struct BatchResult {
    pub runs: Vec<BatchRun>,
    /// Successful runs with all targets finite.
    pub dataset: Dataset,
}

impl BatchResult {
    /// `(run_id, reason)` for every run excluded from the dataset.
    pub fn excluded(&self) -> Vec<(usize, String)> {
        self.runs
            .iter()
            .filter_map(|r| match &r.outcome {
                Err(e) => Some((r.run_id, e.to_string())),
                Ok(rec) if !rec.targets.all_finite() => Some((
                    r.run_id,
                    rec.targets.flags.iter().map(|(t, why)| format!("{t}: {why}")).collect::<Vec<_>>().join("; "),
                )),
                Ok(_) => None,
            })
            .collect()
    }
}

/// Runs `n_runs` randomized copies of `cfg` on `workers` threads (0 = rayon default).
/// Only the feature and target computations run; per-run series are dropped.
pub fn run_batch(cfg: &RunConfig, n_runs: usize, workers: usize) -> Result<BatchResult> {
    run_batch_with(cfg, n_runs, workers, |_| {})
}

/// As [`run_batch`], calling `progress` after each finished run.
pub fn run_batch_with(
    cfg: &RunConfig,
    n_runs: usize,
    workers: usize,
    progress: impl Fn(&BatchRun) + Sync,
) -> Result<BatchResult> {
    if n_runs == 0 {
        return Err(Error::validation("n_runs must be at least 1"));
    }
    if cfg.randomize.is_empty() {
        log::warn!("batch without randomize ranges: every run is identical");
    }
    cfg.validate()?;
    let mut run_cfg = cfg.clone();
    run_cfg.outputs.diagnostics = false;
    run_cfg.outputs.spectra = false;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation(format!("cannot start {workers} workers: {e}")))?;
    let runs: Vec<BatchRun> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|run_id| {
                let run = match draw_params(cfg, run_id) {
                    Ok(network) => {
                        let outcome = run_with(&run_cfg, network.clone(), run_id).map(|o| o.record);
                        BatchRun { run_id, network, outcome }
                    }
                    Err(e) => BatchRun { run_id, network: cfg.network.clone(), outcome: Err(e) },
                };
                progress(&run);
                run
            })
            .collect()
    });
    let dataset = dataset_from(&runs)?;
    Ok(BatchResult { runs, dataset })
}

fn dataset_from(runs: &[BatchRun]) -> Result<Dataset> {
    let good: Vec<&RunRecord> = runs
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .filter(|rec| rec.targets.all_finite())
        .collect();
    let width = good.first().map_or(0, |r| r.features.values.len());
    let features = DMatrix::from_fn(good.len(), width, |r, c| good[r].features.values[c]);
    let targets = DMatrix::from_fn(good.len(), TARGET_NAMES.len(), |r, c| good[r].targets.values[c]);
    Dataset::new(
        good.iter().map(|r| r.run_id).collect(),
        features,
        targets,
        TARGET_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}
