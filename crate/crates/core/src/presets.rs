//! Built-in network layouts and named parameter sets.

use crate::algebra::{BathTopology, Coupling, Edge};
use crate::error::{Error, Result};
use crate::lindblad::TimeGrid;

/// Connectivity pattern of a layered bath network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// System 0 coupled to bath qubits 1 and 2, which are coupled to each other.
    Triangle,
    /// Triangle plus a second bath layer (3, 4, 5) below qubits 1 and 2.
    TwoLayer,
    /// Two system qubits (0, 1) sharing the middle first-layer bath qubit.
    /// First layer 2, 3, 4; second layer 5, 6.
    TwoLogical,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Triangle => "triangle",
            Layout::TwoLayer => "two-layer",
            Layout::TwoLogical => "two-logical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "triangle" => Ok(Layout::Triangle),
            "two-layer" => Ok(Layout::TwoLayer),
            "two-logical" => Ok(Layout::TwoLogical),
            other => Err(Error::validation(format!("unknown layout '{other}'"))),
        }
    }

    pub fn n_qubits(self) -> usize {
        match self {
            Layout::Triangle => 3,
            Layout::TwoLayer => 6,
            Layout::TwoLogical => 7,
        }
    }
}

/// Anisotropy factors used on system–bath edges of the layered networks.
pub const SB_ANISOTROPY: (f64, f64, f64) = (0.1, 0.1, 0.05);

/// Parameters of a layered network. Couplings are per edge class; rates are
/// per node class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    pub omega: f64,
    pub beta: f64,
    pub j_sb: f64,
    /// Per-axis factors multiplying `j_sb` on system–bath edges; `None` is isotropic.
    pub sb_anisotropy: Option<(f64, f64, f64)>,
    pub j_l1: f64,
    pub j_l12: f64,
    pub j_l2: f64,
    pub gamma_sys: f64,
    pub gamma_l1: f64,
    pub gamma_l2: f64,
}

/// Names accepted by [`NetworkParams::set`] and the randomizer.
pub const PARAM_NAMES: [&str; 9] = ["omega", "beta", "J_sb", "J_L1", "J_L12", "J_L2", "gamma_sys", "gamma_L1", "gamma_L2"];

impl NetworkParams {
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "omega" => self.omega,
            "beta" => self.beta,
            "J_sb" => self.j_sb,
            "J_L1" => self.j_l1,
            "J_L12" => self.j_l12,
            "J_L2" => self.j_l2,
            "gamma_sys" => self.gamma_sys,
            "gamma_L1" => self.gamma_l1,
            "gamma_L2" => self.gamma_l2,
            other => return Err(Error::validation(format!("unknown parameter '{other}'"))),
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "omega" => &mut self.omega,
            "beta" => &mut self.beta,
            "J_sb" => &mut self.j_sb,
            "J_L1" => &mut self.j_l1,
            "J_L12" => &mut self.j_l12,
            "J_L2" => &mut self.j_l2,
            "gamma_sys" => &mut self.gamma_sys,
            "gamma_L1" => &mut self.gamma_l1,
            "gamma_L2" => &mut self.gamma_l2,
            other => return Err(Error::validation(format!("unknown parameter '{other}'"))),
        };
        *slot = value;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for name in PARAM_NAMES {
            let v = self.get(name)?;
            if !v.is_finite() {
                return Err(Error::validation(format!("{name} must be finite")));
            }
            if name.starts_with("gamma") && v < 0.0 {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn sb_coupling(&self) -> Coupling {
        match self.sb_anisotropy {
            Some((x, y, z)) => Coupling::anisotropic(self.j_sb * x, self.j_sb * y, self.j_sb * z),
            None => Coupling::isotropic(self.j_sb),
        }
    }

    pub fn topology(&self, layout: Layout) -> Result<BathTopology> {
        self.validate()?;
        let n = layout.n_qubits();
        let mut t = BathTopology::uniform(n, self.omega, self.beta);
        let sb = self.sb_coupling();
        let e = |i, j, c: Coupling| Edge { i, j, coupling: c };
        let iso = Coupling::isotropic;
        match layout {
            Layout::Triangle => {
                t.edges = vec![e(0, 1, sb), e(0, 2, sb), e(1, 2, iso(self.j_l1))];
                t.dephasing = vec![(0, self.gamma_sys)];
                t.thermal = vec![(1, self.gamma_l1), (2, self.gamma_l1)];
            }
            Layout::TwoLayer => {
                t.edges = vec![
                    e(0, 1, sb),
                    e(0, 2, sb),
                    e(1, 2, iso(self.j_l1)),
                    e(1, 3, iso(self.j_l12)),
                    e(1, 4, iso(self.j_l12)),
                    e(2, 4, iso(self.j_l12)),
                    e(2, 5, iso(self.j_l12)),
                    e(3, 4, iso(self.j_l2)),
                    e(4, 5, iso(self.j_l2)),
                ];
                t.dephasing = vec![(0, self.gamma_sys)];
                t.thermal = vec![(1, self.gamma_l1), (2, self.gamma_l1), (3, self.gamma_l2), (4, self.gamma_l2), (5, self.gamma_l2)];
            }
            Layout::TwoLogical => {
                t.edges = vec![
                    e(0, 2, sb),
                    e(0, 3, sb),
                    e(1, 3, sb),
                    e(1, 4, sb),
                    e(2, 3, iso(self.j_l1)),
                    e(3, 4, iso(self.j_l1)),
                    e(2, 5, iso(self.j_l12)),
                    e(3, 5, iso(self.j_l12)),
                    e(3, 6, iso(self.j_l12)),
                    e(4, 6, iso(self.j_l12)),
                    e(5, 6, iso(self.j_l2)),
                ];
                t.dephasing = vec![(0, self.gamma_sys), (1, self.gamma_sys)];
                t.thermal = vec![(2, self.gamma_l1), (3, self.gamma_l1), (4, self.gamma_l1), (5, self.gamma_l2), (6, self.gamma_l2)];
            }
        }
        t.validate()?;
        Ok(t)
    }
}

/// Named grid choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridName {
    Short,
    Long,
}

impl GridName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(GridName::Short),
            "long" => Ok(GridName::Long),
            other => Err(Error::validation(format!("unknown grid '{other}' (expected short or long)"))),
        }
    }

    pub fn grid(self) -> TimeGrid {
        match self {
            GridName::Short => TimeGrid::short(),
            GridName::Long => TimeGrid::long(),
        }
    }
}

/// Memory regime a preset is meant to exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Thermalizing,
    Markovian,
    Intermediate,
    NonMarkovian,
    Mixed,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Thermalizing => "thermalizing",
            Regime::Markovian => "markovian",
            Regime::Intermediate => "intermediate",
            Regime::NonMarkovian => "non-markovian",
            Regime::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub layout: Layout,
    pub regime: Regime,
    pub params: NetworkParams,
    pub grid: GridName,
}

impl Preset {
    pub fn topology(&self) -> Result<BathTopology> {
        self.params.topology(self.layout)
    }
}

const BASE: NetworkParams = NetworkParams {
    omega: 1.0,
    beta: 1.0,
    j_sb: 1.0,
    sb_anisotropy: Some(SB_ANISOTROPY),
    j_l1: 0.0,
    j_l12: 0.0,
    j_l2: 0.0,
    gamma_sys: 0.005,
    gamma_l1: 0.0,
    gamma_l2: 0.0,
};

/// Memory-category runs share `J_sb = J_L2 = 1`, `T = 0.5`.
const CATEGORY: NetworkParams = NetworkParams { beta: 2.0, j_l2: 1.0, ..BASE };

const fn layered(j_l1: f64, j_l12: f64, j_l2: f64, gamma_l1: f64, gamma_l2: f64) -> NetworkParams {
    NetworkParams { j_l1, j_l12, j_l2, gamma_l1, gamma_l2, ..BASE }
}

const fn category(j_l1: f64, j_l12: f64, gamma_l1: f64, gamma_l2: f64) -> NetworkParams {
    NetworkParams { j_l1, j_l12, gamma_l1, gamma_l2, ..CATEGORY }
}

/// Rate used where a case only says the dissipation is low.
pub const LOW_GAMMA: f64 = 0.001;

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "triangle-weak",
        description: "three-qubit triangle in the weak-coupling regime; thermalizes the system qubit",
        layout: Layout::Triangle,
        regime: Regime::Thermalizing,
        params: NetworkParams {
            omega: 1.0,
            beta: 1.0,
            j_sb: 0.2,
            sb_anisotropy: None,
            j_l1: 0.2,
            j_l12: 0.0,
            j_l2: 0.0,
            gamma_sys: 0.005,
            gamma_l1: 0.005,
            gamma_l2: 0.0,
        },
        grid: GridName::Long,
    },
    Preset {
        name: "case1-dissipative",
        description: "memory category 1: strong dissipation in both layers, inter-layer coupling on",
        layout: Layout::TwoLayer,
        regime: Regime::Markovian,
        params: category(0.05, 0.02, 0.3, 0.3),
        grid: GridName::Short,
    },
    Preset {
        name: "case2-retained",
        description: "memory category 2: inter-layer coupling suppressed, memory retained in layer 1",
        layout: Layout::TwoLayer,
        regime: Regime::NonMarkovian,
        params: category(0.05, 0.001, 0.02, 0.02),
        grid: GridName::Short,
    },
    Preset {
        name: "case3-transferred",
        description: "memory category 3: strong inter-layer coupling, weak layer-2 dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Intermediate,
        params: category(0.05, 0.75, 0.02, 0.001),
        grid: GridName::Short,
    },
    Preset {
        name: "correlator-markovian",
        description: "dense, strongly damped bath: broad single-hump spectral density (J_L1 = 1.0; an alternative listing of this block gives 0.8)",
        layout: Layout::TwoLayer,
        regime: Regime::Markovian,
        params: layered(1.0, 0.8, 1.0, 0.3, 0.3),
        grid: GridName::Long,
    },
    Preset {
        name: "correlator-non-markovian",
        description: "sparse, weakly damped bath: sharply peaked spectral density",
        layout: Layout::TwoLayer,
        regime: Regime::NonMarkovian,
        params: layered(0.1, 0.05, 0.1, 0.001, 0.001),
        grid: GridName::Long,
    },
    Preset {
        name: "correlator-intermediate",
        description: "intermediate bath between the two correlator limits (rates 0.15; an alternative listing of this block gives 0.1)",
        layout: Layout::TwoLayer,
        regime: Regime::Intermediate,
        params: layered(0.5, 0.15, 0.5, 0.15, 0.15),
        grid: GridName::Long,
    },
    Preset {
        name: "backflow-markovian",
        description: "fast bath relaxation; trace-distance backflow close to zero",
        layout: Layout::TwoLayer,
        regime: Regime::Markovian,
        params: layered(0.365, 0.041, 0.844, 0.1961, 0.1858),
        grid: GridName::Long,
    },
    Preset {
        name: "backflow-non-markovian",
        description: "slow bath relaxation and a nearly isolated layer 2; large backflow",
        layout: Layout::TwoLayer,
        regime: Regime::NonMarkovian,
        params: layered(0.407, 0.043, 0.010, 0.0030, 0.0063),
        grid: GridName::Long,
    },
    Preset {
        name: "mixed-1-layer1-memory",
        description: "strong layer-1 coupling, layer 2 nearly detached; low dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Mixed,
        params: NetworkParams { beta: 2.0, ..layered(1.0, 0.001, 0.001, LOW_GAMMA, LOW_GAMMA) },
        grid: GridName::Short,
    },
    Preset {
        name: "mixed-2a-uniform",
        description: "uniformly strong couplings with weak dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Mixed,
        params: NetworkParams { beta: 2.0, ..layered(1.0, 1.0, 1.0, 0.01, 0.01) },
        grid: GridName::Short,
    },
    Preset {
        name: "mixed-2b-damped",
        description: "nearly uncoupled bath with strong dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Mixed,
        params: NetworkParams { beta: 2.0, ..layered(0.0001, 0.001, 0.001, 0.3, 0.3) },
        grid: GridName::Short,
    },
    Preset {
        name: "mixed-3a-layer2-active",
        description: "memory passed into an active layer 2; very weak dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Mixed,
        params: NetworkParams { beta: 2.0, ..layered(0.05, 1.0, 1.0, 0.0001, 0.0001) },
        grid: GridName::Short,
    },
    Preset {
        name: "mixed-3b-layer2-passive",
        description: "memory passed into a weakly coupled layer 2; very weak dissipation",
        layout: Layout::TwoLayer,
        regime: Regime::Mixed,
        params: NetworkParams { beta: 2.0, ..layered(0.05, 1.0, 0.001, 0.0001, 0.0001) },
        grid: GridName::Short,
    },
    Preset {
        name: "two-logical",
        description: "two system qubits sharing a first-layer bath qubit, with a common second layer",
        layout: Layout::TwoLogical,
        regime: Regime::Mixed,
        params: layered(0.5, 0.15, 0.5, 0.1, 0.1),
        grid: GridName::Long,
    },
];

pub fn find_preset(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::validation(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::PauliAxis;

    #[test]
    fn every_preset_builds_a_valid_topology() {
        for p in PRESETS {
            let t = p.topology().unwrap();
            assert_eq!(t.n_qubits, p.layout.n_qubits(), "{}", p.name);
            assert!(t.bath_nodes().len() >= 2);
        }
        let names: std::collections::HashSet<_> = PRESETS.iter().map(|p| p.name).collect();
        assert_eq!(names.len(), PRESETS.len());
    }

    #[test]
    fn two_layer_edge_classes() {
        let p = find_preset("backflow-non-markovian").unwrap();
        let t = p.topology().unwrap();
        assert_eq!(t.edges.len(), 9);
        let c01 = t.edges.iter().find(|e| (e.i, e.j) == (0, 1)).unwrap().coupling;
        assert_eq!(c01.get(PauliAxis::X), 0.1);
        assert_eq!(c01.get(PauliAxis::Z), 0.05);
        let c34 = t.edges.iter().find(|e| (e.i, e.j) == (3, 4)).unwrap().coupling;
        assert_eq!(c34, Coupling::isotropic(0.010));
        assert_eq!(t.thermal, vec![(1, 0.0030), (2, 0.0030), (3, 0.0063), (4, 0.0063), (5, 0.0063)]);
        assert_eq!(t.dephasing, vec![(0, 0.005)]);
    }

    #[test]
    fn triangle_block() {
        let p = find_preset("triangle-weak").unwrap();
        let t = p.topology().unwrap();
        assert_eq!(t.omega, vec![1.0; 3]);
        assert_eq!(t.beta, 1.0);
        assert!(t.edges.iter().all(|e| e.coupling == Coupling::isotropic(0.2)));
        assert_eq!(t.dephasing, vec![(0, 0.005)]);
        assert_eq!(t.thermal, vec![(1, 0.005), (2, 0.005)]);
        let c1 = find_preset("case1-dissipative").unwrap();
        assert_eq!((c1.params.j_l1, c1.params.j_l12, c1.params.gamma_l1, c1.params.gamma_l2), (0.05, 0.02, 0.3, 0.3));
        assert_eq!(c1.params.beta, 2.0);
    }

    #[test]
    fn parameter_access_round_trips() {
        let mut p = BASE;
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            p.set(name, k as f64 + 0.5).unwrap();
            assert_eq!(p.get(name).unwrap(), k as f64 + 0.5);
        }
        assert!(p.set("J_xx", 1.0).is_err());
        let mut bad = BASE;
        bad.gamma_l1 = -0.1;
        let err = bad.topology(Layout::TwoLayer).unwrap_err().to_string();
        assert!(err.contains("gamma_L1"), "{err}");
        assert!(find_preset("nope").is_err());
    }
}
