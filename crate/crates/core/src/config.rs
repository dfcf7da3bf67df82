//! Run configuration files (TOML).
//!
//! A configuration either starts from a built-in preset or layout and overrides
//! named parameters (a bare layout starts from the `case1-dissipative` block), or
//! spells out a topology node by node:
//!
//! ```toml
//! preset = "case1-dissipative"
//! grid = "short"
//! seed = 7
//!
//! [params]
//! J_L12 = 0.1
//!
//! [randomize]
//! J_L12 = [0.001, 1.0]
//! gamma_L1 = [0.001, 0.3]
//! ```
//!
//! ```toml
//! n_qubits = 3
//! system_index = 0
//! omega = 1.0              # or one value per node
//! beta = 1.0
//! edges = [[0, 1, 0.2], [0, 2, 0.02, 0.02, 0.01]]   # [i, j, J] or [i, j, Jx, Jy, Jz]
//! dephasing = [[0, 0.005]]
//! thermal = [[1, 0.005], [2, 0.005]]
//! grid = { t_start = 0.0, t_end = 100.0, n_points = 1001 }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::algebra::{BathTopology, Coupling, Edge, PauliAxis};
use crate::error::{Error, Result};
use crate::lindblad::TimeGrid;
use crate::presets::{find_preset, GridName, Layout, NetworkParams, PARAM_NAMES};

/// Where the network comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Layered { layout: Layout, params: NetworkParams },
    Explicit(BathTopology),
}

impl Network {
    pub fn topology(&self) -> Result<BathTopology> {
        match self {
            Network::Layered { layout, params } => params.topology(*layout),
            Network::Explicit(t) => {
                t.validate()?;
                Ok(t.clone())
            }
        }
    }

    pub fn params(&self) -> Option<&NetworkParams> {
        match self {
            Network::Layered { params, .. } => Some(params),
            Network::Explicit(_) => None,
        }
    }
}

/// Which artifacts a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// Observable series of the system and bath qubits.
    pub observables: bool,
    /// Bath correlator and spectral density.
    pub spectra: bool,
    pub features: bool,
    /// Entropy, energy and trace-distance series.
    pub diagnostics: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { observables: true, spectra: true, features: true, diagnostics: true }
    }
}

/// Uniform draw range for one parameter. `gamma_*` parameters are drawn
/// uniformly in `log γ`, all others on a linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Range {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn log_scale(&self) -> bool {
        self.name.starts_with("gamma")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Preset name, or `"custom"`.
    pub label: String,
    pub network: Network,
    pub grid: TimeGrid,
    pub seed: u64,
    pub outputs: Outputs,
    pub randomize: Vec<Range>,
    /// Collective bath operator used for the correlator.
    pub correlator_axis: PauliAxis,
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let p = find_preset(name)?;
        Ok(RunConfig {
            label: p.name.to_string(),
            network: Network::Layered { layout: p.layout, params: p.params },
            grid: p.grid.grid(),
            seed: 0,
            outputs: Outputs::default(),
            randomize: Vec::new(),
            correlator_axis: PauliAxis::X,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.topology()?;
        TimeGrid::new(self.grid.t_start, self.grid.t_end, self.grid.n_points)?;
        for r in &self.randomize {
            if !PARAM_NAMES.contains(&r.name.as_str()) {
                return Err(Error::validation(format!("cannot randomize unknown parameter '{}'", r.name)));
            }
            if self.network.params().is_none() {
                return Err(Error::validation(format!(
                    "randomize.{} needs a preset or layout; explicit topologies have no named parameters",
                    r.name
                )));
            }
            if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
                return Err(Error::validation(format!("randomize.{}: need min <= max, got [{}, {}]", r.name, r.min, r.max)));
            }
            if r.log_scale() && r.min <= 0.0 && r.min != r.max {
                return Err(Error::validation(format!("randomize.{}: log-uniform range needs min > 0", r.name)));
            }
            if r.log_scale() && r.min < 0.0 {
                return Err(Error::validation(format!("randomize.{}: gamma must be non-negative", r.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    fn value(&self) -> f64 {
        match *self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OmegaSpec {
    Uniform(Num),
    PerNode(Vec<Num>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridTable {
    t_start: Num,
    t_end: Num,
    n_points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GridSpec {
    Named(String),
    Explicit(GridTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    layout: Option<String>,
    params: Option<BTreeMap<String, Num>>,
    n_qubits: Option<usize>,
    system_index: Option<usize>,
    omega: Option<OmegaSpec>,
    beta: Option<Num>,
    edges: Option<Vec<Vec<Num>>>,
    dephasing: Option<Vec<(usize, Num)>>,
    thermal: Option<Vec<(usize, Num)>>,
    grid: Option<GridSpec>,
    seed: Option<u64>,
    randomize: Option<BTreeMap<String, (Num, Num)>>,
    outputs: Option<Outputs>,
    correlator_axis: Option<String>,
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
    let explicit_keys = [
        ("n_qubits", raw.n_qubits.is_some()),
        ("system_index", raw.system_index.is_some()),
        ("omega", raw.omega.is_some()),
        ("beta", raw.beta.is_some()),
        ("edges", raw.edges.is_some()),
        ("dephasing", raw.dephasing.is_some()),
        ("thermal", raw.thermal.is_some()),
    ];
    let layered_base = match (&raw.preset, &raw.layout) {
        (Some(_), Some(_)) => return Err(Error::validation("give either preset or layout, not both")),
        (Some(p), None) => {
            let p = find_preset(p)?;
            Some((p.name.to_string(), p.layout, p.params, Some(p.grid)))
        }
        (None, Some(l)) => {
            let layout = Layout::parse(l)?;
            let params = find_preset("case1-dissipative")?.params;
            Some((format!("layout:{}", layout.name()), layout, params, None))
        }
        (None, None) => None,
    };

    let (label, network, default_grid) = if let Some((label, layout, mut params, grid)) = layered_base {
        if let Some((key, _)) = explicit_keys.iter().find(|(_, set)| *set) {
            return Err(Error::validation(format!("key '{key}' cannot be combined with a preset or layout")));
        }
        for (name, v) in raw.params.iter().flatten() {
            params.set(name, v.value()).map_err(|_| {
                Error::validation(format!("params.{name}: unknown parameter (known: {})", PARAM_NAMES.join(", ")))
            })?;
        }
        (label, Network::Layered { layout, params }, grid)
    } else {
        if raw.params.is_some() {
            return Err(Error::validation("[params] needs a preset or layout"));
        }
        let n = raw
            .n_qubits
            .ok_or_else(|| Error::validation("missing key 'n_qubits' (or 'preset'/'layout')"))?;
        let omega = match raw.omega {
            None => vec![1.0; n],
            Some(OmegaSpec::Uniform(w)) => vec![w.value(); n],
            Some(OmegaSpec::PerNode(v)) => v.iter().map(Num::value).collect(),
        };
        let mut edges = Vec::new();
        for (k, e) in raw.edges.iter().flatten().enumerate() {
            let idx = |x: &Num| -> Result<usize> {
                match *x {
                    Num::Int(i) if i >= 0 => Ok(i as usize),
                    _ => Err(Error::validation(format!("edges[{k}]: node ids must be non-negative integers"))),
                }
            };
            let coupling = match e.len() {
                3 => Coupling::isotropic(e[2].value()),
                5 => Coupling::anisotropic(e[2].value(), e[3].value(), e[4].value()),
                l => return Err(Error::validation(format!("edges[{k}] has {l} entries; expected [i, j, J] or [i, j, Jx, Jy, Jz]"))),
            };
            edges.push(Edge { i: idx(&e[0])?, j: idx(&e[1])?, coupling });
        }
        let rates = |v: Option<Vec<(usize, Num)>>| v.unwrap_or_default().into_iter().map(|(s, g)| (s, g.value())).collect();
        let topo = BathTopology {
            n_qubits: n,
            system_index: raw.system_index.unwrap_or(0),
            omega,
            edges,
            dephasing: rates(raw.dephasing),
            thermal: rates(raw.thermal),
            beta: raw.beta.map(|b| b.value()).unwrap_or(1.0),
        };
        ("custom".to_string(), Network::Explicit(topo), None)
    };

    let grid = match raw.grid {
        Some(GridSpec::Named(s)) => GridName::parse(&s)?.grid(),
        Some(GridSpec::Explicit(g)) => TimeGrid::new(g.t_start.value(), g.t_end.value(), g.n_points)?,
        None => default_grid.unwrap_or(GridName::Short).grid(),
    };
    let correlator_axis = match raw.correlator_axis.as_deref() {
        None | Some("x") => PauliAxis::X,
        Some("y") => PauliAxis::Y,
        Some(other) => return Err(Error::validation(format!("correlator_axis must be \"x\" or \"y\", got \"{other}\""))),
    };
    let randomize = raw
        .randomize
        .unwrap_or_default()
        .into_iter()
        .map(|(name, (a, b))| Range { name, min: a.value(), max: b.value() })
        .collect();
    let cfg = RunConfig {
        label,
        network,
        grid,
        seed: raw.seed.unwrap_or(0),
        outputs: raw.outputs.unwrap_or_default(),
        randomize,
        correlator_axis,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Resolves a command-line target: an existing file is parsed as a
/// configuration, anything else is looked up as a preset name.
pub fn resolve(target: &str) -> Result<RunConfig> {
    let p = Path::new(target);
    if p.is_file() {
        parse_config(p)
    } else {
        RunConfig::from_preset(target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_resolves() {
        let c = parse_config_str("preset = \"triangle-weak\"").unwrap();
        let t = c.network.topology().unwrap();
        assert_eq!(t.n_qubits, 3);
        assert_eq!(t.edges.iter().map(|e| e.coupling).collect::<Vec<_>>(), vec![Coupling::isotropic(0.2); 3]);
        assert_eq!(t.dephasing, vec![(0, 0.005)]);
        assert_eq!(t.thermal, vec![(1, 0.005), (2, 0.005)]);
        assert_eq!(c.grid, TimeGrid::long());

        let c = parse_config_str("preset = \"case1-dissipative\"").unwrap();
        let p = c.network.params().unwrap();
        assert_eq!((p.j_l1, p.j_l12, p.gamma_l1, p.gamma_l2), (0.05, 0.02, 0.3, 0.3));
    }

    #[test]
    fn overrides_and_randomize() {
        let text = r#"
preset = "case2-retained"
grid = "long"
seed = 11
[params]
J_L12 = 0.4
[randomize]
gamma_L1 = [0.001, 0.3]
J_sb = [0, 1]
"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.network.params().unwrap().j_l12, 0.4);
        assert_eq!(c.seed, 11);
        assert_eq!(c.grid, TimeGrid::long());
        assert_eq!(c.randomize.len(), 2);
        assert!(c.randomize.iter().any(|r| r.name == "gamma_L1" && r.log_scale()));
    }

    #[test]
    fn explicit_topology() {
        let text = r#"
n_qubits = 3
system_index = 1
omega = [1.0, 1.5, 2]
beta = 2
edges = [[0, 1, 0.2], [1, 2, 0.1, 0.1, 0.05]]
dephasing = [[1, 0.01]]
thermal = [[0, 0.02], [2, 0.02]]
grid = { t_start = 0, t_end = 10.0, n_points = 101 }
[outputs]
diagnostics = false
"#;
        let c = parse_config_str(text).unwrap();
        let t = c.network.topology().unwrap();
        assert_eq!(t.system_index, 1);
        assert_eq!(t.omega, vec![1.0, 1.5, 2.0]);
        assert_eq!(t.edges[1].coupling, Coupling::anisotropic(0.1, 0.1, 0.05));
        assert_eq!(c.grid.n_points, 101);
        assert!(!c.outputs.diagnostics && c.outputs.features);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str("preset = \"triangle-weak\"\nbogus_key = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = parse_config_str("preset = \"triangle-weak\"\n[outputs]\nplots = true\n").unwrap_err();
        assert!(err.to_string().contains("plots"), "{err}");
        let err = parse_config_str("preset = \"triangle-weak\"\n[params]\nJ_xx = 1\n").unwrap_err();
        assert!(err.to_string().contains("J_xx"), "{err}");
    }

    #[test]
    fn negative_gamma_is_named() {
        let err = parse_config_str("n_qubits = 2\nthermal = [[1, -0.1]]\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = parse_config_str("preset = \"case1-dissipative\"\n[params]\ngamma_L2 = -1\n").unwrap_err();
        assert!(err.to_string().contains("gamma_L2"), "{err}");
    }

    #[test]
    fn malformed_and_conflicting() {
        assert!(matches!(parse_config_str("preset = ").unwrap_err(), Error::Parse(_)));
        assert!(parse_config_str("preset = \"triangle-weak\"\nn_qubits = 3\n").is_err());
        assert!(parse_config_str("preset = \"triangle-weak\"\n[randomize]\nJ_sb = [1, 0]\n").is_err());
        assert!(parse_config_str("n_qubits = 2\n[randomize]\nJ_sb = [0, 1]\n").is_err());
        assert!(parse_config_str("preset = \"triangle-weak\"\n[randomize]\ngamma_L1 = [0, 0.3]\n").is_err());
        assert!(parse_config_str("preset = \"nope\"").is_err());
        assert!(parse_config_str("n_qubits = 2\nedges = [[0, 1]]\n").is_err());
        assert!(parse_config_str("n_qubits = 2\ngrid = \"medium\"\n").is_err());
    }
}
