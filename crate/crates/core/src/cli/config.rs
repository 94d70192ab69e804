//! Experiment configuration.
//!
//! ```text
//! [model]
//! epsilon = 0.1
//! mu2 = 1.0        # default 1
//! lambda = 0.0     # default 0
//! z = 1.0          # default 1
//! n_sites = 5
//!
//! [grid]
//! n_points = 121   # default: three points per kernel width
//! phi_max = 6.0    # default: semiclassical truncation
//!
//! [states]
//! ket = "ground"   # ground | uniform | gaussian:<width>
//! bra = "ground"
//!
//! [experiment]
//! levels = 4
//! eps_list = [0.2, 0.1, 0.05]
//! pairs = [[0.2, 1.2], [1.2, 0.2]]
//! product = "classical"   # classical | quantum | quantum-antiordered
//! observables = ["phi(1)", "mul(dfwd(1),dfwd(1))"]
//! ```
//!
//! Every value is a TOML literal. Unknown sections and keys are rejected.

use serde::Deserialize;

use crate::lattice::{FieldGrid, ModelParams, Potential};
use crate::states::BoundaryKind;
use crate::transfer::coupling_number;

/// Points per kernel width for automatically sized grids.
pub const GRID_RESOLUTION: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub states: StatesSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    #[serde(default = "one")]
    pub mu2: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one")]
    pub z: f64,
    pub n_sites: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_points: Option<usize>,
    pub phi_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesSection {
    #[serde(default = "ground")]
    pub ket: String,
    #[serde(default = "ground")]
    pub bra: String,
}

fn ground() -> String {
    "ground".into()
}

impl Default for StatesSection {
    fn default() -> Self {
        Self { ket: ground(), bra: ground() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub levels: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    pub pairs: Option<Vec<[f64; 2]>>,
    pub product: Option<String>,
    pub observables: Option<Vec<String>>,
}

/// A configuration problem, located by line or by field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("config field `{field}`: {msg}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductKind {
    Classical,
    Quantum,
    QuantumAntiordered,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" at line {line}")
                })
                .unwrap_or_default();
            ConfigError(format!("config error{at}: {}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.epsilon > 0.0 && m.epsilon.is_finite()) {
            return Err(field_error("model.epsilon", "must be a positive number"));
        }
        if !(m.z > 0.0 && m.z.is_finite()) {
            return Err(field_error("model.z", "must be a positive number"));
        }
        if !(m.lambda >= 0.0 && m.lambda.is_finite()) {
            return Err(field_error("model.lambda", "must be a non-negative number"));
        }
        if !m.mu2.is_finite() {
            return Err(field_error("model.mu2", "must be finite"));
        }
        if m.n_sites == 0 {
            return Err(field_error("model.n_sites", "must be at least 1"));
        }
        if let Some(n) = self.grid.n_points {
            if n < 2 {
                return Err(field_error("grid.n_points", "must be at least 2"));
            }
        }
        if let Some(p) = self.grid.phi_max {
            if !(p > 0.0 && p.is_finite()) {
                return Err(field_error("grid.phi_max", "must be a positive number"));
            }
        }
        self.ket()?;
        self.bra()?;
        if let Some(list) = &self.experiment.eps_list {
            if list.is_empty() {
                return Err(field_error("experiment.eps_list", "must not be empty"));
            }
            if list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(field_error("experiment.eps_list", "entries must be positive"));
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(field_error("experiment.eps_list", "must be strictly decreasing"));
            }
        }
        if self.experiment.levels == Some(0) {
            return Err(field_error("experiment.levels", "must be at least 1"));
        }
        self.product()?;
        Ok(())
    }

    pub fn ket(&self) -> Result<BoundaryKind, ConfigError> {
        parse_state(&self.states.ket).map_err(|e| field_error("states.ket", e))
    }

    pub fn bra(&self) -> Result<BoundaryKind, ConfigError> {
        parse_state(&self.states.bra).map_err(|e| field_error("states.bra", e))
    }

    pub fn product(&self) -> Result<ProductKind, ConfigError> {
        match self.experiment.product.as_deref() {
            None | Some("classical") => Ok(ProductKind::Classical),
            Some("quantum") => Ok(ProductKind::Quantum),
            Some("quantum-antiordered") => Ok(ProductKind::QuantumAntiordered),
            Some(other) => Err(field_error(
                "experiment.product",
                format!("unknown product `{other}` (classical, quantum, quantum-antiordered)"),
            )),
        }
    }

    pub fn potential(&self) -> Potential {
        Potential::Quartic { mu2: self.model.mu2, lambda: self.model.lambda }
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        self.params_with_epsilon(self.model.epsilon)
    }

    pub fn params_with_epsilon(&self, eps: f64) -> Result<ModelParams, ConfigError> {
        ModelParams::uniform(eps, self.potential(), self.model.z, self.model.n_sites)
            .map_err(|e| field_error("model", e))
    }

    /// The configured grid, or one that resolves the kernel width at `eps`.
    /// With `refine`, an explicit `n_points` is raised until the coupling
    /// rule holds.
    pub fn grid_for(&self, params: &ModelParams, refine: bool) -> Result<FieldGrid, ConfigError> {
        let phi_max = match self.grid.phi_max {
            Some(p) => p,
            None => params.default_phi_max().map_err(|e| field_error("grid.phi_max", e))?,
        };
        let eps = params.epsilon();
        let z = self.model.z;
        let resolved = FieldGrid::resolving(phi_max, (eps / z).sqrt(), GRID_RESOLUTION)
            .map_err(|e| field_error("grid", e))?;
        match self.grid.n_points {
            None => Ok(resolved),
            Some(n) => {
                let grid = FieldGrid::symmetric(n, phi_max).map_err(|e| field_error("grid", e))?;
                if refine && coupling_number(eps, z, grid.spacing()) > 1.0 {
                    Ok(resolved)
                } else {
                    Ok(grid)
                }
            }
        }
    }
}

fn parse_state(text: &str) -> Result<BoundaryKind, String> {
    match text.trim() {
        "ground" => Ok(BoundaryKind::Ground),
        "uniform" => Ok(BoundaryKind::Uniform),
        other => {
            let width = other
                .strip_prefix("gaussian:")
                .ok_or_else(|| format!("unknown state `{other}` (ground, uniform, gaussian:<width>)"))?;
            let width: f64 = width.trim().parse().map_err(|_| format!("bad gaussian width `{width}`"))?;
            if width > 0.0 && width.is_finite() {
                Ok(BoundaryKind::Gaussian { width })
            } else {
                Err(format!("gaussian width {width} must be positive"))
            }
        }
    }
}
