//! Run configuration: one TOML file describing the instance, optimizer,
//! oracle, and output settings, with dotted-path overrides from the command
//! line. Admissibility of the physical data is enforced at load time.

use crate::grid::{Field, Grid};
use crate::objective::{BoxBounds, CostWeights};
use crate::optimizer::OptimizerConfig;
use crate::potential::PotentialParams;
use crate::problem::{Control, ProblemSpec, Targets};
use crate::state::{InitialData, PhysParams};
use crate::verify::OracleConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config validation failed: {0}")]
    Invalid(String),
    #[error("bad --set override '{0}': {1}")]
    BadOverride(String, String),
}

fn default_mode() -> u32 {
    1
}

/// Spatial profile used for initial data, coefficients, targets, and
/// controls: either a constant or amplitude·cos(mode·π·x/L) + mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileConfig {
    Constant {
        value: f64,
    },
    Cosine {
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
}

impl ProfileConfig {
    pub fn field(&self, grid: &Grid) -> Field {
        match *self {
            ProfileConfig::Constant { value } => Field::constant(grid.n_cells(), value),
            ProfileConfig::Cosine { amplitude, mean, mode } => Field::from_fn(grid, |x| {
                mean + amplitude
                    * (mode as f64 * std::f64::consts::PI * x / grid.length()).cos()
            }),
        }
    }

    pub fn control(&self, grid: &Grid, n_steps: usize) -> Control {
        let slice = self.field(grid);
        Control { slices: vec![slice; n_steps] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub length: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSection {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicsSection {
    pub tau: f64,
    pub gamma: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSection {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSection {
    pub phi0: ProfileConfig,
    pub w0: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetsSection {
    /// Tracking profile, held fixed in time; the terminal target is the
    /// same profile.
    pub phi_q: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSection {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsSection {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSection {
    /// Defaults to 1/b3 when absent.
    #[serde(default)]
    pub alpha0: Option<f64>,
    pub max_iters: usize,
    pub stat_tol: f64,
    pub armijo_factor: f64,
    pub armijo_sigma: f64,
    pub u_init: ProfileConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSection {
    pub fd_steps: Vec<f64>,
    pub richardson: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub time: TimeSection,
    pub physics: PhysicsSection,
    pub potential: PotentialSection,
    pub initial: InitialSection,
    pub targets: TargetsSection,
    pub cost: CostSection,
    pub bounds: BoundsSection,
    /// Control used by the plain forward-solve command.
    pub control: ProfileConfig,
    pub optimizer: OptimizerSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    /// The desk-scale tracking instance.
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSection { length: 1.0, n_cells: 128 },
            time: TimeSection { horizon: 0.5, n_steps: 256 },
            physics: PhysicsSection {
                tau: 0.1,
                gamma: ProfileConfig::Constant { value: 0.5 },
            },
            potential: PotentialSection { c1: 1.0, c2: 2.5 },
            initial: InitialSection {
                phi0: ProfileConfig::Cosine { amplitude: 0.2, mean: 0.0, mode: 1 },
                w0: ProfileConfig::Constant { value: 0.0 },
            },
            targets: TargetsSection {
                phi_q: ProfileConfig::Cosine { amplitude: 0.4, mean: 0.0, mode: 1 },
            },
            cost: CostSection { b1: 1.0, b2: 0.5, b3: 1e-2, kappa: 1e-3 },
            bounds: BoundsSection { lower: -5.0, upper: 5.0 },
            control: ProfileConfig::Constant { value: 0.0 },
            optimizer: OptimizerSection {
                alpha0: None,
                max_iters: 2000,
                stat_tol: 1e-8,
                armijo_factor: 0.5,
                armijo_sigma: 1e-4,
                u_init: ProfileConfig::Constant { value: 0.0 },
            },
            sweep: SweepSection { kappas: vec![0.0, 1e-4, 2e-3, 2e-2, 7e-2] },
            oracle: OracleSection {
                fd_steps: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
                richardson: false,
            },
            output: OutputSection { snapshot_stride: 1 },
        }
    }
}

impl RunConfig {
    /// Reads, applies `--set key=value` overrides, and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_toml_str(&raw, overrides)
    }

    fn from_toml_str(raw: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: toml::Value = raw.parse::<toml::Value>()?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: RunConfig = value.try_into().map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Admissibility checks: c2 > c1, τ > 0, min γ > 0, -1 < φ0 < 1,
    /// b3 > 0, bounds ordered, and the numerical knobs positive.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.grid.n_cells < 4 {
            errors.push(format!("grid.n_cells must be >= 4, got {}", self.grid.n_cells));
        }
        if !(self.grid.length > 0.0) {
            errors.push(format!("grid.length must be > 0, got {}", self.grid.length));
        }
        if !(self.time.horizon > 0.0) || self.time.n_steps == 0 {
            errors.push("time.horizon must be > 0 and time.n_steps >= 1".into());
        }
        if !(self.potential.c1 >= 0.0 && self.potential.c2 > self.potential.c1) {
            errors.push(format!(
                "potential needs 0 <= c1 < c2 for a nonconvex double well, got c1={} c2={}",
                self.potential.c1, self.potential.c2
            ));
        }
        if !(self.physics.tau > 0.0) {
            errors.push(format!("physics.tau must be > 0, got {}", self.physics.tau));
        }
        if !(self.cost.b1 >= 0.0 && self.cost.b2 >= 0.0) {
            errors.push("cost.b1 and cost.b2 must be nonnegative".into());
        }
        if !(self.cost.b3 > 0.0) {
            errors.push(format!("cost.b3 must be > 0, got {}", self.cost.b3));
        }
        if !(self.cost.kappa >= 0.0) {
            errors.push(format!("cost.kappa must be >= 0, got {}", self.cost.kappa));
        }
        if !(self.bounds.lower <= self.bounds.upper) {
            errors.push(format!(
                "bounds.lower must be <= bounds.upper, got [{}, {}]",
                self.bounds.lower, self.bounds.upper
            ));
        }
        if !(self.optimizer.stat_tol > 0.0) {
            errors.push("optimizer.stat_tol must be > 0".into());
        }
        if let Some(a) = self.optimizer.alpha0 {
            if !(a > 0.0) {
                errors.push(format!("optimizer.alpha0 must be > 0, got {a}"));
            }
        }
        if !(self.optimizer.armijo_factor > 0.0 && self.optimizer.armijo_factor < 1.0) {
            errors.push("optimizer.armijo_factor must lie in (0, 1)".into());
        }
        if !(self.optimizer.armijo_sigma > 0.0) {
            errors.push("optimizer.armijo_sigma must be > 0".into());
        }
        if self.sweep.kappas.windows(2).any(|w| w[0] > w[1]) {
            errors.push("sweep.kappas must be ascending".into());
        }
        if self.sweep.kappas.iter().any(|k| *k < 0.0) {
            errors.push("sweep.kappas must be nonnegative".into());
        }

        // grid-dependent checks need the pieces built
        if errors.is_empty() {
            let grid = Grid::new(self.grid.length, self.grid.n_cells)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let gamma = self.physics.gamma.field(&grid);
            if !(gamma.min() > 0.0) {
                errors.push(format!(
                    "physics.gamma must be uniformly positive, min is {}",
                    gamma.min()
                ));
            }
            let phi0 = self.initial.phi0.field(&grid);
            if !(phi0.min() > -1.0 && phi0.max() < 1.0) {
                errors.push(format!(
                    "initial.phi0 must lie strictly inside (-1, 1), range is [{}, {}]",
                    phi0.min(),
                    phi0.max()
                ));
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors.join("; ")))
        }
    }

    pub fn to_problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        self.validate()?;
        let grid = Grid::new(self.grid.length, self.grid.n_cells)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let potential = PotentialParams::new(self.potential.c1, self.potential.c2)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let phys = PhysParams::new(
            self.physics.tau,
            self.physics.gamma.field(&grid),
            self.time.horizon,
            self.time.n_steps,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let initial = InitialData::new(self.initial.phi0.field(&grid), self.initial.w0.field(&grid))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let profile = self.targets.phi_q.field(&grid);
        let targets = Targets {
            phi_q: vec![profile.clone(); self.time.n_steps + 1],
            phi_omega: profile,
        };
        let weights = CostWeights::new(self.cost.b1, self.cost.b2, self.cost.b3, self.cost.kappa)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let bounds = BoxBounds::new(self.bounds.lower, self.bounds.upper)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let spec = ProblemSpec { grid, potential, phys, initial, bounds, targets, weights };
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn to_optimizer_config(&self, spec: &ProblemSpec) -> OptimizerConfig {
        OptimizerConfig {
            alpha0: self.optimizer.alpha0.unwrap_or(1.0 / spec.weights.b3),
            armijo_factor: self.optimizer.armijo_factor,
            armijo_sigma: self.optimizer.armijo_sigma,
            max_iters: self.optimizer.max_iters,
            stat_tol: self.optimizer.stat_tol,
            u_init: self.optimizer.u_init.control(&spec.grid, spec.n_steps()),
        }
    }

    pub fn to_oracle_config(&self) -> Result<OracleConfig, ConfigError> {
        let cfg = OracleConfig {
            fd_steps: self.oracle.fd_steps.clone(),
            richardson: self.oracle.richardson,
            seed: self.seed,
        };
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    /// The forward-solve control.
    pub fn control(&self, spec: &ProblemSpec) -> Control {
        self.control.control(&spec.grid, spec.n_steps())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies one `path.to.key=value` override onto the parsed TOML tree.
fn apply_override(root: &mut toml::Value, ov: &str) -> Result<(), ConfigError> {
    let (path, raw) = ov
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(ov.into(), "expected key=value".into()))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(ConfigError::BadOverride(ov.into(), "empty key".into()));
    }
    // parse the value as a TOML fragment; fall back to a bare string
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().unwrap_or(toml::Value::String(raw.into())),
        _ => toml::Value::String(raw.into()),
    };
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            ConfigError::BadOverride(ov.into(), format!("'{seg}' is not a table"))
        })?;
        if i + 1 == segments.len() {
            table.insert((*seg).into(), parsed);
            return Ok(());
        }
        node = table
            .entry((*seg).to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    unreachable!("loop returns on the last segment")
}
