use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::diagnostics::{choose_weighted_params, RecordConfig};
use crate::grid::{Grid, GridSpec};
use crate::model::{make_initial_data, InitialData, MotilityConfig, MotilitySpec, ProblemSpec};
use crate::solver::{SolverRegistry, DEFAULT_SOLVER};
use crate::stepper::{suggest_dt, StepParams, DEFAULT_SOLVER_TOL};

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub grid: GridSpec,
    pub motility: MotilityConfig,
    #[serde(default)]
    pub epsilon: f64,
    pub u0: InitialData,
    pub v0: InitialData,
    /// Rescale `u0` to this total mass after generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_mass: Option<f64>,
}

/// Either a fixed step or `"auto"`, which applies [`suggest_dt`] with the
/// configured safety factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Fixed(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: DtSetting,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Steps between CSV rows.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_weighted_p")]
    pub weighted_p: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            cadence: default_cadence(),
            p_list: default_p_list(),
            weighted: false,
            weighted_p: default_weighted_p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Snapshots,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths are resolved against the output root.
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Steps between snapshot files; the final state is always written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_cadence: Option<usize>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), snapshot_cadence: None, formats: default_formats() }
    }
}

fn default_safety() -> f64 {
    0.5
}
fn default_solver() -> String {
    DEFAULT_SOLVER.to_string()
}
fn default_solver_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}
fn default_cadence() -> usize {
    10
}
fn default_p_list() -> Vec<f64> {
    vec![2.0, 3.0]
}
fn default_weighted_p() -> f64 {
    2.0
}
fn default_directory() -> PathBuf {
    PathBuf::from("run")
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Snapshots]
}

/// A validated configuration with every derived quantity resolved.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub problem: ProblemSpec,
    pub params: StepParams,
    pub t_end: f64,
    pub solver: String,
    pub record: RecordConfig,
    pub cadence: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.output.formats.contains(&format)
    }

    pub fn build_problem(&self) -> Result<ProblemSpec, HarnessError> {
        let p = &self.problem;
        let grid = Grid::try_from(p.grid.clone()).map_err(|e| HarnessError::Config(format!("grid: {e}")))?;
        let phi = MotilitySpec::try_from(p.motility.clone())
            .map_err(|e| HarnessError::Config(format!("motility: {e}")))?;
        let mut u0 = make_initial_data(&grid, &p.u0).map_err(|e| HarnessError::Config(format!("u0: {e}")))?;
        let v0 = make_initial_data(&grid, &p.v0).map_err(|e| HarnessError::Config(format!("v0: {e}")))?;
        if let Some(mass) = p.u_mass {
            let current = u0.integral();
            if !(mass > 0.0 && mass.is_finite()) || !(current > 0.0) {
                return Err(HarnessError::Config(format!("u_mass = {mass} cannot be imposed on u0 with mass {current}")));
            }
            u0 = u0.map(|x| x * mass / current);
        }
        ProblemSpec::new(grid, phi, u0, v0, p.epsilon).map_err(|e| HarnessError::Config(format!("problem: {e}")))
    }

    /// Check every section of the config and resolve `dt`, the solver and the
    /// diagnostics parameters.
    pub fn resolve(&self, registry: &SolverRegistry) -> Result<ResolvedRun, HarnessError> {
        let problem = self.build_problem()?;
        let t = &self.time;
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(HarnessError::Config(format!("t_end must be positive (got {})", t.t_end)));
        }
        let bounds = problem.motility_bounds();
        let dt = match &t.dt {
            DtSetting::Fixed(dt) => *dt,
            DtSetting::Keyword(k) if k == "auto" => {
                if !(t.safety > 0.0 && t.safety.is_finite()) {
                    return Err(HarnessError::Config(format!("safety must be positive (got {})", t.safety)));
                }
                suggest_dt(&problem, &bounds, t.safety)
            }
            DtSetting::Keyword(k) => return Err(HarnessError::Config(format!("dt must be a number or \"auto\" (got {k:?})"))),
        };
        let params = StepParams { dt, solver_tol: t.solver_tol, max_iters: t.max_iters };
        params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !registry.contains(&t.solver) {
            return Err(HarnessError::Config(format!(
                "unknown solver {:?} (available: {})",
                t.solver,
                registry.names().join(", ")
            )));
        }
        let d = &self.diagnostics;
        if d.cadence == 0 {
            return Err(HarnessError::Config("diagnostics cadence must be at least 1".into()));
        }
        if self.output.snapshot_cadence == Some(0) {
            return Err(HarnessError::Config("snapshot cadence must be at least 1".into()));
        }
        if let Some(p) = d.p_list.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(HarnessError::Config(format!("p_list entries must be positive (got {p})")));
        }
        let weighted = if d.weighted {
            Some(choose_weighted_params(d.weighted_p, &bounds).map_err(|e| HarnessError::Config(e.to_string()))?)
        } else {
            None
        };
        let record = RecordConfig { p_list: d.p_list.clone(), weighted, mean_u0: problem.mean_u0() };
        Ok(ResolvedRun { problem, params, t_end: t.t_end, solver: t.solver.clone(), record, cadence: d.cadence })
    }
}
