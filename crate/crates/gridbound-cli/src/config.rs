//! Run configuration: a TOML file that pins every knob of an experiment,
//! so one committed artifact reproduces a run exactly. Command-line flags
//! override individual fields; the `GRIDBOUND_OUT` environment variable
//! supplies the output directory when neither flag nor file does.

use crate::errors::{CliError, Result};
use gridbound::abstraction::AbstractionMode;
use gridbound::emdp::WalkerModel;
use gridbound::imdp::ViParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Name of the environment variable holding the default output directory.
pub const OUT_ENV: &str = "GRIDBOUND_OUT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Model TOML path; the built-in walker when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Cell widths, coarsest first; each must evenly split the previous.
    pub widths: Vec<f64>,
    pub mode: CredalModeName,
    /// Samples per axis in candidates mode.
    pub candidates_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub solver: SolverConfig,
    pub mc: McConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredalModeName {
    Interval,
    Candidates,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_cap: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub probes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            widths: vec![0.1, 0.05, 0.025],
            mode: CredalModeName::Interval,
            candidates_k: 3,
            out_dir: None,
            solver: SolverConfig::default(),
            mc: McConfig::default(),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iter: 100_000,
            divergence_cap: 1e9,
        }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            runs: 10_000,
            horizon: 200,
            seed: 7,
            probes: 20,
        }
    }
}

impl RunConfig {
    /// Loads a configuration file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(CliError::Usage("widths must be non-empty".into()));
        }
        if self.widths.iter().any(|w| !(*w > 0.0)) {
            return Err(CliError::Usage("widths must be positive".into()));
        }
        if !(self.solver.tol > 0.0) || !(self.solver.divergence_cap > 0.0) {
            return Err(CliError::Usage(
                "solver tol and divergence_cap must be positive".into(),
            ));
        }
        if self.solver.max_iter == 0 {
            return Err(CliError::Usage("solver max_iter must be positive".into()));
        }
        if self.mc.runs == 0 || self.mc.horizon == 0 || self.mc.probes == 0 {
            return Err(CliError::Usage(
                "mc runs, horizon, and probes must be positive".into(),
            ));
        }
        if self.candidates_k == 0 {
            return Err(CliError::Usage("candidates_k must be positive".into()));
        }
        Ok(())
    }

    #[must_use]
    pub fn abstraction_mode(&self) -> AbstractionMode {
        match self.mode {
            CredalModeName::Interval => AbstractionMode::Interval,
            CredalModeName::Candidates => AbstractionMode::Candidates {
                k: self.candidates_k,
            },
        }
    }

    #[must_use]
    pub fn vi_params(&self) -> ViParams {
        ViParams::default()
            .with_tol(self.solver.tol)
            .with_max_iter(self.solver.max_iter)
            .with_divergence_cap(self.solver.divergence_cap)
    }

    /// Loads and validates the configured model (built-in walker default).
    pub fn load_model(&self) -> Result<WalkerModel> {
        let model = match &self.model {
            None => WalkerModel::default_walker(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Io(format!("cannot read model {}: {e}", path.display()))
                })?;
                WalkerModel::from_toml_str(&text).map_err(|e| {
                    CliError::Model(format!("invalid model {}: {e}", path.display()))
                })?
            }
        };
        model.validate()?;
        Ok(model)
    }

    /// Output directory resolution: flag, then config file, then the
    /// environment variable, then `out`.
    #[must_use]
    pub fn resolve_out(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.out_dir {
            return p.clone();
        }
        if let Some(p) = std::env::var_os(OUT_ENV) {
            return PathBuf::from(p);
        }
        PathBuf::from("out")
    }
}
