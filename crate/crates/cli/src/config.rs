use std::path::Path;

use serde::{Deserialize, Serialize};
use storage_planner::dispatch::DispatchOptions;
use storage_planner::grid::{bundled, load_grid, Grid};
use storage_planner::horizon::ControlHorizon;
use storage_planner::placement::{default_gamma_grid, PlacementConfig};
use storage_planner::profile::ProfileConfig;
use storage_planner::trial::PenetrationMode;

use crate::CliError;

/// Prefix selecting one of the grids shipped with the library.
pub const BUNDLED_PREFIX: &str = "bundled:";

/// Everything that determines a run's artifacts.
///
/// Parallelism and the output directory are deliberately absent: they do
/// not change any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Grid file path, or `bundled:<name>`.
    pub grid: String,
    pub horizon: ControlHorizon,
    pub profile: ProfileSettings,
    pub trials: usize,
    pub seed: u64,
    pub storage: StorageSelection,
    pub placement: PlacementSettings,
    pub solver: DispatchOptions,
    pub bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: String::new(),
            horizon: ControlHorizon::default(),
            profile: ProfileSettings::default(),
            trials: 2000,
            seed: 0,
            storage: StorageSelection::All,
            placement: PlacementSettings::default(),
            solver: DispatchOptions::default(),
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSettings {
    pub harmonics: usize,
    pub amplitude: f64,
    pub penetration: PenetrationMode,
    /// Profiles CSV to dispatch against instead of generating one.
    pub file: Option<String>,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        let d = ProfileConfig::default();
        ProfileSettings {
            harmonics: d.harmonics,
            amplitude: d.amplitude,
            penetration: PenetrationMode::Uniform,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum StorageSelection {
    All,
    List { nodes: Vec<String> },
    /// Node ids, whitespace- or comma-separated, or a JSON array.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSettings {
    pub epsilon_rel: f64,
    pub epsilon_prime: f64,
    pub gamma_grid: Vec<f64>,
    pub validation_trials: Option<usize>,
    pub max_outer: usize,
}

impl Default for PlacementSettings {
    fn default() -> Self {
        let d = PlacementConfig::default();
        PlacementSettings {
            epsilon_rel: d.epsilon_rel,
            epsilon_prime: d.epsilon_prime,
            gamma_grid: default_gamma_grid(),
            validation_trials: d.validation_trials,
            max_outer: d.max_outer,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.is_empty() {
            return Err(CliError::Config("no grid given (use --grid)".into()));
        }
        if ControlHorizon::new(self.horizon.length, self.horizon.steps).is_none() {
            return Err(CliError::Config("horizon needs at least 2 steps and a positive length".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(CliError::Config("bins must be at least 1".into()));
        }
        if !self.solver.penalty.is_valid() {
            return Err(CliError::Config("penalty constants must be positive".into()));
        }
        self.profile_config(0.0, 0)
            .validate()
            .map_err(storage_planner::Error::from)?;
        if let PenetrationMode::Fixed(p) = self.profile.penetration {
            self.profile_config(p, 0)
                .validate()
                .map_err(storage_planner::Error::from)?;
        }
        self.placement_config()
            .validate()
            .map_err(storage_planner::Error::from)?;
        Ok(())
    }

    pub fn load_grid(&self) -> Result<Grid, CliError> {
        if let Some(name) = self.grid.strip_prefix(BUNDLED_PREFIX) {
            return bundled(name).ok_or_else(|| {
                let names: Vec<_> = storage_planner::grid::bundled_names().collect();
                CliError::Config(format!("unknown bundled grid {name:?}; available: {}", names.join(", ")))
            });
        }
        Ok(load_grid(&self.grid).map_err(storage_planner::Error::from)?)
    }

    pub fn profile_config(&self, penetration: f64, seed: u64) -> ProfileConfig {
        ProfileConfig {
            harmonics: self.profile.harmonics,
            amplitude: self.profile.amplitude,
            seed,
            penetration_target: penetration,
        }
    }

    pub fn placement_config(&self) -> PlacementConfig {
        let p = &self.placement;
        PlacementConfig {
            trials: self.trials,
            seed: self.seed,
            epsilon_rel: p.epsilon_rel,
            epsilon_prime: p.epsilon_prime,
            gamma_grid: p.gamma_grid.clone(),
            validation_trials: p.validation_trials,
            max_outer: p.max_outer,
        }
    }

    /// Storage node indices, in grid order.
    pub fn storage_nodes(&self, grid: &Grid) -> Result<Vec<usize>, CliError> {
        let ids: Vec<String> = match &self.storage {
            StorageSelection::All => return Ok((0..grid.n()).collect()),
            StorageSelection::List { nodes } => nodes.clone(),
            StorageSelection::File { path } => read_node_file(Path::new(path))?,
        };
        let mut idx = Vec::with_capacity(ids.len());
        for id in ids {
            let i = grid
                .index_of(&id)
                .ok_or_else(|| CliError::Config(format!("unknown storage node {id:?}")))?;
            idx.push(i);
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }
}

fn read_node_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let vals: Vec<serde_json::Value> =
            serde_json::from_str(trimmed).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return vals
            .into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => Ok(s),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                other => Err(CliError::Config(format!("{}: bad node id {other}", path.display()))),
            })
            .collect();
    }
    Ok(text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}
