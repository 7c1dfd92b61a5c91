//! Iterative reduction of the storage node set.
//!
//! Starting from storage everywhere, each outer iteration runs a batch of
//! trials, ranks nodes by their mean peak storage power (activity), and
//! keeps the nodes whose activity is at least `γ` times the largest. `γ` is
//! pushed as high as possible while the reduced set's total storage power
//! stays within a relative slack of the current set's.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trial::{run_batch, TrialError, TrialSetup};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("storage set is empty")]
    EmptyCut,
    #[error("invalid placement config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Trial(#[from] TrialError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub trials: usize,
    pub seed: u64,
    pub epsilon_rel: f64,
    pub epsilon_prime: f64,
    pub gamma_grid: Vec<f64>,
    /// Validation batch size; `max(20, trials / 10)` when absent.
    pub validation_trials: Option<usize>,
    pub max_outer: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            trials: 2000,
            seed: 0,
            epsilon_rel: 0.10,
            epsilon_prime: 0.05,
            gamma_grid: default_gamma_grid(),
            validation_trials: None,
            max_outer: 20,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.trials == 0 {
            return Err(PlacementError::InvalidConfig("trials must be at least 1"));
        }
        if !(self.epsilon_rel > 0.0) {
            return Err(PlacementError::InvalidConfig("epsilon_rel must be positive"));
        }
        let g = &self.gamma_grid;
        if g.is_empty()
            || g.iter().any(|&v| !(v > 0.0 && v <= 1.0))
            || g.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(PlacementError::InvalidConfig("gamma_grid must be ascending in (0, 1]"));
        }
        Ok(())
    }

    pub fn validation_size(&self) -> usize {
        self.validation_trials.unwrap_or((self.trials / 10).max(20))
    }
}

/// `0.05, 0.10, …, 1.00`.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityStats {
    pub nodes: Vec<usize>,
    /// Mean over trials of `max_t |ps_j(t)|`, per node of `nodes`.
    pub activity: Vec<f64>,
    /// `trials × |nodes|`.
    #[serde(skip)]
    pub per_trial: DMatrix<f64>,
    pub trials: usize,
}

impl ActivityStats {
    pub fn from_per_trial(nodes: Vec<usize>, per_trial: DMatrix<f64>) -> ActivityStats {
        let trials = per_trial.nrows();
        let activity = (0..nodes.len())
            .map(|c| {
                if trials == 0 {
                    0.0
                } else {
                    per_trial.column(c).iter().sum::<f64>() / trials as f64
                }
            })
            .collect();
        ActivityStats {
            nodes,
            activity,
            per_trial,
            trials,
        }
    }

    pub fn max(&self) -> f64 {
        self.activity.iter().cloned().fold(0.0, f64::max)
    }

    /// Nodes with activity at least `gamma` times the largest.
    pub fn cut(&self, gamma: f64) -> Vec<usize> {
        let threshold = gamma * self.max();
        self.nodes
            .iter()
            .zip(&self.activity)
            .filter(|(_, &a)| a >= threshold)
            .map(|(&j, _)| j)
            .collect()
    }

    /// Nodes ordered by decreasing activity.
    pub fn rank_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.nodes.len()).collect();
        idx.sort_by(|&a, &b| self.activity[b].total_cmp(&self.activity[a]).then(a.cmp(&b)));
        idx.into_iter().map(|c| self.nodes[c]).collect()
    }
}

/// Reciprocal of the total storage power capacity; `+∞` when none is used.
pub fn perf(stats: &ActivityStats) -> f64 {
    perf_of_capacity(stats.activity.iter().sum())
}

fn perf_of_capacity(capacity: f64) -> f64 {
    if capacity > 0.0 {
        1.0 / capacity
    } else {
        f64::INFINITY
    }
}

fn peak_power(o: &crate::trial::TrialOutcome) -> Vec<f64> {
    let traj = &o.solution.trajectory;
    traj.nodes.iter().map(|&j| traj.ps.column(j).amax()).collect()
}

pub fn collect_activity(
    setup: &TrialSetup,
    gs: &[usize],
    trials: usize,
    seed: u64,
    stream: u64,
) -> Result<ActivityStats, PlacementError> {
    let rows = run_batch(setup, gs, seed, stream, trials, peak_power)?;
    let per_trial = DMatrix::from_fn(trials, gs.len(), |k, c| rows[k][c]);
    Ok(ActivityStats::from_per_trial(gs.to_vec(), per_trial))
}

/// Mean total storage power capacity of `gs` over a batch.
pub fn mean_capacity(
    setup: &TrialSetup,
    gs: &[usize],
    trials: usize,
    seed: u64,
    stream: u64,
) -> Result<f64, PlacementError> {
    let totals = run_batch(setup, gs, seed, stream, trials, |o| peak_power(o).iter().sum::<f64>())?;
    Ok(totals.iter().sum::<f64>() / trials.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCandidate {
    pub gamma: f64,
    pub size: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaChoice {
    pub gamma: f64,
    pub gs_reduced: Vec<usize>,
    pub capacity_full: f64,
    pub capacity_reduced: f64,
    pub candidates: Vec<GammaCandidate>,
}

/// Largest `γ` on the grid whose cut keeps the mean capacity within
/// `(1 + epsilon_rel)` of the uncut set, measured on one validation batch.
/// When no grid value qualifies, `γ = 0` and the set is kept whole.
#[allow(clippy::too_many_arguments)]
pub fn select_gamma(
    setup: &TrialSetup,
    stats: &ActivityStats,
    epsilon_rel: f64,
    gamma_grid: &[f64],
    validation_trials: usize,
    seed: u64,
    stream: u64,
) -> Result<GammaChoice, PlacementError> {
    if stats.nodes.is_empty() {
        return Err(PlacementError::EmptyCut);
    }
    let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut capacity_of = |set: &[usize]| -> Result<f64, PlacementError> {
        if let Some(&c) = cache.get(set) {
            return Ok(c);
        }
        let c = mean_capacity(setup, set, validation_trials, seed, stream)?;
        cache.insert(set.to_vec(), c);
        Ok(c)
    };
    let capacity_full = capacity_of(&stats.nodes)?;
    let limit = (1.0 + epsilon_rel) * capacity_full;
    let mut candidates = Vec::with_capacity(gamma_grid.len());
    let mut best = (0.0, stats.nodes.clone(), capacity_full);
    for &gamma in gamma_grid {
        let set = stats.cut(gamma);
        if set.is_empty() {
            return Err(PlacementError::EmptyCut);
        }
        let capacity = capacity_of(&set)?;
        candidates.push(GammaCandidate {
            gamma,
            size: set.len(),
            capacity,
        });
        if capacity <= limit {
            best = (gamma, set, capacity);
        }
    }
    Ok(GammaChoice {
        gamma: best.0,
        gs_reduced: best.1,
        capacity_full,
        capacity_reduced: best.2,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementIteration {
    pub gs_before: Vec<usize>,
    pub activity: ActivityStats,
    pub rank_order: Vec<usize>,
    pub gamma: f64,
    pub gs_after: Vec<usize>,
    /// From the validation batch.
    pub perf_before: f64,
    pub perf_after: f64,
    pub candidates: Vec<GammaCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementReport {
    pub iterations: Vec<PlacementIteration>,
    pub final_set: Vec<usize>,
    pub epsilon: f64,
    pub epsilon_prime: f64,
}

/// Batch stream of the activity trials of outer iteration `k`; validation
/// batches use the odd streams.
pub fn activity_stream(k: usize) -> u64 {
    2 * k as u64
}

pub fn validation_stream(k: usize) -> u64 {
    2 * k as u64 + 1
}

pub fn run_placement(setup: &TrialSetup, config: &PlacementConfig) -> Result<PlacementReport, PlacementError> {
    config.validate()?;
    let mut gs: Vec<usize> = (0..setup.grid.n()).collect();
    let mut iterations = Vec::new();
    for k in 0..config.max_outer {
        let stats = collect_activity(setup, &gs, config.trials, config.seed, activity_stream(k))?;
        let rank_order = stats.rank_order();
        log::info!(
            "placement iteration {k}: {} nodes, rank order {:?}",
            gs.len(),
            rank_order.iter().map(|&i| setup.grid.node_id(i)).collect::<Vec<_>>()
        );
        if stats.max() == 0.0 {
            iterations.push(PlacementIteration {
                gs_before: gs.clone(),
                perf_before: perf(&stats),
                perf_after: perf(&stats),
                activity: stats,
                rank_order,
                gamma: 0.0,
                gs_after: gs.clone(),
                candidates: Vec::new(),
            });
            break;
        }
        let choice = select_gamma(
            setup,
            &stats,
            config.epsilon_rel,
            &config.gamma_grid,
            config.validation_size(),
            config.seed,
            validation_stream(k),
        )?;
        let shrank = choice.gs_reduced.len() < gs.len();
        iterations.push(PlacementIteration {
            gs_before: gs.clone(),
            activity: stats,
            rank_order,
            gamma: choice.gamma,
            gs_after: choice.gs_reduced.clone(),
            perf_before: perf_of_capacity(choice.capacity_full),
            perf_after: perf_of_capacity(choice.capacity_reduced),
            candidates: choice.candidates,
        });
        gs = choice.gs_reduced;
        if choice.gamma <= config.epsilon_prime || !shrank {
            break;
        }
    }
    Ok(PlacementReport {
        iterations,
        final_set: gs,
        epsilon: config.epsilon_rel,
        epsilon_prime: config.epsilon_prime,
    })
}
