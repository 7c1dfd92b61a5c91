//! One Monte Carlo trial: draw a penetration and a fluctuation profile, set
//! the base dispatch with a DCOPF, then dispatch storage optimally.
//!
//! Every trial draws from its own generator derived from
//! `(seed, stream, index)`, so batches can be evaluated in any order or in
//! parallel with identical results.

use nalgebra::DVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcopf::{solve_dcopf, BaseDispatch, DcopfError};
use crate::dispatch::{solve_dispatch, DispatchError, DispatchOptions, DispatchSolution};
use crate::grid::Grid;
use crate::horizon::ControlHorizon;
use crate::powerflow::FlowModel;
use crate::profile::{generate_profiles, ProfileConfig, ProfileError, ProfileSet, MAX_PENETRATION};

/// How each trial picks its renewable penetration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum PenetrationMode {
    Fixed(f64),
    /// Uniform on `[0, 0.5]`.
    Uniform,
}

#[derive(Debug, Error)]
pub enum TrialFailure {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Dcopf(#[from] DcopfError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Debug, Error)]
#[error("trial {index}: {source}")]
pub struct TrialError {
    pub index: u64,
    #[source]
    pub source: TrialFailure,
}

/// Everything a trial needs besides its storage set and seed.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup<'a> {
    pub grid: &'a Grid,
    pub model: &'a FlowModel,
    pub horizon: ControlHorizon,
    /// Harmonic count and amplitude; seed and penetration are set per trial.
    pub profile: ProfileConfig,
    pub penetration: PenetrationMode,
    pub dispatch: DispatchOptions,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub index: u64,
    pub profiles: ProfileSet,
    pub base: BaseDispatch,
    pub solution: DispatchSolution,
}

/// Seed of trial `index` in batch `stream`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Profile configuration of one trial.
pub fn trial_profile_config(setup: &TrialSetup, seed: u64, stream: u64, index: u64) -> ProfileConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index));
    let penetration = match setup.penetration {
        PenetrationMode::Fixed(p) => p,
        PenetrationMode::Uniform => rng.random_range(0.0..=MAX_PENETRATION),
    };
    ProfileConfig {
        seed: rng.next_u64(),
        penetration_target: penetration,
        ..setup.profile
    }
}

/// Runs the trial pipeline on already generated profiles.
pub fn run_with_profiles(
    setup: &TrialSetup,
    gs: &[usize],
    profiles: &ProfileSet,
) -> Result<(BaseDispatch, DispatchSolution), TrialFailure> {
    let base = solve_dcopf(setup.grid, setup.model, &profiles.renewable_mean)?;
    let solution = solve_dispatch(
        setup.grid,
        setup.model,
        &setup.horizon,
        gs,
        &base.p0,
        profiles,
        &setup.dispatch,
    )?;
    Ok((base, solution))
}

pub fn run_trial(
    setup: &TrialSetup,
    gs: &[usize],
    seed: u64,
    stream: u64,
    index: u64,
) -> Result<TrialOutcome, TrialError> {
    let wrap = |source| TrialError { index, source };
    let cfg = trial_profile_config(setup, seed, stream, index);
    let profiles = generate_profiles(setup.grid, &setup.horizon, &cfg).map_err(|e| wrap(e.into()))?;
    let (base, solution) = run_with_profiles(setup, gs, &profiles).map_err(wrap)?;
    if !solution.converged {
        log::warn!(
            "trial {index}: dispatch stopped after {} iterations with gradient {:e}",
            solution.iterations,
            solution.gradient_norm
        );
    }
    Ok(TrialOutcome {
        index,
        profiles,
        base,
        solution,
    })
}

/// Runs trials `0..count` of a batch in parallel and maps each outcome
/// through `summarize`. Results are in trial order; on failure the error of
/// the lowest failing index is returned.
pub fn run_batch<T, F>(
    setup: &TrialSetup,
    gs: &[usize],
    seed: u64,
    stream: u64,
    count: usize,
    summarize: F,
) -> Result<Vec<T>, TrialError>
where
    T: Send,
    F: Fn(&TrialOutcome) -> T + Sync,
{
    let results: Vec<Result<T, TrialError>> = (0..count as u64)
        .into_par_iter()
        .map(|k| run_trial(setup, gs, seed, stream, k).map(|o| summarize(&o)))
        .collect();
    results.into_iter().collect()
}

/// Injections of a trial with storage removed, for comparisons.
pub fn uncontrolled_injections(base: &BaseDispatch, profiles: &ProfileSet, alpha: &DVector<f64>, t: usize) -> DVector<f64> {
    let dev = profiles.deviation(t);
    &base.p0 + &dev - alpha * dev.sum()
}
