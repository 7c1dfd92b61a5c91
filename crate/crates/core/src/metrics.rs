//! Per-trial evaluation quantities and their statistics by penetration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{total_power, DispatchSolution};
use crate::grid::Grid;
use crate::horizon::ControlHorizon;
use crate::powerflow::{check_constraints, FlowModel};
use crate::profile::ProfileSet;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("renewable fluctuations are identically zero; normalized capacities are undefined")]
    DegenerateDenominator,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMetrics {
    /// Storage power capacity over renewable fluctuation power; `None` when
    /// the trial has no fluctuation.
    pub normalized_power_capacity: Option<f64>,
    /// Storage energy range over renewable fluctuation energy range.
    pub normalized_energy_capacity: Option<f64>,
    /// Time-averaged total constraint violation in MW.
    pub violation_mw: f64,
    pub penetration: f64,
}

/// Energy a storage unit would hold if it absorbed each renewable's
/// deviation exactly: `s^r(t) = Σ_{τ<t} dev(τ) Δ`, `(Tf + 1) × |renewables|`.
pub fn renewable_fluct_energy(profiles: &ProfileSet, horizon: &ControlHorizon) -> DMatrix<f64> {
    let tf = profiles.steps();
    let delta = horizon.delta();
    let mut sr = DMatrix::zeros(tf + 1, profiles.renewables.len());
    for (r, &i) in profiles.renewables.iter().enumerate() {
        for t in 0..tf {
            sr[(t + 1, r)] = sr[(t, r)] + profiles.abs_dev[(t, i)] * delta;
        }
    }
    sr
}

fn column_range(m: &DMatrix<f64>, c: usize) -> f64 {
    let col = m.column(c);
    col.max() - col.min()
}

/// Time-averaged violation recomputed from the stored trajectory, independent
/// of the solver's own bookkeeping.
pub fn recomputed_violation(
    solution: &DispatchSolution,
    profiles: &ProfileSet,
    grid: &Grid,
    model: &FlowModel,
) -> f64 {
    let alpha = DVector::from_vec(grid.alpha());
    let tf = profiles.steps();
    let mut total = 0.0;
    for t in 0..tf {
        let ps = solution.trajectory.ps.row(t).transpose();
        let dev = profiles.deviation(t);
        let p = total_power(&solution.p0, &ps, &dev, &alpha);
        let p_ns = &p - &ps;
        total += check_constraints(grid, model, &p, &p_ns).total;
    }
    total / tf as f64
}

/// Time-averaged violation with storage idle: the droop response alone
/// absorbs every deviation.
pub fn uncontrolled_violation(p0: &DVector<f64>, profiles: &ProfileSet, grid: &Grid, model: &FlowModel) -> f64 {
    let alpha = DVector::from_vec(grid.alpha());
    let zero = DVector::zeros(grid.n());
    let tf = profiles.steps();
    let total: f64 = (0..tf)
        .map(|t| {
            let p = total_power(p0, &zero, &profiles.deviation(t), &alpha);
            check_constraints(grid, model, &p, &p).total
        })
        .sum();
    total / tf as f64
}

/// Normalized power and energy capacity of a trial.
///
/// Power: `Σ_j max_t |ps_j| / Σ_r max_t |dev_r|`. Energy: `Σ_j range(s_j) /
/// Σ_r range(s^r_r)`.
pub fn normalized_ratios(
    solution: &DispatchSolution,
    profiles: &ProfileSet,
    horizon: &ControlHorizon,
) -> Result<(f64, f64), MetricsError> {
    let traj = &solution.trajectory;
    let power_num: f64 = traj.nodes.iter().map(|&j| traj.ps.column(j).amax()).sum();
    let power_den: f64 = profiles.renewables.iter().map(|&i| profiles.abs_dev.column(i).amax()).sum();
    let sr = renewable_fluct_energy(profiles, horizon);
    let energy_num: f64 = (0..traj.nodes.len()).map(|c| column_range(&traj.s, c)).sum();
    let energy_den: f64 = (0..sr.ncols()).map(|c| column_range(&sr, c)).sum();
    if !(power_den > 0.0) || !(energy_den > 0.0) {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok((power_num / power_den, energy_num / energy_den))
}

pub fn trial_metrics(
    solution: &DispatchSolution,
    profiles: &ProfileSet,
    grid: &Grid,
    model: &FlowModel,
    horizon: &ControlHorizon,
) -> Result<TrialMetrics, MetricsError> {
    if solution.trajectory.ps.nrows() != profiles.steps() || profiles.steps() != horizon.steps {
        return Err(MetricsError::Shape(format!(
            "{} dispatch steps, {} profile steps, horizon of {}",
            solution.trajectory.ps.nrows(),
            profiles.steps(),
            horizon.steps
        )));
    }
    let ratios = match normalized_ratios(solution, profiles, horizon) {
        Ok(r) => Some(r),
        Err(MetricsError::DegenerateDenominator) => None,
        Err(e) => return Err(e),
    };
    Ok(TrialMetrics {
        normalized_power_capacity: ratios.map(|r| r.0),
        normalized_energy_capacity: ratios.map(|r| r.1),
        violation_mw: recomputed_violation(solution, profiles, grid, model),
        penetration: profiles.penetration,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Summary { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub power_ratio: Option<Summary>,
    pub energy_ratio: Option<Summary>,
    pub violation_mw: Option<Summary>,
}

/// Index of the bin holding `x`; bins are left-closed and the last is closed.
fn bin_index(x: f64, edges: &[f64]) -> Option<usize> {
    let bins = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[bins]) {
        return None;
    }
    Some((0..bins).find(|&k| x < edges[k + 1]).unwrap_or(bins - 1))
}

/// Statistics of `metrics` in `bins` equal-width penetration bins over
/// `[lo, hi]`. Trials outside the range are dropped.
pub fn bin_statistics(metrics: &[TrialMetrics], bins: usize, lo: f64, hi: f64) -> Vec<BinRow> {
    let bins = bins.max(1);
    let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let mut members: Vec<Vec<&TrialMetrics>> = vec![Vec::new(); bins];
    for m in metrics {
        if let Some(k) = bin_index(m.penetration, &edges) {
            members[k].push(m);
        }
    }
    members
        .iter()
        .enumerate()
        .map(|(k, ms)| {
            let power: Vec<f64> = ms.iter().filter_map(|m| m.normalized_power_capacity).collect();
            let energy: Vec<f64> = ms.iter().filter_map(|m| m.normalized_energy_capacity).collect();
            let viol: Vec<f64> = ms.iter().map(|m| m.violation_mw).collect();
            BinRow {
                lo: edges[k],
                hi: edges[k + 1],
                count: ms.len(),
                power_ratio: Summary::of(&power),
                energy_ratio: Summary::of(&energy),
                violation_mw: Summary::of(&viol),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::bundled;

    fn metric(p: f64, v: f64) -> TrialMetrics {
        TrialMetrics {
            normalized_power_capacity: Some(v),
            normalized_energy_capacity: Some(v),
            violation_mw: v,
            penetration: p,
        }
    }

    #[test]
    fn telescoping_energy() {
        let grid = bundled("toy3_congested").unwrap();
        let mut dev = DMatrix::zeros(4, 3);
        for (t, v) in [1.0, -1.0, 1.0, -1.0].into_iter().enumerate() {
            dev[(t, 0)] = v;
        }
        let mut mean = DVector::zeros(3);
        mean[0] = 40.0;
        let profiles = ProfileSet::from_deviations(&grid, dev, mean).unwrap();
        let h = ControlHorizon::with_steps(4).unwrap();
        let sr = renewable_fluct_energy(&profiles, &h);
        assert_eq!(sr.column(0).as_slice(), &[0.0, 0.25, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn single_bin() {
        let rows = bin_statistics(&[metric(0.07, 1.0), metric(0.07, 3.0)], 10, 0.0, 0.5);
        assert_eq!(rows.len(), 10);
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r.count, if k == 1 { 2 } else { 0 });
        }
        assert!((rows[1].lo - 0.05).abs() < 1e-15 && (rows[1].hi - 0.1).abs() < 1e-15);
        let s = rows[1].violation_mw.unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(rows[0].violation_mw.is_none());
    }

    #[test]
    fn edges_and_singletons() {
        let ms: Vec<_> = (0..10).map(|k| metric(0.05 * k as f64, k as f64)).collect();
        let rows = bin_statistics(&ms, 10, 0.0, 0.5);
        for r in &rows {
            assert_eq!(r.count, 1);
            assert_eq!(r.power_ratio.unwrap().std, 0.0);
        }
        // Upper edge goes in the last bin; outside values are dropped.
        let rows = bin_statistics(&[metric(0.5, 1.0), metric(0.51, 1.0), metric(-0.01, 1.0)], 10, 0.0, 0.5);
        assert_eq!(rows[9].count, 1);
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 1);
    }
}
