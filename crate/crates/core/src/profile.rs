//! Random zero-mean renewable fluctuation profiles.
//!
//! Each renewable gets a sum of harmonics of the window period with random
//! phases and `1/k` amplitude decay, averaged over each control interval. The
//! sum is rescaled to a fixed peak relative fluctuation and the renewable
//! means are scaled to hit a requested penetration.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::horizon::ControlHorizon;

/// Largest penetration a trial may request.
pub const MAX_PENETRATION: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("grid has no renewable nodes")]
    NoRenewables,
    #[error("grid has no load to serve")]
    NoLoad,
    #[error("invalid profile config: {0}")]
    InvalidConfig(&'static str),
    #[error("profile shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub harmonics: usize,
    /// Peak relative fluctuation; 1.0 swings each renewable by its full mean.
    pub amplitude: f64,
    pub seed: u64,
    pub penetration_target: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            harmonics: 10,
            amplitude: 1.0,
            seed: 0,
            penetration_target: 0.2,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.harmonics == 0 {
            return Err(ProfileError::InvalidConfig("harmonics must be at least 1"));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(ProfileError::InvalidConfig("amplitude must be finite and >= 0"));
        }
        if !(0.0..=MAX_PENETRATION).contains(&self.penetration_target) {
            return Err(ProfileError::InvalidConfig("penetration must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Renewable output over one control window.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    /// Renewable node indices, the column order of `rel_fluct`.
    pub renewables: Vec<usize>,
    /// Relative fluctuation, `Tf × |renewables|`.
    pub rel_fluct: DMatrix<f64>,
    /// Absolute deviation from the mean in MW, `Tf × n`, zero off renewables.
    pub abs_dev: DMatrix<f64>,
    /// Scaled renewable means in MW, zero off renewables.
    pub renewable_mean: DVector<f64>,
    pub penetration: f64,
}

impl ProfileSet {
    /// Builds a profile set from explicit MW deviations (`Tf × n`) around
    /// `renewable_mean`. Relative fluctuations are derived where the mean is
    /// nonzero.
    pub fn from_deviations(
        grid: &Grid,
        abs_dev: DMatrix<f64>,
        renewable_mean: DVector<f64>,
    ) -> Result<ProfileSet, ProfileError> {
        let n = grid.n();
        if abs_dev.ncols() != n || renewable_mean.len() != n {
            return Err(ProfileError::Shape(format!(
                "expected {n} columns, got {} deviations and {} means",
                abs_dev.ncols(),
                renewable_mean.len()
            )));
        }
        let renewables = grid.renewables().to_vec();
        for i in 0..n {
            if !renewables.contains(&i) && (abs_dev.column(i).amax() != 0.0 || renewable_mean[i] != 0.0) {
                return Err(ProfileError::Shape(format!(
                    "node {} is not renewable but has a deviation",
                    grid.node_id(i)
                )));
            }
        }
        let tf = abs_dev.nrows();
        let rel_fluct = DMatrix::from_fn(tf, renewables.len(), |t, r| {
            let i = renewables[r];
            if renewable_mean[i] != 0.0 {
                abs_dev[(t, i)] / renewable_mean[i]
            } else {
                0.0
            }
        });
        let penetration = realized_penetration(grid, &abs_dev, &renewable_mean);
        Ok(ProfileSet {
            renewables,
            rel_fluct,
            abs_dev,
            renewable_mean,
            penetration,
        })
    }

    pub fn steps(&self) -> usize {
        self.abs_dev.nrows()
    }

    /// Renewable output `p_ns = mean (1 + rel)` at renewable `r` (column index).
    pub fn output(&self, t: usize, r: usize) -> f64 {
        let i = self.renewables[r];
        self.renewable_mean[i] + self.abs_dev[(t, i)]
    }

    /// Deviation vector for step `t` (length n).
    pub fn deviation(&self, t: usize) -> DVector<f64> {
        self.abs_dev.row(t).transpose()
    }
}

fn realized_penetration(grid: &Grid, abs_dev: &DMatrix<f64>, mean: &DVector<f64>) -> f64 {
    let tf = abs_dev.nrows();
    let load = grid.total_load() * tf as f64;
    let mut served = 0.0;
    for t in 0..tf {
        for &i in grid.renewables() {
            served += mean[i] + abs_dev[(t, i)];
        }
    }
    if load > 0.0 {
        served / load
    } else {
        0.0
    }
}

/// Exact average of `sin(ω_k (tΔ + τ) + φ)` over `τ ∈ [0, Δ]`, with
/// `ω_k = 2πk/T`.
pub fn interval_averaged_harmonic(k: usize, t: usize, phi: f64, horizon: &ControlHorizon) -> f64 {
    let omega = TAU * k as f64 / horizon.length;
    let delta = horizon.delta();
    let start = omega * t as f64 * delta + phi;
    let end = omega * (t + 1) as f64 * delta + phi;
    (start.cos() - end.cos()) / (omega * delta)
}

pub fn generate_profiles(
    grid: &Grid,
    horizon: &ControlHorizon,
    config: &ProfileConfig,
) -> Result<ProfileSet, ProfileError> {
    config.validate()?;
    let renewables = grid.renewables();
    if renewables.is_empty() {
        return Err(ProfileError::NoRenewables);
    }
    let total_load = grid.total_load();
    if !(total_load > 0.0) {
        return Err(ProfileError::NoLoad);
    }
    let tf = horizon.steps;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut rel_fluct = DMatrix::zeros(tf, renewables.len());
    for r in 0..renewables.len() {
        let phases: Vec<f64> = (0..config.harmonics).map(|_| rng.random::<f64>() * TAU).collect();
        let mut raw: Vec<f64> = (0..tf)
            .map(|t| {
                phases
                    .iter()
                    .enumerate()
                    .map(|(j, &phi)| {
                        let k = j + 1;
                        interval_averaged_harmonic(k, t, phi, horizon) / k as f64
                    })
                    .sum()
            })
            .collect();
        // The full-period sum is zero analytically; remove the rounding residue.
        let mean = raw.iter().sum::<f64>() / tf as f64;
        raw.iter_mut().for_each(|v| *v -= mean);
        let peak = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak > 0.0 && config.amplitude > 0.0 {
            for t in 0..tf {
                rel_fluct[(t, r)] = config.amplitude * raw[t] / peak;
            }
        }
    }

    let base: Vec<f64> = renewables.iter().map(|&i| grid.node(i).p0.max(0.0)).collect();
    let base_total: f64 = base.iter().sum();
    let target_total = config.penetration_target * total_load;
    let mut renewable_mean = DVector::zeros(grid.n());
    for (r, &i) in renewables.iter().enumerate() {
        renewable_mean[i] = if base_total > 0.0 {
            target_total * base[r] / base_total
        } else {
            target_total / renewables.len() as f64
        };
    }

    let mut abs_dev = DMatrix::zeros(tf, grid.n());
    for (r, &i) in renewables.iter().enumerate() {
        for t in 0..tf {
            abs_dev[(t, i)] = renewable_mean[i] * rel_fluct[(t, r)];
        }
    }
    let penetration = realized_penetration(grid, &abs_dev, &renewable_mean);
    Ok(ProfileSet {
        renewables: renewables.to_vec(),
        rel_fluct,
        abs_dev,
        renewable_mean,
        penetration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::bundled;
    use std::f64::consts::PI;

    fn quadrature(k: usize, t: usize, phi: f64, h: &ControlHorizon) -> f64 {
        // Composite Simpson on the interval average.
        let n = 2000;
        let d = h.delta();
        let w = TAU * k as f64 / h.length;
        let f = |tau: f64| (w * (t as f64 * d + tau) + phi).sin();
        let step = d / n as f64;
        let mut s = f(0.0) + f(d);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
        }
        s * step / 3.0 / d
    }

    #[test]
    fn harmonic_first_interval() {
        let h = ControlHorizon::with_steps(4).unwrap();
        let v = interval_averaged_harmonic(1, 0, 0.0, &h);
        assert!((v - 2.0 / PI).abs() < 1e-15);
        assert!((v - quadrature(1, 0, 0.0, &h)).abs() < 1e-12);
    }

    #[test]
    fn harmonic_matches_quadrature() {
        let h = ControlHorizon::with_steps(7).unwrap();
        for k in 1..5 {
            for t in 0..7 {
                let phi = 0.37 * k as f64 + 0.1 * t as f64;
                let a = interval_averaged_harmonic(k, t, phi, &h);
                assert!((a - quadrature(k, t, phi, &h)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn harmonic_sums_to_zero_and_flips_with_pi() {
        let h = ControlHorizon::with_steps(48).unwrap();
        for k in 1..=10 {
            let s: f64 = (0..48).map(|t| interval_averaged_harmonic(k, t, 0.7, &h)).sum();
            assert!(s.abs() < 1e-12, "k={k}: {s}");
            for t in 0..48 {
                let a = interval_averaged_harmonic(k, t, 0.0, &h);
                let b = interval_averaged_harmonic(k, t, PI, &h);
                assert!((a + b).abs() < 1e-12);
            }
        }
    }

    fn config(seed: u64, pen: f64) -> ProfileConfig {
        ProfileConfig {
            seed,
            penetration_target: pen,
            ..ProfileConfig::default()
        }
    }

    #[test]
    fn zero_amplitude_gives_constant_output() {
        let grid = bundled("toy3_congested").unwrap();
        let h = ControlHorizon::default();
        let cfg = ProfileConfig {
            amplitude: 0.0,
            ..config(3, 0.25)
        };
        let p = generate_profiles(&grid, &h, &cfg).unwrap();
        assert_eq!(p.rel_fluct.amax(), 0.0);
        assert_eq!(p.abs_dev.amax(), 0.0);
        assert!((p.renewable_mean[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let grid = bundled("toy3_congested").unwrap();
        let h = ControlHorizon::default();
        let a = generate_profiles(&grid, &h, &config(42, 0.3)).unwrap();
        let b = generate_profiles(&grid, &h, &config(42, 0.3)).unwrap();
        assert_eq!(a, b);
        let c = generate_profiles(&grid, &h, &config(43, 0.3)).unwrap();
        assert_ne!(a.rel_fluct, c.rel_fluct);
    }

    #[test]
    fn penetration_is_hit() {
        // Loads total 100 MW; over Tf steps the renewable must deliver 30% of that.
        let grid = bundled("toy3_congested").unwrap();
        let h = ControlHorizon::default();
        let p = generate_profiles(&grid, &h, &config(9, 0.3)).unwrap();
        let served: f64 = (0..h.steps).map(|t| p.output(t, 0)).sum();
        let load = 100.0 * h.steps as f64;
        assert!((served / load - 0.3).abs() < 1e-9);
        assert!((p.penetration - 0.3).abs() < 1e-9);
    }

    #[test]
    fn peak_equals_amplitude_and_mean_zero() {
        let grid = bundled("ring10").unwrap();
        let h = ControlHorizon::default();
        let p = generate_profiles(&grid, &h, &ProfileConfig { amplitude: 0.8, ..config(5, 0.4) }).unwrap();
        for r in 0..p.renewables.len() {
            let col = p.rel_fluct.column(r);
            assert!((col.amax() - 0.8).abs() < 1e-12);
            assert!(col.sum().abs() / h.steps as f64 <= 1e-9);
            let i = p.renewables[r];
            let energy: f64 = p.abs_dev.column(i).sum() * h.delta();
            assert!(energy.abs() <= 1e-9 * p.renewable_mean[i].max(1.0));
        }
    }

    #[test]
    fn no_renewables_is_an_error() {
        let grid = bundled("triangle3").unwrap();
        let err = generate_profiles(&grid, &ControlHorizon::default(), &config(1, 0.1)).unwrap_err();
        assert_eq!(err, ProfileError::NoRenewables);
    }

    #[test]
    fn config_is_validated() {
        let grid = bundled("toy3_congested").unwrap();
        let h = ControlHorizon::default();
        for cfg in [
            ProfileConfig { harmonics: 0, ..config(1, 0.1) },
            ProfileConfig { amplitude: -1.0, ..config(1, 0.1) },
            config(1, 0.6),
        ] {
            assert!(matches!(
                generate_profiles(&grid, &h, &cfg),
                Err(ProfileError::InvalidConfig(_))
            ));
        }
    }
}
