use proptest::prelude::*;
use storage_planner::grid::bundled;
use storage_planner::horizon::ControlHorizon;
use storage_planner::profile::{generate_profiles, interval_averaged_harmonic, ProfileConfig};

fn config() -> impl Strategy<Value = (ProfileConfig, usize)> {
    (1usize..16, 0.0..2.0f64, any::<u64>(), 0.0..=0.5f64, 2usize..64).prop_map(|(k, amp, seed, pen, tf)| {
        (
            ProfileConfig {
                harmonics: k,
                amplitude: amp,
                seed,
                penetration_target: pen,
            },
            tf,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn profiles_are_zero_mean_and_consistent((cfg, tf) in config()) {
        let grid = bundled("ring10").unwrap();
        let horizon = ControlHorizon::with_steps(tf).unwrap();
        let p = generate_profiles(&grid, &horizon, &cfg).unwrap();
        prop_assert_eq!(p.rel_fluct.shape(), (tf, 1));
        prop_assert_eq!(p.abs_dev.shape(), (tf, grid.n()));
        for c in 0..p.rel_fluct.ncols() {
            let mean = p.rel_fluct.column(c).sum() / tf as f64;
            prop_assert!(mean.abs() < 1e-9, "column mean {}", mean);
            let peak = p.rel_fluct.column(c).amax();
            prop_assert!(peak <= cfg.amplitude * (1.0 + 1e-12));
        }
        for i in 0..grid.n() {
            for t in 0..tf {
                let expected = match p.renewables.iter().position(|&r| r == i) {
                    Some(c) => p.renewable_mean[i] * p.rel_fluct[(t, c)],
                    None => 0.0,
                };
                prop_assert_eq!(p.abs_dev[(t, i)], expected);
            }
        }
        prop_assert!((p.penetration - cfg.penetration_target).abs() < 1e-9);
        prop_assert_eq!(generate_profiles(&grid, &horizon, &cfg).unwrap(), p);
    }

    #[test]
    fn harmonic_is_bounded_and_periodic(k in 1usize..20, tf in 2usize..100, phi in 0.0..std::f64::consts::TAU) {
        let h = ControlHorizon::with_steps(tf).unwrap();
        let values: Vec<f64> = (0..tf).map(|t| interval_averaged_harmonic(k, t, phi, &h)).collect();
        prop_assert!(values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        // A whole number of periods averages to zero.
        prop_assert!(values.iter().sum::<f64>().abs() < 1e-9);
    }
}

#[test]
fn distinct_seeds_give_distinct_phases() {
    let grid = bundled("ring10").unwrap();
    let h = ControlHorizon::default();
    let a = generate_profiles(&grid, &h, &ProfileConfig { seed: 1, ..ProfileConfig::default() }).unwrap();
    let b = generate_profiles(&grid, &h, &ProfileConfig { seed: 2, ..ProfileConfig::default() }).unwrap();
    assert_ne!(a.rel_fluct, b.rel_fluct);
}
