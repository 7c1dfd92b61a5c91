use nalgebra::DMatrix;
use proptest::prelude::*;
use storage_planner::dispatch::DispatchOptions;
use storage_planner::grid::{bundled, Grid};
use storage_planner::horizon::ControlHorizon;
use storage_planner::placement::{collect_activity, mean_capacity, run_placement, ActivityStats, PlacementConfig};
use storage_planner::powerflow::{build_flow_model, FlowModel};
use storage_planner::profile::ProfileConfig;
use storage_planner::trial::{PenetrationMode, TrialSetup};

fn setup<'a>(grid: &'a Grid, model: &'a FlowModel, steps: usize) -> TrialSetup<'a> {
    TrialSetup {
        grid,
        model,
        horizon: ControlHorizon::with_steps(steps).unwrap(),
        profile: ProfileConfig::default(),
        penetration: PenetrationMode::Uniform,
        dispatch: DispatchOptions::default(),
    }
}

#[test]
fn placement_nests_and_keeps_capacity() {
    let grid = bundled("ring10").unwrap();
    let model = build_flow_model(&grid).unwrap();
    let setup = setup(&grid, &model, 24);
    let config = PlacementConfig {
        trials: 20,
        seed: 5,
        ..PlacementConfig::default()
    };
    let report = run_placement(&setup, &config).unwrap();
    assert!(!report.iterations.is_empty() && report.iterations.len() <= config.max_outer);
    let mut previous: Vec<usize> = (0..grid.n()).collect();
    for it in &report.iterations {
        assert_eq!(it.gs_before, previous);
        assert!(!it.gs_after.is_empty());
        assert!(it.gs_after.iter().all(|j| it.gs_before.contains(j)));
        let mut sorted = it.rank_order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, it.gs_before);
        previous = it.gs_after.clone();
    }
    assert_eq!(report.final_set, previous);
    let last = report.iterations.last().unwrap();
    assert!(last.gamma <= config.epsilon_prime || last.gs_after == last.gs_before || report.iterations.len() == config.max_outer);

    // Compare both sets on one fresh batch.
    let all: Vec<usize> = (0..grid.n()).collect();
    let full = mean_capacity(&setup, &all, 20, 99, 0).unwrap();
    let reduced = mean_capacity(&setup, &report.final_set, 20, 99, 0).unwrap();
    assert!(reduced <= (1.0 + config.epsilon_rel) * full, "{reduced} vs {full}");

    let again = run_placement(&setup, &config).unwrap();
    assert_eq!(again, report);
}

#[test]
fn empty_storage_set_has_no_activity() {
    let grid = bundled("ring10").unwrap();
    let model = build_flow_model(&grid).unwrap();
    let stats = collect_activity(&setup(&grid, &model, 12), &[], 5, 1, 0).unwrap();
    assert!(stats.activity.is_empty());
    assert_eq!(stats.trials, 5);
    assert_eq!(stats.max(), 0.0);
}

#[test]
fn activity_is_deterministic_and_nonnegative() {
    let grid = bundled("ring10").unwrap();
    let model = build_flow_model(&grid).unwrap();
    let s = setup(&grid, &model, 12);
    let gs = [0, 2, 5, 7];
    let a = collect_activity(&s, &gs, 8, 3, 4).unwrap();
    let b = collect_activity(&s, &gs, 8, 3, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_trial.shape(), (8, 4));
    for (c, &v) in a.activity.iter().enumerate() {
        assert!(v >= 0.0);
        let mean = a.per_trial.column(c).sum() / 8.0;
        assert!((v - mean).abs() <= 1e-12 * mean.max(1.0));
    }
    let other = collect_activity(&s, &gs, 8, 3, 5).unwrap();
    assert_ne!(a.per_trial, other.per_trial);
}

fn activity_strategy() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (1usize..12, 1usize..6)
        .prop_flat_map(|(n, trials)| (prop::collection::vec(0.0..100.0f64, n * trials), Just(trials)))
}

proptest! {
    #[test]
    fn cuts_are_nested_in_gamma((values, trials) in activity_strategy(), g1 in 0.0..=1.0f64, g2 in 0.0..=1.0f64) {
        let n = values.len() / trials;
        let stats = ActivityStats::from_per_trial((0..n).collect(), DMatrix::from_row_slice(trials, n, &values));
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let wide = stats.cut(lo);
        let narrow = stats.cut(hi);
        prop_assert!(narrow.iter().all(|j| wide.contains(j)));
        prop_assert!(!narrow.is_empty());
        prop_assert!(stats.activity.iter().all(|&a| a >= 0.0));
        let order = stats.rank_order();
        prop_assert!(order.windows(2).all(|w| stats.activity[w[0]] >= stats.activity[w[1]]));
        prop_assert_eq!(stats.cut(0.0).len(), n);
    }
}
