use storage_planner::penalty::PenaltyParams;
use storage_planner::placement::PlacementConfig;
use storage_planner::profile::{ProfileConfig, MAX_PENETRATION};

#[test]
fn penalty_constants() {
    let p = PenaltyParams::default();
    assert_eq!(p.kappa_f, 50.0);
    assert_eq!(p.kappa_h, 0.001);
    // Signed cube below the band unless asked otherwise.
    assert!(!p.abs_cubic);
    assert!(PenaltyParams::nonnegative().abs_cubic);
}

#[test]
fn monte_carlo_defaults() {
    assert_eq!(PlacementConfig::default().trials, 2000);
    assert_eq!(MAX_PENETRATION, 0.5);
    let p = ProfileConfig::default();
    assert_eq!(p.harmonics, 10);
    assert_eq!(p.amplitude, 1.0);
}
