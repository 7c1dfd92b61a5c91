mod common;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storage_planner::penalty::{band_penalty, logcosh_penalty, PenaltyParams};

fn rel_err(fd: f64, exact: f64, floor: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(floor)
}

#[test]
fn band_reference_value() {
    let p = band_penalty(1.02, 0.0, 1.0, &PenaltyParams::default()).unwrap();
    assert_eq!(p.value, 1.0);
}

#[test]
fn band_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for params in [PenaltyParams::default(), PenaltyParams::nonnegative()] {
        let mut n = 0;
        while n < 1000 {
            let a: f64 = rng.random_range(-100.0..0.0);
            let b = a + rng.random_range(0.0..200.0);
            let x: f64 = rng.random_range(a - 3.0..b + 3.0);
            // Derivatives are only C² at the edges; stay clear of them.
            if (x - a).abs() < 1e-3 || (x - b).abs() < 1e-3 {
                continue;
            }
            n += 1;
            let h = 1e-6;
            let f = |x| band_penalty(x, a, b, &params).unwrap();
            let p = f(x);
            let d1 = (f(x + h).value - f(x - h).value) / (2.0 * h);
            let d2 = (f(x + h).d1 - f(x - h).d1) / (2.0 * h);
            if p.d1 == 0.0 {
                assert_eq!((p.value, p.d2), (0.0, 0.0));
                assert!(d1.abs() < 1e-12 && d2.abs() < 1e-12);
                continue;
            }
            assert!(rel_err(d1, p.d1, 1e-6) <= 1e-6, "d1 at {x} in [{a}, {b}]: {d1} vs {}", p.d1);
            assert!(rel_err(d2, p.d2, 1e-6) <= 1e-6, "d2 at {x} in [{a}, {b}]: {d2} vs {}", p.d2);
            let oracle = if params.abs_cubic || x > b {
                common::band(x, a, b)
            } else {
                -common::band(x, a, b)
            };
            assert!(rel_err(p.value, oracle, 1e-300) <= 1e-8);
        }
    }
}

#[test]
fn logcosh_matches_finite_differences() {
    let params = PenaltyParams::default();
    let k = params.kappa_h;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let x = rng.random_range(-5.0 / k..5.0 / k);
        let h = 1e-2;
        let p = logcosh_penalty(x, &params);
        let d1 = (logcosh_penalty(x + h, &params).value - logcosh_penalty(x - h, &params).value) / (2.0 * h);
        let d2 = (logcosh_penalty(x + h, &params).d1 - logcosh_penalty(x - h, &params).d1) / (2.0 * h);
        // Floors at a thousandth of each derivative's natural scale.
        assert!(rel_err(d1, p.d1, 1e-3 * k) <= 1e-6, "d1 at {x}: {d1} vs {}", p.d1);
        assert!(rel_err(d2, p.d2, 1e-3 * k * k) <= 1e-6, "d2 at {x}: {d2} vs {}", p.d2);
        // The naive ln(cosh) loses digits near zero.
        assert!(rel_err(p.value, common::logcosh(x), 1e-6) <= 1e-9);
    }
}

proptest! {
    #[test]
    fn logcosh_is_even_convex_and_finite(x in -1e12..1e12f64) {
        let params = PenaltyParams::default();
        let p = logcosh_penalty(x, &params);
        let q = logcosh_penalty(-x, &params);
        prop_assert!(p.value.is_finite() && p.d1.is_finite() && p.d2.is_finite());
        prop_assert_eq!(p.value, q.value);
        prop_assert_eq!(p.d1, -q.d1);
        prop_assert!(p.value >= 0.0 && p.d2 >= 0.0);
        prop_assert!(p.d1.abs() <= params.kappa_h);
    }

    #[test]
    fn band_vanishes_inside(a in -1e3..0.0f64, w in 0.0..1e3f64, t in 0.0..=1.0f64) {
        let b = a + w;
        let x = a + t * w;
        let p = band_penalty(x, a, b, &PenaltyParams::default()).unwrap();
        prop_assert_eq!((p.value, p.d1, p.d2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn nonnegative_band_is_convex(a in -1e3..0.0f64, w in 0.0..1e3f64, x in -3e3..3e3f64) {
        let p = band_penalty(x, a, a + w, &PenaltyParams::nonnegative()).unwrap();
        prop_assert!(p.value >= 0.0 && p.d2 >= 0.0);
    }

    #[test]
    fn inverted_band_is_rejected(a in -1e3..1e3f64, gap in 1e-9..1e3f64, x in -1e3..1e3f64) {
        prop_assert!(band_penalty(x, a, a - gap, &PenaltyParams::default()).is_err());
    }
}
