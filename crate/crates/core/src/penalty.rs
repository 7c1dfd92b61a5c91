//! The two scalar penalty functions of the dispatch objective.
//!
//! `band_penalty` is zero inside `[a, b]` and cubic outside; `logcosh_penalty`
//! charges storage power and grows almost linearly for large arguments. Both
//! return `(value, first derivative, second derivative)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("band lower bound {a} exceeds upper bound {b}")]
pub struct BandError {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub kappa_f: f64,
    pub kappa_h: f64,
    /// Charge `|κ_f (x − a)|³` below the band instead of the signed cube.
    ///
    /// The signed form is negative below the band, which makes any objective
    /// built on it unbounded below once a decision can push a quantity under
    /// its lower limit.
    #[serde(default)]
    pub abs_cubic: bool,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            kappa_f: 50.0,
            kappa_h: 0.001,
            abs_cubic: false,
        }
    }
}

impl PenaltyParams {
    /// Default constants with the nonnegative cubic below the band.
    pub fn nonnegative() -> Self {
        PenaltyParams {
            abs_cubic: true,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kappa_f > 0.0 && self.kappa_h > 0.0
    }
}

/// Value and first two derivatives of a scalar function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Penalty {
    pub const ZERO: Penalty = Penalty {
        value: 0.0,
        d1: 0.0,
        d2: 0.0,
    };
}

pub fn band_penalty(x: f64, a: f64, b: f64, params: &PenaltyParams) -> Result<Penalty, BandError> {
    if a > b {
        return Err(BandError { a, b });
    }
    Ok(band_penalty_unchecked(x, a, b, params))
}

/// [`band_penalty`] for callers that already guarantee `a <= b`.
#[inline]
pub fn band_penalty_unchecked(x: f64, a: f64, b: f64, params: &PenaltyParams) -> Penalty {
    let k = params.kappa_f;
    if x > b {
        let kd = k * x - k * b;
        Penalty {
            value: kd * kd * kd,
            d1: 3.0 * k * kd * kd,
            d2: 6.0 * k * k * kd,
        }
    } else if x < a {
        let kd = k * x - k * a;
        let sign = if params.abs_cubic { -1.0 } else { 1.0 };
        Penalty {
            value: sign * kd * kd * kd,
            d1: sign * 3.0 * k * kd * kd,
            d2: sign * 6.0 * k * k * kd,
        }
    } else {
        Penalty::ZERO
    }
}

/// `log cosh(κ_h x)` and its derivatives, finite for every finite `x`.
#[inline]
pub fn logcosh_penalty(x: f64, params: &PenaltyParams) -> Penalty {
    let k = params.kappa_h;
    let z = k * x;
    let az = z.abs();
    // e^{-2|z|} underflows gracefully to 0 for large |z|.
    let e = (-2.0 * az).exp();
    let value = az + e.ln_1p() - std::f64::consts::LN_2;
    let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    Penalty {
        value,
        d1: k * z.tanh(),
        d2: k * k * sech2,
    }
}
