use serde::{Deserialize, Serialize};

/// Uniform discretization of the control window `[0, T]` into `Tf` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlHorizon {
    /// Window length `T` in normalized time units.
    pub length: f64,
    /// Number of steps `Tf`.
    pub steps: usize,
}

impl Default for ControlHorizon {
    fn default() -> Self {
        ControlHorizon {
            length: 1.0,
            steps: 48,
        }
    }
}

impl ControlHorizon {
    /// `None` unless `steps >= 2` and `length` is finite and positive.
    pub fn new(length: f64, steps: usize) -> Option<Self> {
        (steps >= 2 && length.is_finite() && length > 0.0).then_some(ControlHorizon { length, steps })
    }

    pub fn with_steps(steps: usize) -> Option<Self> {
        Self::new(1.0, steps)
    }

    /// Step length `Δ = T / Tf`.
    pub fn delta(&self) -> f64 {
        self.length / self.steps as f64
    }
}
