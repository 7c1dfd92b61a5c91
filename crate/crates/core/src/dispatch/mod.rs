//! Storage dispatch against known renewable fluctuations.
//!
//! Storage power, renewable deviations and the droop response of the
//! generators combine into the injections of each step. Line and generator
//! limits are softened with cubic band penalties and storage power is charged
//! with a log-cosh term; the sum over the horizon is minimized by a damped
//! Newton method over the stored-energy trajectory.

mod blocktri;
mod objective;

use log::{debug, trace};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blocktri::{BlockCholesky, BlockTridiagonal};
pub use objective::{DispatchProblem, Evaluation, StepCosts, StorageTrajectory};

use crate::grid::Grid;
use crate::horizon::ControlHorizon;
use crate::penalty::PenaltyParams;
use crate::powerflow::{check_constraints, FlowModel, ViolationBreakdown};
use crate::profile::ProfileSet;

#[derive(Debug, Error, PartialEq)]
pub enum DispatchError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("damped Newton system could not be solved at lambda = {lambda:e} (iteration {iteration})")]
    Numerical { iteration: usize, lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispatchOptions {
    pub max_iter: usize,
    /// Stop once the gradient's largest component is at most this.
    pub grad_tol: f64,
    /// Initial damping λ in `(H + λI) d = −g`.
    pub lambda0: f64,
    pub lambda_max: f64,
    pub penalty: PenaltyParams,
    /// Also pin `s(1) = 0`, i.e. no storage power in the first interval.
    pub pin_first_step: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            max_iter: 200,
            grad_tol: 1e-6,
            lambda0: 1e-3,
            lambda_max: 1e9,
            penalty: PenaltyParams::nonnegative(),
            pin_first_step: false,
        }
    }
}

const LAMBDA_MIN: f64 = 1e-15;
const BACKTRACK: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    pub trajectory: StorageTrajectory,
    pub p0: DVector<f64>,
    pub total_cost: f64,
    pub per_step_costs: Vec<StepCosts>,
    pub violations: Vec<ViolationBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<f64>,
    /// Iterations whose undamped Hessian failed a Cholesky factorization.
    pub indefinite_hessians: usize,
    pub gradient_norm: f64,
}

impl DispatchSolution {
    pub fn total_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.total).sum()
    }

    /// Time-averaged total violation in MW.
    pub fn mean_violation(&self) -> f64 {
        self.total_violation() / self.violations.len().max(1) as f64
    }
}

/// Injections with storage and droop response:
/// `p = p0 + ps + pr + α (−Σ pr − Σ ps)`.
pub fn total_power(
    p0: &DVector<f64>,
    ps: &DVector<f64>,
    pr_dev: &DVector<f64>,
    alpha: &DVector<f64>,
) -> DVector<f64> {
    let mismatch = -pr_dev.sum() - ps.sum();
    p0 + ps + pr_dev + alpha * mismatch
}

/// Minimizes the dispatch objective for storage at `gs`.
#[allow(clippy::too_many_arguments)]
pub fn solve_dispatch(
    grid: &Grid,
    model: &FlowModel,
    horizon: &ControlHorizon,
    gs: &[usize],
    p0: &DVector<f64>,
    profiles: &ProfileSet,
    opts: &DispatchOptions,
) -> Result<DispatchSolution, DispatchError> {
    let problem = DispatchProblem::new(
        grid,
        model,
        *horizon,
        gs,
        p0,
        profiles,
        opts.penalty,
        opts.pin_first_step,
    )?;
    let mut x = DVector::zeros(problem.dim());
    let mut eval = problem.evaluate(&x)?;
    let mut cost_history = vec![eval.cost];
    let mut lambda = opts.lambda0;
    let mut iterations = 0;
    let mut indefinite_hessians = 0;
    let mut converged = false;

    loop {
        let gnorm = eval.gradient.amax();
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        if eval.hessian.factor(0.0).is_none() {
            indefinite_hessians += 1;
            debug!("iteration {iterations}: Hessian is not positive definite");
        }
        let rhs = -&eval.gradient;
        let mut accepted = false;
        loop {
            let at_cap = lambda >= opts.lambda_max;
            let lam = lambda.min(opts.lambda_max);
            let step = eval.hessian.factor(lam).and_then(|f| f.solve(&rhs));
            match step {
                Some(d) => {
                    // Cubic penalties have no curvature at their band edge,
                    // so the quadratic model cannot see a wall the step is
                    // about to cross. Backtracking along d finds the wall
                    // without inflating λ for every later iteration.
                    let mut t = 1.0;
                    let mut found = false;
                    for _ in 0..BACKTRACK {
                        let trial = &x + &d * t;
                        let trial_cost = problem.cost(&trial)?;
                        let better = trial_cost < eval.cost || {
                            // Equal cost at rounding level: accept only if the
                            // gradient shrinks, so the iteration cannot cycle.
                            trial_cost == eval.cost && {
                                let e = problem.evaluate(&trial)?;
                                e.gradient.amax() < gnorm
                            }
                        };
                        if better {
                            x = trial;
                            found = true;
                            break;
                        }
                        t *= 0.5;
                    }
                    if found {
                        eval = problem.evaluate(&x)?;
                        cost_history.push(eval.cost);
                        if t == 1.0 {
                            lambda = (lam / 3.0).max(LAMBDA_MIN);
                        }
                        accepted = true;
                        break;
                    }
                }
                None if at_cap => {
                    return Err(DispatchError::Numerical {
                        iteration: iterations,
                        lambda: lam,
                    })
                }
                None => {}
            }
            if at_cap {
                break;
            }
            lambda = lam * 10.0;
        }
        trace!("iteration {iterations}: cost {:e}, lambda {lambda:e}", eval.cost);
        if !accepted {
            debug!("stalled at iteration {iterations} with gradient {gnorm:e}");
            break;
        }
    }

    let trajectory = problem.trajectory(&x)?;
    let per_step_costs = problem.step_costs(&x)?;
    let total_cost = per_step_costs.iter().map(StepCosts::total).sum();
    let violations = (0..horizon.steps)
        .map(|t| {
            let (p, p_ns) = problem.injections(&trajectory, t);
            check_constraints(grid, model, &p, &p_ns)
        })
        .collect();
    Ok(DispatchSolution {
        trajectory,
        p0: p0.clone(),
        total_cost,
        per_step_costs,
        violations,
        iterations,
        converged,
        cost_history,
        indefinite_hessians,
        gradient_norm: eval.gradient.amax(),
    })
}
