use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::blocktri::BlockTridiagonal;
use super::DispatchError;
use crate::grid::Grid;
use crate::horizon::ControlHorizon;
use crate::penalty::{band_penalty_unchecked, logcosh_penalty, PenaltyParams};
use crate::powerflow::FlowModel;
use crate::profile::ProfileSet;

/// The three cost terms of one control step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepCosts {
    pub line: f64,
    pub gen: f64,
    pub storage: f64,
}

impl StepCosts {
    pub fn total(&self) -> f64 {
        self.line + self.gen + self.storage
    }
}

/// Stored energy and storage power over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageTrajectory {
    /// Storage node indices, the column order of `s`.
    pub nodes: Vec<usize>,
    /// Energy, `(Tf + 1) × |nodes|`, with `s(0) = s(Tf) = 0`.
    pub s: DMatrix<f64>,
    /// Power, `Tf × n`, zero outside `nodes`.
    pub ps: DMatrix<f64>,
}

/// Value, gradient and Hessian of the objective at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: DVector<f64>,
    pub hessian: BlockTridiagonal,
}

struct StepEval {
    costs: StepCosts,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Dispatch objective over free stored-energy values.
///
/// The decision vector holds `s_j(t)` for the free steps, time-major. The
/// energy at `t = 0` and `t = Tf` is pinned to zero, which both closes the
/// cycle and removes the constant-shift null direction; with
/// `pin_first_step` the value at `t = 1` is pinned as well so that no
/// storage power flows in the first interval.
#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    grid: &'a Grid,
    horizon: ControlHorizon,
    gs: Vec<usize>,
    params: PenaltyParams,
    first_free: usize,
    /// Injections with zero storage power, one vector per step.
    base: Vec<DVector<f64>>,
    base_flows: Vec<DVector<f64>>,
    /// Line-flow response to unit storage power at each storage node.
    sens: DMatrix<f64>,
    gen_alpha: Vec<f64>,
}

impl<'a> DispatchProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &'a Grid,
        model: &FlowModel,
        horizon: ControlHorizon,
        gs: &[usize],
        p0: &DVector<f64>,
        profiles: &ProfileSet,
        params: PenaltyParams,
        pin_first_step: bool,
    ) -> Result<Self, DispatchError> {
        let n = grid.n();
        let tf = horizon.steps;
        if p0.len() != n || model.n() != n {
            return Err(DispatchError::Shape(format!(
                "p0 has {} entries for a {n}-node grid",
                p0.len()
            )));
        }
        if profiles.abs_dev.nrows() != tf || profiles.abs_dev.ncols() != n {
            return Err(DispatchError::Shape(format!(
                "profiles are {}×{}, expected {tf}×{n}",
                profiles.abs_dev.nrows(),
                profiles.abs_dev.ncols()
            )));
        }
        let mut seen = vec![false; n];
        for &j in gs {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(DispatchError::Shape(format!("invalid storage node index {j}")));
            }
        }

        let alpha = DVector::from_vec(grid.alpha());
        let m = model.flow_matrix();
        let m_alpha = m * &alpha;
        let mut sens = DMatrix::zeros(m.nrows(), gs.len());
        for (c, &j) in gs.iter().enumerate() {
            sens.set_column(c, &(m.column(j) - &m_alpha));
        }
        let mut base = Vec::with_capacity(tf);
        let mut base_flows = Vec::with_capacity(tf);
        for t in 0..tf {
            let dev = profiles.deviation(t);
            let p = p0 + &dev - &alpha * dev.sum();
            base_flows.push(m * &p);
            base.push(p);
        }
        let gen_alpha = grid.generators().iter().map(|&g| alpha[g]).collect();
        Ok(DispatchProblem {
            grid,
            horizon,
            gs: gs.to_vec(),
            params,
            first_free: if pin_first_step { 2 } else { 1 },
            base,
            base_flows,
            sens,
            gen_alpha,
        })
    }

    pub fn storage_nodes(&self) -> &[usize] {
        &self.gs
    }

    pub fn horizon(&self) -> &ControlHorizon {
        &self.horizon
    }

    /// Number of free time indices.
    pub fn free_steps(&self) -> usize {
        self.horizon.steps.saturating_sub(self.first_free)
    }

    pub fn dim(&self) -> usize {
        if self.gs.is_empty() {
            0
        } else {
            self.free_steps() * self.gs.len()
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), DispatchError> {
        if x.len() != self.dim() {
            return Err(DispatchError::Shape(format!(
                "decision vector has {} entries, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Energy trajectory `(Tf + 1) × |gs|` for a decision vector.
    pub fn energy(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, DispatchError> {
        self.check_dim(x)?;
        let s_count = self.gs.len();
        let mut s = DMatrix::zeros(self.horizon.steps + 1, s_count);
        for b in 0..self.free_steps() {
            for j in 0..s_count {
                s[(self.first_free + b, j)] = x[b * s_count + j];
            }
        }
        Ok(s)
    }

    fn step_power(&self, s: &DMatrix<f64>, t: usize) -> DVector<f64> {
        let delta = self.horizon.delta();
        DVector::from_fn(self.gs.len(), |j, _| (s[(t + 1, j)] - s[(t, j)]) / delta)
    }

    pub fn trajectory(&self, x: &DVector<f64>) -> Result<StorageTrajectory, DispatchError> {
        let s = self.energy(x)?;
        let mut ps = DMatrix::zeros(self.horizon.steps, self.grid.n());
        for t in 0..self.horizon.steps {
            let u = self.step_power(&s, t);
            for (c, &j) in self.gs.iter().enumerate() {
                ps[(t, j)] = u[c];
            }
        }
        Ok(StorageTrajectory {
            nodes: self.gs.clone(),
            s,
            ps,
        })
    }

    fn step(&self, t: usize, u: &DVector<f64>, derivs: bool) -> StepEval {
        let sc = self.gs.len();
        let mut costs = StepCosts::default();
        let mut grad = DVector::zeros(if derivs { sc } else { 0 });
        let mut hess = DMatrix::zeros(if derivs { sc } else { 0 }, if derivs { sc } else { 0 });
        let params = &self.params;

        let flows = if sc > 0 {
            &self.base_flows[t] + &self.sens * u
        } else {
            self.base_flows[t].clone()
        };
        for (k, line) in self.grid.lines().iter().enumerate() {
            let pen = band_penalty_unchecked(flows[k], -line.fbar, line.fbar, params);
            costs.line += pen.value;
            if derivs && (pen.d1 != 0.0 || pen.d2 != 0.0) {
                let row = self.sens.row(k).transpose();
                grad.axpy(pen.d1, &row, 1.0);
                hess.ger(pen.d2, &row, &row, 1.0);
            }
        }

        let total_storage = u.sum();
        let mut gen_d1 = 0.0;
        let mut gen_d2 = 0.0;
        for (gi, &g) in self.grid.generators().iter().enumerate() {
            let a = self.gen_alpha[gi];
            let p_ns = self.base[t][g] - a * total_storage;
            let pen = band_penalty_unchecked(p_ns, 0.0, self.grid.node(g).pbar, params);
            costs.gen += pen.value;
            gen_d1 -= a * pen.d1;
            gen_d2 += a * a * pen.d2;
        }

        for j in 0..sc {
            let pen = logcosh_penalty(u[j], params);
            costs.storage += pen.value;
            if derivs {
                grad[j] += gen_d1 + pen.d1;
                hess[(j, j)] += pen.d2;
            }
        }
        if derivs && gen_d2 != 0.0 {
            hess.add_scalar_mut(gen_d2);
        }
        StepEval { costs, grad, hess }
    }

    /// Per-step cost terms.
    pub fn step_costs(&self, x: &DVector<f64>) -> Result<Vec<StepCosts>, DispatchError> {
        let s = self.energy(x)?;
        Ok((0..self.horizon.steps)
            .map(|t| self.step(t, &self.step_power(&s, t), false).costs)
            .collect())
    }

    pub fn cost(&self, x: &DVector<f64>) -> Result<f64, DispatchError> {
        Ok(self.step_costs(x)?.iter().map(StepCosts::total).sum())
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation, DispatchError> {
        let s = self.energy(x)?;
        let sc = self.gs.len();
        let tf = self.horizon.steps;
        let steps: Vec<StepEval> = (0..tf)
            .map(|t| self.step(t, &self.step_power(&s, t), sc > 0))
            .collect();
        let cost = steps.iter().map(|e| e.costs.total()).sum();

        let nb = if sc == 0 { 0 } else { self.free_steps() };
        let delta = self.horizon.delta();
        let inv_d2 = 1.0 / (delta * delta);
        let mut gradient = DVector::zeros(nb * sc);
        let mut hessian = BlockTridiagonal::zeros(nb, sc);
        for b in 0..nb {
            // Free index k enters u(k − 1) with +1/Δ and u(k) with −1/Δ.
            let k = self.first_free + b;
            let g = (&steps[k - 1].grad - &steps[k].grad) / delta;
            gradient.rows_mut(b * sc, sc).copy_from(&g);
            hessian.diag[b] = (&steps[k - 1].hess + &steps[k].hess) * inv_d2;
            if b + 1 < nb {
                hessian.lower[b] = &steps[k].hess * -inv_d2;
            }
        }
        Ok(Evaluation {
            cost,
            gradient,
            hessian,
        })
    }

    /// Total and storage-free injections at step `t` for a given trajectory.
    pub fn injections(&self, traj: &StorageTrajectory, t: usize) -> (DVector<f64>, DVector<f64>) {
        let mut p = self.base[t].clone();
        let mut p_ns = self.base[t].clone();
        let total: f64 = traj.nodes.iter().map(|&j| traj.ps[(t, j)]).sum();
        let alpha = self.grid.alpha();
        for i in 0..p.len() {
            p[i] -= alpha[i] * total;
            p_ns[i] -= alpha[i] * total;
        }
        for &j in &traj.nodes {
            p[j] += traj.ps[(t, j)];
        }
        (p, p_ns)
    }
}
