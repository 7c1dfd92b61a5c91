//! DC optimal power flow: least-cost generator dispatch subject to the DC
//! flow model, line limits and generator limits.
//!
//! The linear program is small and dense, so it is handed to `microlp`.
//! Equal-cost optima are resolved towards the lexicographically smallest
//! generator vector by a sequence of follow-up programs, one per generator,
//! each minimizing that generator's output with the cost held at the optimum.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use nalgebra::DVector;
use thiserror::Error;

use crate::grid::{Grid, NodeKind};
use crate::powerflow::FlowModel;

/// Feasibility tolerance applied when verifying the returned dispatch, in MW.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum DcopfError {
    #[error("generation capacity {capacity} MW cannot cover net load {net_load} MW")]
    CapacityShortfall { capacity: f64, net_load: f64 },
    #[error("renewable output exceeds load by {surplus} MW and generators cannot go negative")]
    Surplus { surplus: f64 },
    #[error("line limits make the dispatch infeasible")]
    Congestion,
    #[error("line {line} is overloaded by fixed injections alone ({flow} MW > {fbar} MW)")]
    FixedOverload { line: usize, flow: f64, fbar: f64 },
    #[error("LP solver failure: {0}")]
    Solver(String),
}

/// Generator set points from a DCOPF, with loads and renewable means filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDispatch {
    pub p0: DVector<f64>,
    pub objective_cost: f64,
}

struct Lp<'a> {
    grid: &'a Grid,
    model: &'a FlowModel,
    fixed: DVector<f64>,
    net_load: f64,
}

impl Lp<'_> {
    /// Builds the base program; extra rows are appended by the caller.
    fn build(&self, objective: &[f64]) -> (Problem, Vec<Variable>) {
        let gens = self.grid.generators();
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = gens
            .iter()
            .zip(objective)
            .map(|(&g, &c)| lp.add_var(c, (0.0, self.grid.node(g).pbar)))
            .collect();
        lp.add_constraint(
            vars.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
            ComparisonOp::Eq,
            self.net_load,
        );
        let m = self.model.flow_matrix();
        let fixed_flows = m * &self.fixed;
        for (k, line) in self.grid.lines().iter().enumerate() {
            let row: Vec<(Variable, f64)> = gens
                .iter()
                .zip(&vars)
                .map(|(&g, &v)| (v, m[(k, g)]))
                .filter(|(_, c)| *c != 0.0)
                .collect();
            if row.is_empty() {
                continue;
            }
            lp.add_constraint(row.clone(), ComparisonOp::Le, line.fbar - fixed_flows[k]);
            lp.add_constraint(row, ComparisonOp::Ge, -line.fbar - fixed_flows[k]);
        }
        (lp, vars)
    }
}

fn solve_lp(lp: &Problem, vars: &[Variable]) -> Result<(Vec<f64>, f64), DcopfError> {
    let outcome = lp.solve().map_err(|e| match e {
        microlp::Error::Infeasible => DcopfError::Congestion,
        other => DcopfError::Solver(format!("{other:?}")),
    })?;
    let sol = outcome
        .into_solution()
        .map_err(|_| DcopfError::Solver("interrupted".into()))?;
    Ok((vars.iter().map(|&v| sol[v]).collect(), sol.objective()))
}

/// Solves the DCOPF with renewables held at `renewable_mean` (MW, full-length,
/// read at renewable nodes only).
pub fn solve_dcopf(
    grid: &Grid,
    model: &FlowModel,
    renewable_mean: &DVector<f64>,
) -> Result<BaseDispatch, DcopfError> {
    let n = grid.n();
    let mut fixed = DVector::zeros(n);
    for (i, node) in grid.nodes().iter().enumerate() {
        fixed[i] = match node.kind {
            NodeKind::Load => node.p0,
            NodeKind::Renewable => renewable_mean[i],
            NodeKind::Generator => 0.0,
        };
    }
    let net_load = -fixed.sum();
    let gens = grid.generators();
    let capacity: f64 = gens.iter().map(|&g| grid.node(g).pbar).sum();
    if net_load > capacity + FEASIBILITY_TOL {
        return Err(DcopfError::CapacityShortfall { capacity, net_load });
    }
    if net_load < -FEASIBILITY_TOL {
        return Err(DcopfError::Surplus { surplus: -net_load });
    }
    let m = model.flow_matrix();
    let fixed_flows = m * &fixed;
    for (k, line) in grid.lines().iter().enumerate() {
        if gens.iter().all(|&g| m[(k, g)] == 0.0) && fixed_flows[k].abs() > line.fbar + FEASIBILITY_TOL {
            return Err(DcopfError::FixedOverload {
                line: k,
                flow: fixed_flows[k],
                fbar: line.fbar,
            });
        }
    }

    let lp = Lp {
        grid,
        model,
        fixed: fixed.clone(),
        net_load,
    };
    let costs: Vec<f64> = gens.iter().map(|&g| grid.node(g).cost).collect();
    let (lp0, vars) = lp.build(&costs);
    let (mut x, best) = solve_lp(&lp0, &vars)?;

    // Lexicographic tie-break among cost-optimal dispatches.
    let cost_cap = best + 1e-9 * best.abs().max(1.0);
    let mut fixed_upper: Vec<(usize, f64)> = Vec::new();
    for j in 0..gens.len() {
        let mut unit = vec![0.0; gens.len()];
        unit[j] = 1.0;
        let (mut prob, v) = lp.build(&unit);
        prob.add_constraint(
            v.iter().zip(&costs).map(|(&var, &c)| (var, c)).collect::<Vec<_>>(),
            ComparisonOp::Le,
            cost_cap,
        );
        for &(k, ub) in &fixed_upper {
            prob.add_constraint([(v[k], 1.0)], ComparisonOp::Le, ub);
        }
        match solve_lp(&prob, &v) {
            Ok((y, _)) => {
                fixed_upper.push((j, y[j] + 1e-9 * y[j].abs().max(1.0)));
                x = y;
            }
            // Tolerance noise can make a follow-up program infeasible; keep
            // the last good point.
            Err(DcopfError::Congestion) => break,
            Err(e) => return Err(e),
        }
    }

    let mut p0 = fixed;
    for (&g, &v) in gens.iter().zip(&x) {
        p0[g] = v.clamp(0.0, grid.node(g).pbar);
    }
    let objective_cost = gens.iter().map(|&g| grid.node(g).cost * p0[g]).sum();
    let out = BaseDispatch { p0, objective_cost };
    debug_assert!(is_feasible(grid, model, &out.p0, 1e-6));
    Ok(out)
}

/// Checks balance, generator bounds and line limits within `tol` MW.
pub fn is_feasible(grid: &Grid, model: &FlowModel, p: &DVector<f64>, tol: f64) -> bool {
    if p.sum().abs() > tol {
        return false;
    }
    if grid
        .generators()
        .iter()
        .any(|&g| p[g] < -tol || p[g] > grid.node(g).pbar + tol)
    {
        return false;
    }
    let f = model.flows_unchecked(p);
    grid.lines()
        .iter()
        .zip(f.iter())
        .all(|(l, f)| f.abs() <= l.fbar + tol)
}
