//! DC power flow: weighted Laplacian, its pseudo-inverse and line flows.
//!
//! Conventions used throughout the crate:
//!
//! ```text
//! p = L θ,   θ = Mx p,   f_ij = (θ_i − θ_j) / x_ij   (positive = flow i → j)
//! ```
//!
//! so the flow matrix row for line `(i, j)` is `(Mx[i, :] − Mx[j, :]) / x_ij`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::grid::Grid;

/// Eigenvalues below `ZERO_CUTOFF × λ_max` are treated as zero.
pub const ZERO_CUTOFF: f64 = 1e-9;

/// Largest `|Σ p|` accepted as balanced, in MW.
pub const BALANCE_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("Laplacian has {zeros} eigenvalues below the zero cutoff (expected exactly one)")]
    Singularity { zeros: usize },
    #[error("injections are not balanced: Σp = {sum}")]
    Imbalance { sum: f64 },
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Linear maps from injections to phase angles and line flows.
#[derive(Debug, Clone)]
pub struct FlowModel {
    laplacian: DMatrix<f64>,
    pinv: DMatrix<f64>,
    flow: DMatrix<f64>,
    line_index: HashMap<(usize, usize), usize>,
}

/// Weighted Laplacian with edge weights `1/x`.
pub fn laplacian(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let mut lap = DMatrix::zeros(n, n);
    for l in grid.lines() {
        let w = 1.0 / l.x;
        lap[(l.from, l.from)] += w;
        lap[(l.to, l.to)] += w;
        lap[(l.from, l.to)] -= w;
        lap[(l.to, l.from)] -= w;
    }
    lap
}

pub fn build_flow_model(grid: &Grid) -> Result<FlowModel, FlowError> {
    let n = grid.n();
    let laplacian = laplacian(grid);
    let eig = SymmetricEigen::new(laplacian.clone());
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = ZERO_CUTOFF * lambda_max;

    let mut pinv = DMatrix::zeros(n, n);
    let mut zeros = 0;
    for (k, &w) in eig.eigenvalues.iter().enumerate() {
        if w <= cutoff {
            zeros += 1;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        pinv.ger(1.0 / w, &v, &v, 1.0);
    }
    // A single-node grid has one zero eigenvalue and an all-zero pseudo-inverse.
    if zeros != 1 {
        return Err(FlowError::Singularity { zeros });
    }

    // Project out the constant mode exactly and symmetrize.
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let pinv = &centering * pinv * &centering;
    let pinv = (&pinv + pinv.transpose()) * 0.5;

    let m = grid.lines().len();
    let mut flow = DMatrix::zeros(m, n);
    let mut line_index = HashMap::with_capacity(m);
    for (k, l) in grid.lines().iter().enumerate() {
        let row = (pinv.row(l.from) - pinv.row(l.to)) / l.x;
        flow.set_row(k, &row);
        line_index.insert((l.from, l.to), k);
    }

    Ok(FlowModel {
        laplacian,
        pinv,
        flow,
        line_index,
    })
}

impl FlowModel {
    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Pseudo-inverse of the Laplacian (`Mx`).
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Line-flow sensitivity matrix (`M`), one row per line.
    pub fn flow_matrix(&self) -> &DMatrix<f64> {
        &self.flow
    }

    /// Row of `flow_matrix` for the line stored as `(from, to)`.
    pub fn line_row(&self, from: usize, to: usize) -> Option<usize> {
        self.line_index.get(&(from, to)).copied()
    }

    /// Phase angles `Mx p`.
    pub fn angles(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.pinv * p
    }

    /// `M p` without the balance check.
    pub fn flows_unchecked(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.flow * p
    }
}

/// Line flows for a balanced injection vector.
pub fn compute_flows(model: &FlowModel, p: &DVector<f64>) -> Result<DVector<f64>, FlowError> {
    if p.len() != model.n() {
        return Err(FlowError::Shape {
            expected: model.n(),
            got: p.len(),
        });
    }
    let sum = p.sum();
    if sum.abs() > BALANCE_TOL {
        return Err(FlowError::Imbalance { sum });
    }
    Ok(model.flows_unchecked(p))
}

/// Constraint violations of one operating point, all in MW.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ViolationBreakdown {
    /// `max(|f| − f̄, 0)` per line.
    pub line_overload: Vec<f64>,
    /// `max(−p, p − p̄, 0)` per generator, in `Grid::generators` order.
    pub gen_out_of_range: Vec<f64>,
    /// `|Σ p|`.
    pub imbalance: f64,
    pub total: f64,
}

/// Measures how far `p` (total injections) and `p_ns` (injections without
/// storage, read at generator nodes) are from satisfying the network limits.
pub fn check_constraints(
    grid: &Grid,
    model: &FlowModel,
    p: &DVector<f64>,
    p_ns: &DVector<f64>,
) -> ViolationBreakdown {
    let flows = model.flows_unchecked(p);
    let line_overload: Vec<f64> = grid
        .lines()
        .iter()
        .zip(flows.iter())
        .map(|(l, f)| (f.abs() - l.fbar).max(0.0))
        .collect();
    let gen_out_of_range: Vec<f64> = grid
        .generators()
        .iter()
        .map(|&g| {
            let v = p_ns[g];
            (-v).max(v - grid.node(g).pbar).max(0.0)
        })
        .collect();
    let imbalance = p.sum().abs();
    let total = line_overload.iter().sum::<f64>() + gen_out_of_range.iter().sum::<f64>() + imbalance;
    ViolationBreakdown {
        line_overload,
        gen_out_of_range,
        imbalance,
        total,
    }
}
