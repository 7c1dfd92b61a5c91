//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use storage_planner::grid::{Grid, GridMeta, Line, Node, NodeKind};

/// Random connected grid: a random spanning tree plus a few chords.
/// Node 0 is a generator, the rest are loads.
pub fn random_grid<R: Rng>(rng: &mut R, n: usize) -> Grid {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: format!("n{i}"),
            kind: if i == 0 { NodeKind::Generator } else { NodeKind::Load },
            p0: if i == 0 { 0.0 } else { -rng.random_range(0.0..50.0) },
            pbar: if i == 0 { 1e4 } else { 0.0 },
            cost: if i == 0 { 1.0 } else { 0.0 },
            alpha: 0.0,
        })
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    for _ in 0..n / 2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let lines = edges
        .into_iter()
        .map(|(from, to)| Line {
            from,
            to,
            x: rng.random_range(0.05..2.0),
            fbar: 100.0,
        })
        .collect();
    Grid::new(GridMeta::default(), nodes, lines, false).expect("random grid is valid")
}

/// Laplacian built edge by edge.
pub fn laplacian(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let mut l = DMatrix::zeros(n, n);
    for line in grid.lines() {
        let w = 1.0 / line.x;
        l[(line.from, line.from)] += w;
        l[(line.to, line.to)] += w;
        l[(line.from, line.to)] -= w;
        l[(line.to, line.from)] -= w;
    }
    l
}

/// Line flows by grounding the last node and solving the reduced system.
pub fn flows(grid: &Grid, p: &DVector<f64>) -> DVector<f64> {
    let n = grid.n();
    let l = laplacian(grid);
    let mut theta = DVector::zeros(n);
    if n > 1 {
        let reduced = l.view((0, 0), (n - 1, n - 1)).clone_owned();
        let rhs = p.rows(0, n - 1).clone_owned();
        let sol = reduced.lu().solve(&rhs).expect("connected grid");
        theta.rows_mut(0, n - 1).copy_from(&sol);
    }
    DVector::from_iterator(
        grid.lines().len(),
        grid.lines().iter().map(|l| (theta[l.from] - theta[l.to]) / l.x),
    )
}

pub const KAPPA_F: f64 = 50.0;
pub const KAPPA_H: f64 = 0.001;

/// Cubic band penalty, nonnegative on both sides.
pub fn band(x: f64, a: f64, b: f64) -> f64 {
    if x > b {
        (KAPPA_F * (x - b)).powi(3)
    } else if x < a {
        (KAPPA_F * (a - x)).powi(3)
    } else {
        0.0
    }
}

pub fn logcosh(x: f64) -> f64 {
    (KAPPA_H * x).cosh().ln()
}

/// One step of the dispatch objective from its definition: storage power
/// `ps` (full length), renewable deviation `dev`, droop on the grid's shares.
pub fn step_cost(grid: &Grid, p0: &DVector<f64>, dev: &DVector<f64>, gs: &[usize], ps: &DVector<f64>) -> f64 {
    let alpha = grid.alpha();
    let mismatch = -dev.sum() - ps.sum();
    let p_ns = DVector::from_fn(grid.n(), |i, _| p0[i] + dev[i] + alpha[i] * mismatch);
    let p = &p_ns + ps;
    let mut cost = 0.0;
    for (f, line) in flows(grid, &p).iter().zip(grid.lines()) {
        cost += band(*f, -line.fbar, line.fbar);
    }
    for &g in grid.generators() {
        cost += band(p_ns[g], 0.0, grid.node(g).pbar);
    }
    for &j in gs {
        cost += logcosh(ps[j]);
    }
    cost
}

/// Whole-horizon objective for storage at `gs` with energy `s`
/// (`(Tf + 1) × |gs|`).
pub fn objective(grid: &Grid, p0: &DVector<f64>, dev: &DMatrix<f64>, gs: &[usize], s: &DMatrix<f64>, delta: f64) -> f64 {
    (0..dev.nrows())
        .map(|t| {
            let mut ps = DVector::zeros(grid.n());
            for (c, &j) in gs.iter().enumerate() {
                ps[j] = (s[(t + 1, c)] - s[(t, c)]) / delta;
            }
            step_cost(grid, p0, &dev.row(t).transpose(), gs, &ps)
        })
        .sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}
