mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storage_planner::dcopf::solve_dcopf;
use storage_planner::dispatch::DispatchProblem;
use storage_planner::grid::{bundled, Grid};
use storage_planner::horizon::ControlHorizon;
use storage_planner::penalty::PenaltyParams;
use storage_planner::powerflow::{build_flow_model, FlowModel};
use storage_planner::profile::ProfileSet;

struct Instance {
    grid: Grid,
    model: FlowModel,
    p0: DVector<f64>,
    profiles: ProfileSet,
    horizon: ControlHorizon,
}

fn toy(seed: u64, tf: usize, scale: f64) -> Instance {
    let grid = bundled("toy3_congested").unwrap();
    let model = build_flow_model(&grid).unwrap();
    let mean = DVector::from_vec(grid.renewable_mean());
    let p0 = solve_dcopf(&grid, &model, &mean).unwrap().p0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = DMatrix::zeros(tf, grid.n());
    for &r in grid.renewables() {
        for t in 0..tf {
            dev[(t, r)] = rng.random_range(-scale..scale);
        }
    }
    let profiles = ProfileSet::from_deviations(&grid, dev, mean).unwrap();
    Instance {
        grid,
        model,
        p0,
        profiles,
        horizon: ControlHorizon::with_steps(tf).unwrap(),
    }
}

impl Instance {
    fn problem(&self, gs: &[usize]) -> DispatchProblem<'_> {
        DispatchProblem::new(
            &self.grid,
            &self.model,
            self.horizon,
            gs,
            &self.p0,
            &self.profiles,
            PenaltyParams::nonnegative(),
            false,
        )
        .unwrap()
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn cost_matches_definition() {
    let inst = toy(1, 8, 20.0);
    let gs = [0, 1, 2];
    let problem = inst.problem(&gs);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for scale in [0.1, 1.0, 5.0] {
        let x = random_point(&mut rng, problem.dim(), scale);
        let s = problem.energy(&x).unwrap();
        let oracle = common::objective(&inst.grid, &inst.p0, &inst.profiles.abs_dev, &gs, &s, inst.horizon.delta());
        let cost = problem.cost(&x).unwrap();
        assert!((cost - oracle).abs() <= 1e-9 * oracle.abs().max(1e-12), "{cost} vs {oracle}");
    }
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let inst = toy(3, 8, 20.0);
    let problem = inst.problem(&[0, 1, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for scale in [0.05, 0.5, 3.0] {
        let x = random_point(&mut rng, problem.dim(), scale);
        let eval = problem.evaluate(&x).unwrap();
        let hess = eval.hessian.to_dense();
        let n = problem.dim();
        let mut fd_grad = DVector::zeros(n);
        let mut fd_hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd_grad[i] = (problem.cost(&xp).unwrap() - problem.cost(&xm).unwrap()) / (2.0 * h);
            let gp = problem.evaluate(&xp).unwrap().gradient;
            let gm = problem.evaluate(&xm).unwrap().gradient;
            fd_hess.set_column(i, &((gp - gm) / (2.0 * h)));
        }
        let g_err = (&fd_grad - &eval.gradient).amax() / eval.gradient.amax().max(1e-12);
        let h_err = common::max_abs(&(&fd_hess - &hess)) / common::max_abs(&hess).max(1e-12);
        assert!(g_err <= 1e-5, "gradient rel. err {g_err:e} at scale {scale}");
        assert!(h_err <= 1e-4, "Hessian rel. err {h_err:e} at scale {scale}");
        assert!(common::max_abs(&(&hess - hess.transpose())) == 0.0);
    }
}

#[test]
fn subset_storage_matches_finite_differences() {
    let inst = toy(5, 6, 30.0);
    let problem = inst.problem(&[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_point(&mut rng, problem.dim(), 2.0);
    let eval = problem.evaluate(&x).unwrap();
    for i in 0..problem.dim() {
        let h = 1e-6;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (problem.cost(&xp).unwrap() - problem.cost(&xm).unwrap()) / (2.0 * h);
        assert!((fd - eval.gradient[i]).abs() <= 1e-5 * eval.gradient.amax().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_balances_at_every_step(seed in any::<u64>(), scale in 0.01..10.0f64) {
        let inst = toy(seed, 8, 30.0);
        let problem = inst.problem(&[0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = random_point(&mut rng, problem.dim(), scale);
        let traj = problem.trajectory(&x).unwrap();
        for t in 0..inst.horizon.steps {
            let (p, _) = problem.injections(&traj, t);
            prop_assert!(p.sum().abs() < 1e-8, "step {}: {}", t, p.sum());
        }
    }

    #[test]
    fn power_is_energy_difference(seed in any::<u64>(), shift in -50.0..50.0f64) {
        // Only differences of s enter, so a constant offset changes nothing.
        let inst = toy(seed, 8, 10.0);
        let problem = inst.problem(&[0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = random_point(&mut rng, problem.dim(), 1.0);
        let traj = problem.trajectory(&x).unwrap();
        let delta = inst.horizon.delta();
        let shifted = traj.s.add_scalar(shift);
        for t in 0..inst.horizon.steps {
            for (c, &j) in traj.nodes.iter().enumerate() {
                let ps = (shifted[(t + 1, c)] - shifted[(t, c)]) / delta;
                prop_assert!((ps - traj.ps[(t, j)]).abs() <= 1e-9 * (1.0 + shift.abs()) / delta);
            }
        }
        let cost = common::objective(&inst.grid, &inst.p0, &inst.profiles.abs_dev, &traj.nodes, &traj.s, delta);
        let cost_shifted = common::objective(&inst.grid, &inst.p0, &inst.profiles.abs_dev, &traj.nodes, &shifted, delta);
        prop_assert!((cost - cost_shifted).abs() <= 1e-6 * cost.abs().max(1e-9));
    }
}
