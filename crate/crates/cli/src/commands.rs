use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use storage_planner::dcopf::solve_dcopf;
use storage_planner::dispatch::solve_dispatch;
use storage_planner::grid::Grid;
use storage_planner::metrics::{bin_statistics, trial_metrics, uncontrolled_violation, MetricsError, TrialMetrics};
use storage_planner::placement::{run_placement, PlacementReport};
use storage_planner::powerflow::{build_flow_model, FlowModel};
use storage_planner::profile::{generate_profiles, ProfileSet, MAX_PENETRATION};
use storage_planner::trial::{run_batch, trial_profile_config, TrialSetup};
use storage_planner::Error;

use crate::config::RunConfig;
use crate::output::{num, opt, write_json, Csv};
use crate::{CliError, COMPLETION_MARKER, MANIFEST};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Dcopf,
    Profiles,
    Dispatch,
    Place,
    Sweep,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The JSON summary also written to the output directory.
    pub summary: Value,
}

/// Identifies the code that produced an artifact.
pub fn build_id() -> String {
    let mut id = format!("storage-planner {}", env!("CARGO_PKG_VERSION"));
    if let Some(extra) = option_env!("PLANNER_BUILD_ID") {
        id.push('+');
        id.push_str(extra);
    }
    id
}

/// Validates `config`, writes the manifest, runs `command` on a pool of
/// `jobs` threads (all cores when `None`) and writes the completion marker.
pub fn run(command: Command, config: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<RunOutcome, CliError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let manifest = json!({
        "command": command,
        "build": build_id(),
        "seed": config.seed,
        "config": config,
    });
    write_json(&out.join(MANIFEST), &manifest)?;

    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    let result = pool.install(|| execute(command, config, out));

    let marker = json!({
        "status": if result.is_ok() { "ok" } else { "error" },
        "error": result.as_ref().err().map(|e| json!({"kind": e.kind(), "message": e.to_string()})),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "jobs": threads,
    });
    write_json(&out.join(COMPLETION_MARKER), &marker)?;
    result.map(|summary| RunOutcome { summary })
}

fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<Value, CliError> {
    let grid = config.load_grid()?;
    let model = build_flow_model(&grid).map_err(Error::from)?;
    let summary = match command {
        Command::Dcopf => cmd_dcopf(config, &grid, &model, out)?,
        Command::Profiles => cmd_profiles(config, &grid, &model, out)?,
        Command::Dispatch => cmd_dispatch(config, &grid, &model, out)?,
        Command::Place => cmd_place(config, &grid, &model, out)?,
        Command::Sweep => cmd_sweep(config, &grid, &model, out)?,
    };
    let name = match command {
        Command::Dcopf => "dcopf.json",
        Command::Profiles => "profiles.json",
        Command::Dispatch => "dispatch.json",
        Command::Place => "place.json",
        Command::Sweep => "sweep.json",
    };
    write_json(&out.join(name), &summary)?;
    Ok(summary)
}

fn setup<'a>(config: &RunConfig, grid: &'a Grid, model: &'a FlowModel) -> TrialSetup<'a> {
    TrialSetup {
        grid,
        model,
        horizon: config.horizon,
        profile: config.profile_config(0.0, 0),
        penetration: config.profile.penetration,
        dispatch: config.solver,
    }
}

pub fn cmd_dcopf(_config: &RunConfig, grid: &Grid, model: &FlowModel, out: &Path) -> Result<Value, CliError> {
    let mean = DVector::from_vec(grid.renewable_mean());
    let base = solve_dcopf(grid, model, &mean).map_err(Error::from)?;
    let mut csv = Csv::create(&out.join("p0.csv"), &["node_id", "p0_mw"])?;
    for (i, node) in grid.nodes().iter().enumerate() {
        csv.row([node.id.clone(), num(base.p0[i])])?;
    }
    csv.finish()?;
    let flows = model.flows_unchecked(&base.p0);
    let max_line_loading = grid
        .lines()
        .iter()
        .zip(flows.iter())
        .filter(|(l, _)| l.fbar > 0.0)
        .map(|(l, f)| f.abs() / l.fbar)
        .fold(0.0, f64::max);
    Ok(json!({
        "cost": base.objective_cost,
        "max_line_loading": max_line_loading,
    }))
}

/// Profiles of trial 0 of the configured batch.
fn generated_profiles(config: &RunConfig, grid: &Grid, model: &FlowModel) -> Result<ProfileSet, CliError> {
    let s = setup(config, grid, model);
    let cfg = trial_profile_config(&s, config.seed, 0, 0);
    Ok(generate_profiles(grid, &config.horizon, &cfg).map_err(Error::from)?)
}

pub fn cmd_profiles(config: &RunConfig, grid: &Grid, model: &FlowModel, out: &Path) -> Result<Value, CliError> {
    let s = setup(config, grid, model);
    let cfg = trial_profile_config(&s, config.seed, 0, 0);
    let profiles = generate_profiles(grid, &config.horizon, &cfg).map_err(Error::from)?;
    write_profiles(&out.join("profiles.csv"), grid, &profiles)?;
    Ok(json!({
        "penetration": profiles.penetration,
        "penetration_target": cfg.penetration_target,
        "profile_seed": cfg.seed,
        "steps": profiles.steps(),
        "renewable_mean_mw": profiles.renewables.iter()
            .map(|&i| (grid.node_id(i).to_string(), profiles.renewable_mean[i]))
            .collect::<BTreeMap<_, _>>(),
    }))
}

fn write_profiles(path: &Path, grid: &Grid, profiles: &ProfileSet) -> Result<(), CliError> {
    let mut csv = Csv::create(path, &["t", "node_id", "rel_fluct", "p_ns_mw"])?;
    for t in 0..profiles.steps() {
        for (r, &i) in profiles.renewables.iter().enumerate() {
            csv.row([
                t.to_string(),
                grid.node_id(i).to_string(),
                num(profiles.rel_fluct[(t, r)]),
                num(profiles.output(t, r)),
            ])?;
        }
    }
    csv.finish()
}

/// Reads a profiles CSV. Means are recovered as the time average of the
/// output, which is exact for zero-mean fluctuations.
pub fn read_profiles(path: &Path, grid: &Grid, steps: usize) -> Result<ProfileSet, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let mut output = DMatrix::from_element(steps, grid.n(), f64::NAN);
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| record.get(k).ok_or_else(|| bad(format!("short row {record:?}")));
        let t: usize = field(0)?.parse().map_err(|e| bad(format!("{e}")))?;
        let id = field(1)?;
        let p_ns: f64 = field(3)?.parse().map_err(|e| bad(format!("{e}")))?;
        let i = grid.index_of(id).ok_or_else(|| bad(format!("unknown node {id:?}")))?;
        if t >= steps {
            return Err(bad(format!("step {t} outside a horizon of {steps} steps")));
        }
        output[(t, i)] = p_ns;
    }
    let mut mean = DVector::zeros(grid.n());
    let mut dev = DMatrix::zeros(steps, grid.n());
    for &i in grid.renewables() {
        let col = output.column(i);
        if col.iter().any(|v| v.is_nan()) {
            return Err(bad(format!("missing steps for node {}", grid.node_id(i))));
        }
        mean[i] = col.sum() / steps as f64;
        for t in 0..steps {
            dev[(t, i)] = output[(t, i)] - mean[i];
        }
    }
    ProfileSet::from_deviations(grid, dev, mean).map_err(|e| CliError::Core(e.into()))
}

pub fn cmd_dispatch(config: &RunConfig, grid: &Grid, model: &FlowModel, out: &Path) -> Result<Value, CliError> {
    let profiles = match &config.profile.file {
        Some(path) => read_profiles(Path::new(path), grid, config.horizon.steps)?,
        None => generated_profiles(config, grid, model)?,
    };
    let gs = config.storage_nodes(grid)?;
    let base = solve_dcopf(grid, model, &profiles.renewable_mean).map_err(Error::from)?;
    let sol = solve_dispatch(grid, model, &config.horizon, &gs, &base.p0, &profiles, &config.solver)
        .map_err(Error::from)?;

    let traj = &sol.trajectory;
    let mut csv = Csv::create(&out.join("dispatch.csv"), &["t", "node_id", "ps_mw", "s"])?;
    for t in 0..config.horizon.steps {
        for (c, &j) in traj.nodes.iter().enumerate() {
            csv.row([
                t.to_string(),
                grid.node_id(j).to_string(),
                num(traj.ps[(t, j)]),
                num(traj.s[(t, c)]),
            ])?;
        }
    }
    csv.finish()?;
    let mut csv = Csv::create(&out.join("costs.csv"), &["t", "c_line", "c_gen", "c_ps"])?;
    for (t, c) in sol.per_step_costs.iter().enumerate() {
        csv.row([t.to_string(), num(c.line), num(c.gen), num(c.storage)])?;
    }
    csv.finish()?;
    Ok(json!({
        "total_cost": sol.total_cost,
        "total_violation_mw": sol.total_violation(),
        "mean_violation_mw": sol.mean_violation(),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "penetration": profiles.penetration,
        "storage_nodes": gs.iter().map(|&j| grid.node_id(j)).collect::<Vec<_>>(),
    }))
}

#[derive(Serialize)]
struct ActivityView {
    node_id: String,
    a_mw: f64,
}

#[derive(Serialize)]
struct IterationView {
    gs_before: Vec<String>,
    activity: Vec<ActivityView>,
    trials: usize,
    rank_order: Vec<String>,
    gamma: f64,
    gs_after: Vec<String>,
    /// `null` stands for +∞ (no storage power used).
    perf_before: Option<f64>,
    perf_after: Option<f64>,
    candidates: Vec<storage_planner::placement::GammaCandidate>,
}

#[derive(Serialize)]
struct ReportView {
    final_set: Vec<String>,
    epsilon: f64,
    epsilon_prime: f64,
    iterations: Vec<IterationView>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn report_view(grid: &Grid, report: &PlacementReport) -> ReportView {
    let ids = |v: &[usize]| v.iter().map(|&i| grid.node_id(i).to_string()).collect::<Vec<_>>();
    ReportView {
        final_set: ids(&report.final_set),
        epsilon: report.epsilon,
        epsilon_prime: report.epsilon_prime,
        iterations: report
            .iterations
            .iter()
            .map(|it| IterationView {
                gs_before: ids(&it.gs_before),
                activity: it
                    .activity
                    .nodes
                    .iter()
                    .zip(&it.activity.activity)
                    .map(|(&j, &a)| ActivityView {
                        node_id: grid.node_id(j).to_string(),
                        a_mw: a,
                    })
                    .collect(),
                trials: it.activity.trials,
                rank_order: ids(&it.rank_order),
                gamma: it.gamma,
                gs_after: ids(&it.gs_after),
                perf_before: finite(it.perf_before),
                perf_after: finite(it.perf_after),
                candidates: it.candidates.clone(),
            })
            .collect(),
    }
}

pub fn cmd_place(config: &RunConfig, grid: &Grid, model: &FlowModel, out: &Path) -> Result<Value, CliError> {
    let s = setup(config, grid, model);
    let report = run_placement(&s, &config.placement_config()).map_err(Error::from)?;
    let view = report_view(grid, &report);
    write_json(&out.join("placement_report.json"), &view)?;
    for (k, it) in view.iterations.iter().enumerate() {
        let path = out.join(format!("activity_hist_iter{}.csv", k + 1));
        let mut csv = Csv::create(&path, &["node_id", "A_mw"])?;
        for a in &it.activity {
            csv.row([a.node_id.clone(), num(a.a_mw)])?;
        }
        csv.finish()?;
    }
    Ok(json!({
        "final_set": view.final_set,
        "outer_iterations": view.iterations.len(),
        "gammas": view.iterations.iter().map(|it| it.gamma).collect::<Vec<_>>(),
        "set_sizes": view.iterations.iter().map(|it| it.gs_after.len()).collect::<Vec<_>>(),
    }))
}

struct SweepRow {
    metrics: TrialMetrics,
    uncontrolled: f64,
    iterations: usize,
    converged: bool,
}

pub fn cmd_sweep(config: &RunConfig, grid: &Grid, model: &FlowModel, out: &Path) -> Result<Value, CliError> {
    let s = setup(config, grid, model);
    let gs = config.storage_nodes(grid)?;
    let rows = run_batch(&s, &gs, config.seed, 0, config.trials, |o| {
        let metrics = trial_metrics(&o.solution, &o.profiles, grid, model, &config.horizon)?;
        let uncontrolled = uncontrolled_violation(&o.base.p0, &o.profiles, grid, model);
        if metrics.violation_mw > uncontrolled + 1e-9 {
            log::warn!(
                "trial {}: violation {:e} MW exceeds the uncontrolled {:e} MW",
                o.index,
                metrics.violation_mw,
                uncontrolled
            );
        }
        Ok::<_, MetricsError>(SweepRow {
            metrics,
            uncontrolled,
            iterations: o.solution.iterations,
            converged: o.solution.converged,
        })
    })
    .map_err(Error::from)?;
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>().map_err(Error::from)?;

    let mut csv = Csv::create(
        &out.join("trials.csv"),
        &[
            "trial",
            "penetration",
            "power_ratio",
            "energy_ratio",
            "violation_mw",
            "violation_no_storage_mw",
            "iterations",
            "converged",
        ],
    )?;
    for (k, r) in rows.iter().enumerate() {
        csv.row([
            k.to_string(),
            num(r.metrics.penetration),
            opt(r.metrics.normalized_power_capacity),
            opt(r.metrics.normalized_energy_capacity),
            num(r.metrics.violation_mw),
            num(r.uncontrolled),
            r.iterations.to_string(),
            r.converged.to_string(),
        ])?;
    }
    csv.finish()?;

    let metrics: Vec<TrialMetrics> = rows.iter().map(|r| r.metrics).collect();
    let table = bin_statistics(&metrics, config.bins, 0.0, MAX_PENETRATION);
    let mut csv = Csv::create(
        &out.join("metrics_by_bin.csv"),
        &[
            "bin_lo",
            "bin_hi",
            "count",
            "mean_power_ratio",
            "std_power_ratio",
            "mean_energy_ratio",
            "std_energy_ratio",
            "mean_violation_mw",
            "std_violation_mw",
        ],
    )?;
    for b in &table {
        csv.row([
            num(b.lo),
            num(b.hi),
            b.count.to_string(),
            opt(b.power_ratio.map(|s| s.mean)),
            opt(b.power_ratio.map(|s| s.std)),
            opt(b.energy_ratio.map(|s| s.mean)),
            opt(b.energy_ratio.map(|s| s.std)),
            opt(b.violation_mw.map(|s| s.mean)),
            opt(b.violation_mw.map(|s| s.std)),
        ])?;
    }
    csv.finish()?;

    Ok(json!({
        "trials": rows.len(),
        "bins": table.len(),
        "converged": rows.iter().filter(|r| r.converged).count(),
        "mean_violation_mw": metrics.iter().map(|m| m.violation_mw).sum::<f64>() / rows.len() as f64,
        "mean_violation_no_storage_mw": rows.iter().map(|r| r.uncontrolled).sum::<f64>() / rows.len() as f64,
        "storage_nodes": gs.iter().map(|&j| grid.node_id(j)).collect::<Vec<_>>(),
    }))
}
