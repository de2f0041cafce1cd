use std::path::Path;

use log::{info, warn};
use seir_control::control::relative_misfit;
use seir_control::data::initial_state;
use seir_control::{
    scheduled_control, solve_forward, windowed_fit, FitResult, ObservedSeries, ParamVec, ScheduleOptions,
    SolverGrid, WindowedFit,
};
use serde::Serialize;

use super::{load_series, relative, window_options, write_theta, write_trajectory};
use crate::config::{RunConfig, WeightPolicy};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, read_table, write_json, write_table};

#[derive(Debug, Serialize)]
pub struct ControlReport {
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub misfit: Vec<ScheduleMisfit>,
    pub max_misfit: [f64; 2],
    pub mean_beta_baseline: f64,
    pub mean_beta_controlled: f64,
    pub mean_beta_reduction: f64,
}

#[derive(Debug, Serialize)]
pub struct ScheduleMisfit {
    pub t: f64,
    pub infections_target: f64,
    pub infections_achieved: f64,
    pub infections: Option<f64>,
    pub deaths_target: f64,
    pub deaths_achieved: f64,
    pub deaths: Option<f64>,
}

/// Reads a `t,I_d,D_d` schedule. The first row only fixes the start time.
pub fn read_schedule(path: &Path, population: Option<f64>) -> Result<ObservedSeries> {
    let rows = read_table(path, &["t", "I_d", "D_d"])?;
    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    Ok(ObservedSeries::new(
        "schedule",
        population,
        column(0),
        column(1),
        column(2),
    )?)
}

/// Fits the configured data (the baseline), then learns the parameter path
/// that drives the model through the schedule starting from the baseline
/// state at the first schedule time. Baseline `θ` beyond the fitted range is
/// held at its last value.
pub fn cmd_control(config: &RunConfig, schedule_path: &Path, out: &Path) -> Result<FitResult> {
    let series = load_series(config)?;
    let u_start = initial_state(&series)?;
    let baseline = windowed_fit(&series, u_start, &window_options(config))?;
    if !baseline.converged() {
        warn!("baseline fit stopped at max_iters in some window");
    }
    let schedule = read_schedule(schedule_path, series.population)?;
    let t0 = schedule.times[0];
    let node = baseline
        .trajectory
        .iter_timed()
        .position(|(t, _)| (t - t0).abs() < 1e-9)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "schedule starts at t = {t0}, which is not a time of the fitted baseline [{}, {}]",
                baseline.grid().start(),
                baseline.grid().end()
            ))
        })?;
    let u0 = baseline.trajectory.values[node];

    let grid = SolverGrid::new(schedule.times.clone(), config.substeps)?;
    let base_theta = resample(&baseline, &grid);
    let base_traj = solve_forward(&u0, &base_theta, &grid)?;
    let options = ScheduleOptions {
        substeps: config.substeps,
        settings: config.control_settings,
        weights: match config.weights {
            WeightPolicy::Balanced => None,
            WeightPolicy::Fixed(w) => Some(w),
        },
        unreachable_misfit: config.unreachable_misfit,
        ..Default::default()
    };
    let result = scheduled_control(u0, &schedule, &base_theta, &options)?;

    let dir = out.join("control");
    ensure_dir(&dir)?;
    write_theta(&dir.join("theta.csv"), &result.trajectory, &result.theta)?;
    write_trajectory(&dir.join("trajectory.csv"), &result.trajectory)?;
    write_trajectory(&dir.join("baseline_trajectory.csv"), &base_traj)?;
    let steps = grid.steps();
    let rows = (0..grid.nodes()).map(|j| {
        let (b, c) = (
            base_theta[j.min(steps - 1)].beta,
            result.theta[j.min(steps - 1)].beta,
        );
        let (ub, uc) = (base_traj.values[j], result.trajectory.values[j]);
        vec![grid.node_time(j), b, c, c - b, ub.i, uc.i, ub.d, uc.d]
    });
    write_table(
        &dir.join("comparison.csv"),
        &[
            "t",
            "beta_baseline",
            "beta_controlled",
            "beta_difference",
            "I_baseline",
            "I_controlled",
            "D_baseline",
            "D_controlled",
        ],
        rows,
    )?;

    let mean = |th: &[ParamVec]| th.iter().map(|t| t.beta).sum::<f64>() / th.len() as f64;
    let (mb, mc) = (mean(&base_theta), mean(&result.theta));
    let misfit = schedule
        .observations()
        .enumerate()
        .map(|(k, p)| {
            let u = result.trajectory.at_observation(k + 1);
            ScheduleMisfit {
                t: p.time,
                infections_target: p.infections,
                infections_achieved: u.i,
                infections: relative(u.i, p.infections),
                deaths_target: p.deaths,
                deaths_achieved: u.d,
                deaths: relative(u.d, p.deaths),
            }
        })
        .collect();
    let (mi, md) = relative_misfit(&result.trajectory, &schedule);
    let report = ControlReport {
        loss_history: result.loss_history.clone(),
        iterations: result.iterations,
        converged: result.converged,
        misfit,
        max_misfit: [mi, md],
        mean_beta_baseline: mb,
        mean_beta_controlled: mc,
        mean_beta_reduction: mb - mc,
    };
    write_json(&dir.join("control_report.json"), &report)?;
    info!(
        "mean beta {mb:.4} -> {mc:.4}; schedule missed by at most {:.3}% (I), {:.3}% (D)",
        100.0 * mi,
        100.0 * md
    );
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "control stopped at max_iters = {} without reaching tol = {}",
            config.control_settings.max_iters, config.control_settings.tol
        )));
    }
    Ok(result)
}

/// The baseline `θ` of the step containing each step midpoint of `grid`.
fn resample(baseline: &WindowedFit, grid: &SolverGrid) -> Vec<ParamVec> {
    let bg = baseline.grid();
    let nodes: Vec<f64> = (0..bg.nodes()).map(|j| bg.node_time(j)).collect();
    (0..grid.steps())
        .map(|j| {
            let mid = 0.5 * (grid.node_time(j) + grid.node_time(j + 1));
            let step = nodes.partition_point(|&t| t <= mid).saturating_sub(1);
            baseline.theta[step.min(baseline.theta.len() - 1)]
        })
        .collect()
}
