use std::path::Path;

use log::{info, warn};
use seir_control::data::initial_state;
use seir_control::{windowed_fit, ObservedSeries, WindowedFit};
use serde::Serialize;

use super::{load_series, relative, window_options, write_theta, write_trajectory};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json, write_table};

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub region: String,
    pub population: Option<f64>,
    pub loss_history: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub windows: Vec<WindowSummary>,
    pub misfit: Vec<MisfitRow>,
    pub max_misfit: MaxMisfit,
    pub r0_range: [f64; 2],
}

#[derive(Debug, Serialize)]
pub struct WindowSummary {
    pub start: f64,
    pub end: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub used_fallback: bool,
    pub final_loss: f64,
}

#[derive(Debug, Serialize)]
pub struct MisfitRow {
    pub t: f64,
    pub infections_reported: f64,
    pub infections_fitted: f64,
    pub infections: Option<f64>,
    pub deaths_reported: f64,
    pub deaths_fitted: f64,
    pub deaths: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MaxMisfit {
    pub infections: f64,
    pub deaths: f64,
}

/// Windowed fit of the configured series. Outputs are written even when a
/// window stops at the iteration cap; that case is reported as an error
/// afterwards.
pub fn cmd_fit(config: &RunConfig, out: &Path) -> Result<WindowedFit> {
    let series = load_series(config)?;
    let u0 = initial_state(&series)?;
    let wf = windowed_fit(&series, u0, &window_options(config))?;
    write_fit(out, &series, &wf)?;

    let stuck: Vec<String> = wf
        .windows
        .iter()
        .filter(|w| !w.result.converged)
        .map(|w| format!("[{}, {}]", w.start, w.end))
        .collect();
    if !stuck.is_empty() {
        return Err(CliError::NotConverged(format!(
            "window(s) {} stopped at max_iters = {} without reaching tol = {}",
            stuck.join(", "),
            config.settings.max_iters,
            config.settings.tol
        )));
    }
    Ok(wf)
}

fn write_fit(out: &Path, series: &ObservedSeries, wf: &WindowedFit) -> Result<()> {
    let plots = out.join("plots");
    ensure_dir(&plots)?;
    write_theta(&out.join("theta.csv"), &wf.trajectory, &wf.theta)?;
    write_trajectory(&out.join("trajectory.csv"), &wf.trajectory)?;

    let misfit: Vec<MisfitRow> = series
        .observations()
        .filter_map(|p| {
            let k = wf.grid().find_observation(p.time)?;
            let u = wf.trajectory.at_observation(k);
            Some(MisfitRow {
                t: p.time,
                infections_reported: p.infections,
                infections_fitted: u.i,
                infections: relative(u.i, p.infections),
                deaths_reported: p.deaths,
                deaths_fitted: u.d,
                deaths: relative(u.d, p.deaths),
            })
        })
        .collect();
    let worst = |f: fn(&MisfitRow) -> Option<f64>| misfit.iter().filter_map(f).fold(0.0, f64::max);
    let max_misfit = MaxMisfit {
        infections: worst(|m| m.infections),
        deaths: worst(|m| m.deaths),
    };
    let r0 = wf.theta.iter().map(|t| t.beta / (t.gamma + t.mu));
    let r0_range = r0.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], r| {
        [lo.min(r), hi.max(r)]
    });

    write_table(
        &plots.join("infections.csv"),
        &["t", "reported", "fitted"],
        misfit
            .iter()
            .map(|m| vec![m.t, m.infections_reported, m.infections_fitted]),
    )?;
    write_table(
        &plots.join("deaths.csv"),
        &["t", "reported", "fitted"],
        misfit
            .iter()
            .map(|m| vec![m.t, m.deaths_reported, m.deaths_fitted]),
    )?;
    write_table(
        &plots.join("loss.csv"),
        &["window", "iteration", "loss"],
        wf.windows.iter().enumerate().flat_map(|(w, fit)| {
            fit.result
                .loss_history
                .iter()
                .enumerate()
                .map(move |(l, j)| vec![w as f64, l as f64, *j])
        }),
    )?;

    let report = FitReport {
        region: series.region.clone(),
        population: series.population,
        loss_history: wf.windows.iter().map(|w| w.result.loss_history.clone()).collect(),
        iterations: wf.windows.iter().map(|w| w.result.iterations).collect(),
        converged: wf.windows.iter().map(|w| w.result.converged).collect(),
        windows: wf
            .windows
            .iter()
            .map(|w| WindowSummary {
                start: w.start,
                end: w.end,
                lambda1: w.weights.lambda1,
                lambda2: w.weights.lambda2,
                used_fallback: w.used_fallback,
                final_loss: w.result.final_loss(),
            })
            .collect(),
        misfit,
        max_misfit,
        r0_range,
    };
    info!(
        "{}: max relative misfit {:.3}% infections, {:.3}% deaths; R0 in [{:.3}, {:.3}]",
        report.region,
        100.0 * report.max_misfit.infections,
        100.0 * report.max_misfit.deaths,
        report.r0_range[0],
        report.r0_range[1]
    );
    if report.windows.iter().any(|w| w.used_fallback) {
        warn!("some windows fell back to the rough initial guess");
    }
    write_json(&out.join("fit_report.json"), &report)
}
