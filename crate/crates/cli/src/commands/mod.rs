mod control;
mod fit;
mod predict;
mod simulate;

use std::path::Path;

use log::info;
use seir_control::data::{parse_csse, parse_population_table, sample_observations, synth_twin};
use seir_control::{ObservedSeries, ParamVec, SolverGrid, StateTrajectory, StateVec, WindowOptions};

use crate::config::{RunConfig, Source, TwinSpec, WeightPolicy};
use crate::error::{CliError, Result};
use crate::output::write_table;

pub use control::{cmd_control, read_schedule};
pub use fit::cmd_fit;
pub use predict::cmd_predict;
pub use simulate::cmd_simulate;

pub const THETA_HEADER: [&str; 6] = ["t", "beta", "epsilon", "gamma", "mu", "R0"];
pub const STATE_HEADER: [&str; 6] = ["t", "S", "E", "I", "R", "D"];

/// Observation series of the run: read or synthesized, then sliced and sampled.
pub fn load_series(config: &RunConfig) -> Result<ObservedSeries> {
    let source = config.source.as_ref().ok_or_else(|| {
        CliError::Usage("the config names no data (set `confirmed`/`deaths` or `twin_theta`)".into())
    })?;
    let full = match source {
        Source::Csse { confirmed, deaths } => {
            let region = config
                .region
                .as_deref()
                .ok_or_else(|| CliError::Usage("no region given (config `region` or --region)".into()))?;
            let series = parse_csse(&read(confirmed)?, &read(deaths)?, region)?;
            series.with_population(population(config, region)?)
        }
        Source::Synthetic(spec) => {
            let mut series = twin(spec, config.substeps, config.seed)?;
            if let Some(region) = &config.region {
                series.region = region.clone();
            }
            if let Some(p) = config.population {
                series.population = Some(p);
            }
            series
        }
    };
    let end = config.end_day.unwrap_or(full.last().time);
    let sliced = full.slice_time(config.start_day, end)?;
    let series = sample_observations(&sliced, config.stride)?;
    info!(
        "{}: {} observations on days {}..{}",
        series.region,
        series.len(),
        series.times[0],
        series.last().time
    );
    Ok(series)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn population(config: &RunConfig, region: &str) -> Result<f64> {
    if let Some(p) = config.population {
        return Ok(p);
    }
    let path = config.population_table.as_deref().ok_or_else(|| {
        CliError::Usage(format!(
            "no population for `{region}`: set `population` or `population_table`"
        ))
    })?;
    parse_population_table(&read(path)?)?
        .get(region)
        .copied()
        .ok_or_else(|| CliError::Usage(format!("`{region}` is missing from {}", path.display())))
}

/// Simulated reports on a `interval`-day grid from `[N − I₀, 0, I₀, 0, 0]`.
fn twin(spec: &TwinSpec, substeps: usize, seed: u64) -> Result<ObservedSeries> {
    let intervals = (spec.days / spec.interval).round() as usize;
    let grid = SolverGrid::uniform(0.0, spec.interval, intervals, substeps)?;
    let theta: Vec<ParamVec> = (0..grid.steps())
        .map(|j| {
            let t = grid.node_time(j);
            spec.pieces
                .iter()
                .rev()
                .find(|(start, _)| *start <= t + 1e-9)
                .map(|p| p.1)
                .unwrap_or(spec.pieces[0].1)
        })
        .collect();
    let u0 = StateVec::new(spec.population - spec.infected, 0.0, spec.infected, 0.0, 0.0);
    Ok(synth_twin(&theta, &u0, &grid, spec.noise, seed)?.series)
}

pub fn window_options(config: &RunConfig) -> WindowOptions {
    WindowOptions {
        boundaries: config.windows.clone(),
        substeps: config.substeps,
        settings: config.settings,
        rough_guess: config.rough_guess(),
        mu_from_data: config.mu_from_data,
        weights: match config.weights {
            WeightPolicy::Balanced => None,
            WeightPolicy::Fixed(w) => Some(w),
        },
    }
}

/// One row per solver step: the step's start time, `θ` and `R₀`.
pub fn write_theta(path: &Path, trajectory: &StateTrajectory, theta: &[ParamVec]) -> Result<()> {
    let rows = theta.iter().enumerate().map(|(j, th)| {
        let t = trajectory.grid.node_time(j);
        vec![
            t,
            th.beta,
            th.epsilon,
            th.gamma,
            th.mu,
            th.beta / (th.gamma + th.mu),
        ]
    });
    write_table(path, &THETA_HEADER, rows)
}

pub fn write_trajectory(path: &Path, trajectory: &StateTrajectory) -> Result<()> {
    let rows = trajectory
        .iter_timed()
        .map(|(t, u)| vec![t, u.s, u.e, u.i, u.r, u.d]);
    write_table(path, &STATE_HEADER, rows)
}

/// Relative error `|model − data| / data`, or `None` when the datum is zero.
pub fn relative(model: f64, data: f64) -> Option<f64> {
    (data > 0.0).then(|| (model - data).abs() / data)
}
