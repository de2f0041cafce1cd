use log::{info, warn};

use super::msa::{fit, FitResult};
use super::{ControlProblem, LossWeights, OptimizerSettings};
use crate::data::{mu_init, ObservedSeries};
use crate::error::{Error, Result};
use crate::forward::{SolverGrid, StateTrajectory, DEFAULT_SUBSTEPS};
use crate::model::{ParamVec, StateVec};

/// Settings of a windowed fit.
#[derive(Debug, Clone)]
pub struct WindowOptions {
    /// Window joints. Must be observation times; the series start and end
    /// are added when missing. Empty means one window over the whole series.
    pub boundaries: Vec<f64>,
    pub substeps: usize,
    pub settings: OptimizerSettings,
    /// Constant guess used on the first window and as the fallback later on.
    pub rough_guess: ParamVec,
    /// Replace the rough `μ` by the data-driven guess of each interval.
    pub mu_from_data: bool,
    /// Fixed weights; `None` balances them on each window's own data.
    pub weights: Option<LossWeights>,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            boundaries: Vec::new(),
            substeps: DEFAULT_SUBSTEPS,
            settings: OptimizerSettings::default(),
            rough_guess: ParamVec::new(0.5, 0.2, 0.1, 0.0),
            mu_from_data: true,
            weights: None,
        }
    }
}

/// Fit of one window.
#[derive(Debug, Clone)]
pub struct WindowFit {
    pub start: f64,
    pub end: f64,
    pub weights: LossWeights,
    /// The rough guess replaced the warm start.
    pub used_fallback: bool,
    pub result: FitResult,
}

/// Windows joined into one path over the whole series.
#[derive(Debug, Clone)]
pub struct WindowedFit {
    pub theta: Vec<ParamVec>,
    pub trajectory: StateTrajectory,
    pub windows: Vec<WindowFit>,
}

impl WindowedFit {
    pub fn converged(&self) -> bool {
        self.windows.iter().all(|w| w.result.converged)
    }

    pub fn grid(&self) -> &SolverGrid {
        &self.trajectory.grid
    }
}

fn resolve_boundaries(series: &ObservedSeries, requested: &[f64]) -> Result<Vec<f64>> {
    let (start, end) = (series.times[0], series.times[series.len() - 1]);
    let tol = |t: f64| 1e-9 * (1.0 + t.abs());
    let mut out = vec![start];
    for &b in requested {
        if (b - start).abs() <= tol(b) || (b - end).abs() <= tol(b) {
            continue;
        }
        if !series.times.iter().any(|&t| (t - b).abs() <= tol(b)) {
            return Err(Error::Config(format!(
                "window boundary {b} is not an observation time"
            )));
        }
        if b <= *out.last().unwrap() {
            return Err(Error::Config(format!(
                "window boundaries must be increasing and inside [{start}, {end}] (got {b})"
            )));
        }
        out.push(b);
    }
    out.push(end);
    Ok(out)
}

fn rough_path(series: &ObservedSeries, options: &WindowOptions) -> Vec<ParamVec> {
    let bounds = &options.settings.bounds;
    let base = bounds.clip(options.rough_guess);
    let steps = (series.len() - 1) * options.substeps;
    if options.mu_from_data {
        mu_init(series, bounds, options.substeps)
            .into_iter()
            .map(|mu| ParamVec { mu, ..base })
            .collect()
    } else {
        vec![base; steps]
    }
}

fn fit_window(
    window: &ObservedSeries,
    u0: StateVec,
    warm: Option<ParamVec>,
    options: &WindowOptions,
) -> Result<(FitResult, LossWeights, bool)> {
    let weights = match options.weights {
        Some(w) => w,
        None => LossWeights::balanced(&window.observations().collect::<Vec<_>>())?,
    };
    let problem = ControlProblem::from_series(window, u0, options.substeps, weights, options.settings)?;

    let warm_run = warm.map(|th| fit(&problem, &problem.constant_path(options.settings.bounds.clip(th))));
    match warm_run {
        Some(Ok(r)) if r.converged => return Ok((r, weights, false)),
        Some(Ok(_)) => warn!("warm start did not converge, retrying from the rough guess"),
        Some(Err(ref e)) => warn!("warm start failed ({e}), retrying from the rough guess"),
        None => {}
    }
    let rough_run = fit(&problem, &rough_path(window, options));
    match (warm_run, rough_run) {
        (None, rough) => rough.map(|r| (r, weights, false)),
        (Some(Ok(w)), Ok(r)) => {
            if r.final_loss() < w.final_loss() {
                Ok((r, weights, true))
            } else {
                Ok((w, weights, false))
            }
        }
        (Some(Ok(w)), Err(_)) => Ok((w, weights, false)),
        (Some(Err(_)), rough) => rough.map(|r| (r, weights, true)),
    }
}

/// Fits consecutive windows. Each window starts from the previous window's
/// terminal state and is warm-started with its terminal parameters; when that
/// run fails or stalls the rough guess is tried and the better run is kept.
pub fn windowed_fit(series: &ObservedSeries, u0: StateVec, options: &WindowOptions) -> Result<WindowedFit> {
    series.validate()?;
    if series.len() < 2 {
        return Err(Error::Config("a fit needs at least two observation times".into()));
    }
    let bounds = resolve_boundaries(series, &options.boundaries)?;
    let mut windows = Vec::with_capacity(bounds.len() - 1);
    let mut theta = Vec::new();
    let mut values = Vec::new();
    let mut state = u0;
    let mut warm = None;

    for (index, pair) in bounds.windows(2).enumerate() {
        let (start, end) = (pair[0], pair[1]);
        let wrap = |e: Error| Error::Window {
            index,
            start,
            end,
            source: Box::new(e),
        };
        let window = series.slice_time(start, end).map_err(wrap)?;
        let (result, weights, used_fallback) = fit_window(&window, state, warm, options).map_err(wrap)?;
        info!(
            "window {index} [{start}, {end}]: {} iterations, loss {:.3e}, converged = {}",
            result.iterations,
            result.final_loss(),
            result.converged
        );
        state = *result.trajectory.last();
        warm = result.theta.last().copied();
        theta.extend_from_slice(&result.theta);
        let skip = usize::from(!values.is_empty());
        values.extend_from_slice(&result.trajectory.values[skip..]);
        windows.push(WindowFit {
            start,
            end,
            weights,
            used_fallback,
            result,
        });
    }

    let first = series.times.iter().position(|&t| t >= bounds[0] - 1e-9).unwrap();
    let last = series
        .times
        .iter()
        .rposition(|&t| t <= bounds[bounds.len() - 1] + 1e-9)
        .unwrap();
    let grid = SolverGrid::new(series.times[first..=last].to_vec(), options.substeps)?;
    Ok(WindowedFit {
        theta,
        trajectory: StateTrajectory { grid, values },
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_twin;
    use crate::forward::solve_forward;

    fn twin() -> (ObservedSeries, StateVec) {
        let grid = SolverGrid::uniform(0.0, 2.0, 15, 10).unwrap();
        let u0 = StateVec::new(1e6 - 50.0, 0.0, 50.0, 0.0, 0.0);
        let th = ParamVec::new(0.4, 0.21, 0.12, 0.006);
        let t = synth_twin(&vec![th; grid.steps()], &u0, &grid, 0.0, 0).unwrap();
        (t.series, u0)
    }

    fn quick() -> WindowOptions {
        WindowOptions {
            settings: OptimizerSettings {
                tau: crate::control::step_sizes(1e-3),
                max_iters: 40,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn boundaries_are_checked() {
        let (s, _) = twin();
        assert_eq!(resolve_boundaries(&s, &[]).unwrap(), vec![0.0, 30.0]);
        assert_eq!(
            resolve_boundaries(&s, &[0.0, 10.0, 30.0]).unwrap(),
            vec![0.0, 10.0, 30.0]
        );
        assert!(resolve_boundaries(&s, &[11.0]).is_err());
        assert!(resolve_boundaries(&s, &[20.0, 10.0]).is_err());
    }

    #[test]
    fn single_window_matches_plain_fit() {
        let (s, u0) = twin();
        let opts = quick();
        let wf = windowed_fit(&s, u0, &opts).unwrap();
        let w = LossWeights::balanced(&s.observations().collect::<Vec<_>>()).unwrap();
        let p = ControlProblem::from_series(&s, u0, opts.substeps, w, opts.settings).unwrap();
        let direct = fit(&p, &rough_path(&s, &opts)).unwrap();
        assert_eq!(wf.theta, direct.theta);
        assert_eq!(wf.trajectory, direct.trajectory);
        assert_eq!(wf.windows.len(), 1);
    }

    #[test]
    fn joints_are_continuous_and_resimulate() {
        let (s, u0) = twin();
        let opts = WindowOptions {
            boundaries: vec![10.0, 20.0],
            ..quick()
        };
        let wf = windowed_fit(&s, u0, &opts).unwrap();
        assert_eq!(wf.windows.len(), 3);
        assert_eq!(wf.theta.len(), wf.grid().steps());
        assert_eq!(wf.trajectory.values.len(), wf.grid().nodes());
        let again = solve_forward(&u0, &wf.theta, wf.grid()).unwrap();
        assert_eq!(again.values, wf.trajectory.values);
    }
}
