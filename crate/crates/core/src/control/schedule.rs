use std::fmt;

use super::msa::{fit, FitResult};
use super::{relative_misfit, ControlProblem, LossWeights, OptimizerSettings};
use crate::data::ObservedSeries;
use crate::error::{Error, Result};
use crate::forward::DEFAULT_SUBSTEPS;
use crate::model::{Param, ParamBounds, ParamVec, StateVec};

/// Settings of a scheduled-control run.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleOptions {
    pub substeps: usize,
    pub settings: OptimizerSettings,
    /// Fixed weights; `None` balances them on the schedule.
    pub weights: Option<LossWeights>,
    /// Largest relative miss of a scheduled value still counted as reached.
    pub unreachable_misfit: f64,
    /// Share of grid steps at a bound for a parameter to count as pinned.
    pub pinned_fraction: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            settings: OptimizerSettings::default(),
            weights: None,
            unreachable_misfit: 0.05,
            pinned_fraction: 0.5,
        }
    }
}

/// A parameter sitting on one side of its box for a share of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnedBound {
    pub param: Param,
    pub upper: bool,
    pub value: f64,
    pub fraction: f64,
}

impl fmt::Display for PinnedBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at its {} bound {} on {:.0}% of the grid",
            self.param,
            if self.upper { "upper" } else { "lower" },
            self.value,
            100.0 * self.fraction
        )
    }
}

/// Parameters that sit on a bound for at least `min_fraction` of the path.
pub fn pinned_bounds(theta: &[ParamVec], bounds: &ParamBounds, min_fraction: f64) -> Vec<PinnedBound> {
    if theta.is_empty() {
        return Vec::new();
    }
    let n = theta.len() as f64;
    let mut out = Vec::new();
    for p in Param::ALL {
        let (lo, hi) = (bounds.lower.get(p), bounds.upper.get(p));
        if lo == hi {
            continue;
        }
        for (upper, value) in [(false, lo), (true, hi)] {
            let hits = theta.iter().filter(|t| t.get(p) == value).count() as f64;
            if hits / n >= min_fraction {
                out.push(PinnedBound {
                    param: p,
                    upper,
                    value,
                    fraction: hits / n,
                });
            }
        }
    }
    out
}

fn check_schedule(u0: &StateVec, schedule: &ObservedSeries) -> Result<()> {
    schedule.validate()?;
    if schedule.len() < 2 {
        return Err(Error::Config(
            "a schedule needs a start time and at least one target".into(),
        ));
    }
    if schedule.infections.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config(
            "scheduled infections must be non-decreasing".into(),
        ));
    }
    let mut floor = u0.d;
    for p in schedule.observations() {
        if p.deaths < floor {
            return Err(Error::Unreachable(format!(
                "deaths scheduled to fall to {} at t = {} but they cannot drop below {floor}",
                p.deaths, p.time
            )));
        }
        floor = p.deaths;
    }
    Ok(())
}

/// Learns a parameter path that drives `(I, D)` along `schedule`.
///
/// The first schedule entry marks the start time, where the state is `u0`;
/// later entries act as data, the last one as the terminal target. A run
/// that misses the schedule by more than `unreachable_misfit` while some
/// parameter is pinned at a bound is reported as [`Error::Unreachable`].
pub fn scheduled_control(
    u0: StateVec,
    schedule: &ObservedSeries,
    theta_init: &[ParamVec],
    options: &ScheduleOptions,
) -> Result<FitResult> {
    check_schedule(&u0, schedule)?;
    let weights = match options.weights {
        Some(w) => w,
        None => LossWeights::balanced(&schedule.observations().collect::<Vec<_>>())?,
    };
    let problem = ControlProblem::from_series(schedule, u0, options.substeps, weights, options.settings)?;
    let bounds = &options.settings.bounds;
    let init: Vec<ParamVec> = theta_init.iter().map(|t| bounds.clip(*t)).collect();
    let result = fit(&problem, &init)?;

    let (miss_i, miss_d) = relative_misfit(&result.trajectory, schedule);
    let miss = miss_i.max(miss_d);
    if miss > options.unreachable_misfit {
        let pinned = pinned_bounds(&result.theta, bounds, options.pinned_fraction);
        if !pinned.is_empty() {
            let names: Vec<String> = pinned.iter().map(ToString::to_string).collect();
            return Err(Error::Unreachable(format!(
                "schedule missed by {:.2}% with {}",
                100.0 * miss,
                names.join(", ")
            )));
        }
    }
    Ok(result)
}
