//! Positivity-preserving explicit-implicit state solver.
//!
//! Each observation interval `[t_{i-1}, t_i]` is split into `m` equal steps.
//! Nodes are numbered globally: node `j = i·m + k` is the `k`-th point of the
//! `(i+1)`-th interval, and the last node of one interval is the first node
//! of the next. A trajectory over `n` intervals therefore has `n·m + 1`
//! nodes and `n·m` steps; the parameter vector for step `j` is applied on
//! `[node j, node j+1]`.

use crate::error::{Error, Result};
use crate::model::{ParamVec, StateVec};

/// Substeps per observation interval used when none is configured.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Observation times plus the number of uniform substeps per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    times: Vec<f64>,
    substeps: usize,
}

impl SolverGrid {
    pub fn new(observation_times: Vec<f64>, substeps: usize) -> Result<Self> {
        if observation_times.len() < 2 {
            return Err(Error::Config(
                "a grid needs at least two observation times".into(),
            ));
        }
        if substeps == 0 {
            return Err(Error::Config("substeps per interval must be >= 1".into()));
        }
        if observation_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("observation times must be finite".into()));
        }
        if let Some(w) = observation_times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "observation times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self {
            times: observation_times,
            substeps,
        })
    }

    /// Evenly spaced grid with `intervals` intervals of length `dt` starting at `start`.
    pub fn uniform(start: f64, dt: f64, intervals: usize, substeps: usize) -> Result<Self> {
        let times = (0..=intervals).map(|i| start + dt * i as f64).collect();
        Self::new(times, substeps)
    }

    pub fn observation_times(&self) -> &[f64] {
        &self.times
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Number of observation intervals `n`.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn steps(&self) -> usize {
        self.intervals() * self.substeps
    }

    pub fn nodes(&self) -> usize {
        self.steps() + 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Step size within interval `interval` (0-based).
    pub fn step_size(&self, interval: usize) -> f64 {
        (self.times[interval + 1] - self.times[interval]) / self.substeps as f64
    }

    /// Interval containing step `step`.
    pub fn interval_of_step(&self, step: usize) -> usize {
        step / self.substeps
    }

    pub fn node_time(&self, node: usize) -> f64 {
        let m = self.substeps;
        let interval = (node / m).min(self.intervals() - 1);
        let k = node - interval * m;
        self.times[interval] + k as f64 * self.step_size(interval)
    }

    /// Global node index of observation time `t_i`.
    pub fn observation_node(&self, obs_index: usize) -> usize {
        obs_index * self.substeps
    }

    /// Index of the observation time equal to `t`, if any.
    pub fn find_observation(&self, t: f64) -> Option<usize> {
        let scale = 1e-9 * (1.0 + t.abs());
        self.times.iter().position(|&x| (x - t).abs() <= scale)
    }
}

/// State values at every node of a [`SolverGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub grid: SolverGrid,
    pub values: Vec<StateVec>,
}

impl StateTrajectory {
    pub fn at_observation(&self, obs_index: usize) -> &StateVec {
        &self.values[self.grid.observation_node(obs_index)]
    }

    pub fn last(&self) -> &StateVec {
        self.values.last().expect("trajectory is never empty")
    }

    /// `(time, state)` pairs over all nodes.
    pub fn iter_timed(&self) -> impl Iterator<Item = (f64, &StateVec)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(j, u)| (self.grid.node_time(j), u))
    }
}

/// One Gauss-Seidel explicit-implicit step of length `h`.
///
/// Losses are treated implicitly and gains use the freshly updated
/// compartments, so the output is nonnegative for any `h > 0` and the
/// five-compartment sum is preserved.
pub fn forward_step(u: &StateVec, theta: &ParamVec, h: f64) -> Result<StateVec> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("step size must be positive ({h})")));
    }
    u.validate()?;
    theta.validate()?;
    let ParamVec {
        beta,
        epsilon,
        gamma,
        mu,
    } = *theta;
    let force = h * beta * u.i / u.living();
    let s = u.s / (1.0 + force);
    let e = (u.e + force * s) / (1.0 + h * epsilon);
    let i = (u.i + h * epsilon * e) / (1.0 + h * (gamma + mu));
    let r = u.r + h * gamma * i;
    let d = u.d + h * mu * i;
    Ok(StateVec::new(s, e, i, r, d))
}

/// Runs [`forward_step`] across the whole grid. `theta[j]` drives step `j`.
pub fn solve_forward(u0: &StateVec, theta: &[ParamVec], grid: &SolverGrid) -> Result<StateTrajectory> {
    if theta.len() != grid.steps() {
        return Err(Error::Config(format!(
            "parameter path has {} entries, grid has {} steps",
            theta.len(),
            grid.steps()
        )));
    }
    u0.validate()?;
    let m = grid.substeps();
    let mut values = Vec::with_capacity(grid.nodes());
    values.push(*u0);
    let mut u = *u0;
    for interval in 0..grid.intervals() {
        let h = grid.step_size(interval);
        for th in &theta[interval * m..(interval + 1) * m] {
            u = forward_step(&u, th, h)?;
            values.push(u);
        }
    }
    Ok(StateTrajectory {
        grid: grid.clone(),
        values,
    })
}
