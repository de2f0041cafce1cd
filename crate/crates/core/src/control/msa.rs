use log::debug;

use super::ppa::ppa_path;
use super::{loss, ControlProblem};
use crate::adjoint::solve_backward;
use crate::error::{Error, Result};
use crate::forward::{solve_forward, StateTrajectory};
use crate::model::ParamVec;

/// Outcome of one successive-approximation run.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters per grid step.
    pub theta: Vec<ParamVec>,
    /// State trajectory driven by `theta`.
    pub trajectory: StateTrajectory,
    /// `loss_history[l]` is the loss of the `l`-th iterate; entry 0 is the initial guess.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history holds the initial loss")
    }
}

/// `‖new − old‖₂ / ‖old‖₂` over the stacked parameter vectors; the absolute
/// change when `old` is zero.
pub fn relative_change(old: &[ParamVec], new: &[ParamVec]) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    for (a, b) in old.iter().zip(new) {
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            diff += (y - x) * (y - x);
            norm += x * x;
        }
    }
    if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    }
}

/// Method of successive approximations with proximal Hamiltonian
/// minimization: forward state sweep, backward co-state sweep, then a
/// projected proximal update of `θ` at every grid step, repeated until the
/// relative change of `θ` drops to the tolerance or the iteration cap is hit.
pub fn fit(problem: &ControlProblem, theta0: &[ParamVec]) -> Result<FitResult> {
    let grid = &problem.grid;
    let settings = &problem.settings;
    if theta0.len() != grid.steps() {
        return Err(Error::Config(format!(
            "initial guess has {} entries, grid has {} steps",
            theta0.len(),
            grid.steps()
        )));
    }
    if let Some(step) = theta0.iter().position(|t| !settings.bounds.contains(t)) {
        return Err(Error::Config(format!(
            "initial guess at step {step} lies outside the parameter bounds: {:?}",
            theta0[step]
        )));
    }

    let mut theta = theta0.to_vec();
    let mut trajectory = solve_forward(&problem.u0, &theta, grid)?;
    let j0 = loss(&trajectory, problem)?;
    let limit = settings.divergence_factor * j0;
    let mut loss_history = vec![j0];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iters {
        let costate = solve_backward(&trajectory, &theta, problem)?;
        let next = ppa_path(&theta, &trajectory, &costate, &settings.tau, &settings.bounds);
        let change = relative_change(&theta, &next);
        theta = next;
        trajectory = solve_forward(&problem.u0, &theta, grid)?;
        let j = loss(&trajectory, problem)?;
        iterations += 1;
        loss_history.push(j);
        if !j.is_finite() || (j0 > 0.0 && j > limit) {
            return Err(Error::Diverged {
                iteration: iterations,
                loss: j,
                limit,
            });
        }
        if change <= settings.tol {
            converged = true;
            break;
        }
    }
    debug!(
        "fit on [{}, {}]: {} iterations, loss {:.3e} -> {:.3e}, converged = {}",
        grid.start(),
        grid.end(),
        iterations,
        j0,
        loss_history.last().unwrap(),
        converged
    );
    Ok(FitResult {
        theta,
        trajectory,
        loss_history,
        iterations,
        converged,
    })
}
