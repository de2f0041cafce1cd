//! Backward co-state sweep.
//!
//! Within each observation interval the co-state solves the linear system
//! `V' = -(∇_U F)ᵀ V` backward in time with the explicit-implicit scheme
//! below. Between intervals it jumps by the gradient of the running loss at
//! the shared observation time, and it is seeded at `T` by the gradient of
//! the terminal loss.

use crate::control::{ControlProblem, LossWeights};
use crate::data::{ObservedPoint, TargetPoint};
use crate::error::{Error, Result};
use crate::forward::{SolverGrid, StateTrajectory};
use crate::model::{CostateVec, ParamVec, StateVec};

/// Co-state values on every `(interval, k)` point, `k = 0..=m`.
///
/// Unlike the state, the end of interval `i` and the start of interval
/// `i + 1` are stored separately because they differ by a jump.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    pub grid: SolverGrid,
    values: Vec<CostateVec>,
}

impl CostateTrajectory {
    pub fn at(&self, interval: usize, k: usize) -> &CostateVec {
        &self.values[interval * (self.grid.substeps() + 1) + k]
    }

    /// Value at the left end of step `step`, i.e. `V^{i,k}` with `k < m`.
    pub fn at_step(&self, step: usize) -> &CostateVec {
        let m = self.grid.substeps();
        self.at(step / m, step % m)
    }

    pub fn values(&self) -> &[CostateVec] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }
}

/// One backward step from `V^{k+1}` to `V^k` using the stored state `U^k`.
///
/// `V_S` and `V_E` are updated first and feed the `V_I` update of the same
/// step; `V_R` and `V_D` are carried over unchanged. Every denominator is at
/// least one, so the step is well defined for any `h > 0`.
pub fn backward_step(v_next: &CostateVec, u: &StateVec, theta: &ParamVec, h: f64) -> Result<CostateVec> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("step size must be positive ({h})")));
    }
    let ParamVec {
        beta,
        epsilon,
        gamma,
        mu,
    } = *theta;
    let n = u.living();
    let n2 = n * n;
    let a = h * beta * u.i * (n - u.s);
    let vs = (v_next.s * n2 + a * v_next.e) / (n2 + a);
    let ve = (v_next.e + h * epsilon * v_next.i) / (1.0 + h * epsilon);
    let coupling = beta * u.s * (n - u.i) * (vs - ve) / n2;
    let vi = (v_next.i + h * (gamma * v_next.r + mu * v_next.d - coupling)) / (1.0 + h * (gamma + mu));
    Ok(CostateVec::new(vs, ve, vi, v_next.r, v_next.d))
}

/// `∇_U g` for the terminal loss `λ₁(I − I_d)² + λ₂(D − D_d)²`.
pub fn terminal_costate(u_end: &StateVec, target: &TargetPoint, weights: &LossWeights) -> CostateVec {
    CostateVec::new(
        0.0,
        0.0,
        2.0 * weights.lambda1 * (u_end.i - target.infections),
        0.0,
        2.0 * weights.lambda2 * (u_end.d - target.deaths),
    )
}

/// `V(t_i⁻) = V(t_i⁺) + ∇_U L(U(t_i))`.
pub fn jump_update(
    v_right: &CostateVec,
    u_obs: &StateVec,
    obs: &ObservedPoint,
    weights: &LossWeights,
) -> CostateVec {
    *v_right
        + CostateVec::new(
            0.0,
            0.0,
            2.0 * weights.lambda1 * (u_obs.i - obs.infections),
            0.0,
            2.0 * weights.lambda2 * (u_obs.d - obs.deaths),
        )
}

/// Full backward sweep from `T` to the grid start.
pub fn solve_backward(
    traj: &StateTrajectory,
    theta: &[ParamVec],
    problem: &ControlProblem,
) -> Result<CostateTrajectory> {
    let grid = &problem.grid;
    if traj.grid != *grid {
        return Err(Error::Config(
            "state trajectory and problem use different grids".into(),
        ));
    }
    if theta.len() != grid.steps() {
        return Err(Error::Config(format!(
            "parameter path has {} entries, grid has {} steps",
            theta.len(),
            grid.steps()
        )));
    }
    let m = grid.substeps();
    let n = grid.intervals();
    let mut values = vec![CostateVec::ZERO; n * (m + 1)];

    let mut v = terminal_costate(traj.last(), &problem.target, &problem.weights);
    for interval in (0..n).rev() {
        if interval + 1 < n {
            // right end of this interval = left end of the next one plus the jump
            if let Some(obs) = problem.observation_at(interval + 1) {
                v = jump_update(&v, traj.at_observation(interval + 1), obs, &problem.weights);
            }
        }
        let base = interval * (m + 1);
        values[base + m] = v;
        let h = grid.step_size(interval);
        for k in (0..m).rev() {
            let step = interval * m + k;
            v = backward_step(&v, &traj.values[step], &theta[step], h)?;
            values[base + k] = v;
        }
    }
    Ok(CostateTrajectory {
        grid: grid.clone(),
        values,
    })
}
