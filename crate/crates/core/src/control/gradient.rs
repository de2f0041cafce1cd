use super::ControlProblem;
use crate::adjoint::solve_backward;
use crate::error::{Error, Result};
use crate::forward::solve_forward;
use crate::model::ParamVec;

/// Gradient of the terminal loss with respect to a constant `θ`.
///
/// Solves the state forward, the co-state backward from `∇_U g(U(T))`, then
/// sums `h (∇_θ F(U^k))ᵀ V^k` over the sub-grid with the left-endpoint rule.
/// The problem must carry no running-loss data.
pub fn gradient_constant_theta(problem: &ControlProblem, theta: ParamVec) -> Result<ParamVec> {
    if !problem.observed.is_empty() {
        return Err(Error::Config(
            "constant-θ gradient expects a terminal-cost problem without observations".into(),
        ));
    }
    theta.validate()?;
    let path = problem.constant_path(theta);
    let traj = solve_forward(&problem.u0, &path, &problem.grid)?;
    let costate = solve_backward(&traj, &path, problem)?;

    let mut grad = [0.0; 4];
    for step in 0..problem.grid.steps() {
        let h = problem.grid.step_size(problem.grid.interval_of_step(step));
        let u = &traj.values[step];
        let v = costate.at_step(step);
        let si_n = u.s * u.i / u.living();
        grad[0] += h * si_n * (v.e - v.s);
        grad[1] += h * u.e * (v.i - v.e);
        grad[2] += h * u.i * (v.r - v.i);
        grad[3] += h * u.i * (v.d - v.i);
    }
    Ok(ParamVec::from_array(grad))
}
