use crate::adjoint::CostateTrajectory;
use crate::forward::StateTrajectory;
use crate::model::{CostateVec, ParamBounds, ParamVec, StateVec};

/// Unconstrained minimizer of `H(U, V, θ) + Σ_c (θ_c − θ_{l,c})² / (2τ_c)`.
///
/// `H` is linear in `θ`, so the minimizer is one explicit step against
/// `∇_θ H = [SI(V_E − V_S)/N, E(V_I − V_E), I(V_R − V_I), I(V_D − V_I)]`.
pub fn prox_step(theta: &ParamVec, u: &StateVec, v: &CostateVec, tau: &ParamVec) -> ParamVec {
    let si_n = u.s * u.i / u.living();
    ParamVec::new(
        theta.beta + tau.beta * si_n * (v.s - v.e),
        theta.epsilon + tau.epsilon * u.e * (v.e - v.i),
        theta.gamma + tau.gamma * u.i * (v.i - v.r),
        theta.mu + tau.mu * u.i * (v.i - v.d),
    )
}

/// Proximal step followed by projection onto the parameter box.
pub fn ppa_update(
    theta: &ParamVec,
    u: &StateVec,
    v: &CostateVec,
    tau: &ParamVec,
    bounds: &ParamBounds,
) -> ParamVec {
    bounds.clip(prox_step(theta, u, v, tau))
}

/// Applies [`ppa_update`] at every step of the grid, using the state and
/// co-state at the left end of each step.
pub fn ppa_path(
    theta: &[ParamVec],
    traj: &StateTrajectory,
    costate: &CostateTrajectory,
    tau: &ParamVec,
    bounds: &ParamBounds,
) -> Vec<ParamVec> {
    theta
        .iter()
        .enumerate()
        .map(|(step, th)| ppa_update(th, &traj.values[step], costate.at_step(step), tau, bounds))
        .collect()
}
