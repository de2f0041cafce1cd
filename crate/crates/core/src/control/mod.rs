//! Data-driven optimal control: loss, proximal Hamiltonian minimization,
//! the successive-approximation loop and its windowed driver.

mod gradient;
mod msa;
mod ppa;
mod schedule;
mod windowed;

pub use gradient::gradient_constant_theta;
pub use msa::{fit, relative_change, FitResult};
pub use ppa::{ppa_path, ppa_update, prox_step};
pub use schedule::{pinned_bounds, scheduled_control, PinnedBound, ScheduleOptions};
pub use windowed::{windowed_fit, WindowFit, WindowOptions, WindowedFit};

use log::warn;

use crate::data::{ObservedPoint, ObservedSeries, TargetPoint};
use crate::error::{Error, Result};
use crate::forward::{SolverGrid, StateTrajectory};
use crate::model::{ParamBounds, ParamVec, StateVec};

/// Weights `λ₁` (infections) and `λ₂` (deaths) of the squared misfits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2 };
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) || !lambda1.is_finite() || !lambda2.is_finite() {
            return Err(Error::Config(format!(
                "loss weights must be finite and nonnegative ({lambda1}, {lambda2})"
            )));
        }
        if lambda1 == 0.0 && lambda2 == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(w)
    }

    /// `λ₁ = 1 / max I_c²`, `λ₂ = 1 / max D_c²` over the given points, so both
    /// misfit terms are of order one. A series without deaths gets `λ₂ = 0`.
    pub fn balanced<'a>(points: impl IntoIterator<Item = &'a ObservedPoint>) -> Result<Self> {
        let (mut max_i, mut max_d) = (0.0_f64, 0.0_f64);
        for p in points {
            max_i = max_i.max(p.infections);
            max_d = max_d.max(p.deaths);
        }
        if max_i <= 0.0 {
            return Err(Error::Config(
                "cannot balance loss weights without infections".into(),
            ));
        }
        let lambda2 = if max_d > 0.0 {
            1.0 / (max_d * max_d)
        } else {
            warn!("no deaths in the data, death misfit is not weighted");
            0.0
        };
        Self::new(1.0 / (max_i * max_i), lambda2)
    }
}

/// Per-component proximal step sizes from a base `τ`:
/// `τ_β = 100τ`, `τ_ε = τ_γ = τ`, `τ_μ = τ/100`.
pub fn step_sizes(base: f64) -> ParamVec {
    ParamVec::new(100.0 * base, base, base, base / 100.0)
}

/// Optimizer knobs shared by every fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub bounds: ParamBounds,
    /// Proximal step size per parameter component.
    pub tau: ParamVec,
    /// Stop once `‖θ_l − θ_{l−1}‖ / ‖θ_{l−1}‖ ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Abort when the loss exceeds this multiple of the initial loss.
    pub divergence_factor: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::default(),
            tau: step_sizes(1e-6),
            tol: 1e-4,
            max_iters: 5000,
            divergence_factor: 1e3,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.tau.to_array().iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence factor must exceed one".into()));
        }
        Ok(())
    }
}

/// A fit or control task on one time window.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub grid: SolverGrid,
    pub u0: StateVec,
    /// Running-loss data at interior observation times.
    pub observed: Vec<ObservedPoint>,
    /// Terminal-loss target at the end time.
    pub target: TargetPoint,
    pub weights: LossWeights,
    pub settings: OptimizerSettings,
    /// `obs_lookup[i]` is the index into `observed` of the datum at `t_i`.
    obs_lookup: Vec<Option<usize>>,
}

impl ControlProblem {
    pub fn new(
        grid: SolverGrid,
        u0: StateVec,
        observed: Vec<ObservedPoint>,
        target: TargetPoint,
        weights: LossWeights,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        u0.validate()?;
        settings.validate()?;
        let n = grid.intervals();
        if (target.time - grid.end()).abs() > 1e-9 * (1.0 + grid.end().abs()) {
            return Err(Error::Config(format!(
                "target time {} differs from the grid end {}",
                target.time,
                grid.end()
            )));
        }
        let mut obs_lookup = vec![None; n + 1];
        for (k, p) in observed.iter().enumerate() {
            match grid.find_observation(p.time) {
                Some(i) if i >= 1 && i < n => {
                    if obs_lookup[i].replace(k).is_some() {
                        return Err(Error::Config(format!("two observations at t = {}", p.time)));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "observation at t = {} is not an interior grid time",
                        p.time
                    )))
                }
            }
        }
        Ok(Self {
            grid,
            u0,
            observed,
            target,
            weights,
            settings,
            obs_lookup,
        })
    }

    /// Problem on the observation times of `series`: the first entry is the
    /// start, the interior entries feed the running loss and the last one is
    /// the terminal target.
    pub fn from_series(
        series: &ObservedSeries,
        u0: StateVec,
        substeps: usize,
        weights: LossWeights,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::Config(
                "a problem needs at least two observation times".into(),
            ));
        }
        let grid = SolverGrid::new(series.times.clone(), substeps)?;
        let observed = (1..series.len() - 1).map(|k| series.point(k)).collect();
        Self::new(grid, u0, observed, series.last(), weights, settings)
    }

    /// Running-loss datum at observation index `i`, if any.
    pub fn observation_at(&self, obs_index: usize) -> Option<&ObservedPoint> {
        self.obs_lookup
            .get(obs_index)
            .copied()
            .flatten()
            .map(|k| &self.observed[k])
    }

    /// Constant parameter path over this problem's grid.
    pub fn constant_path(&self, theta: ParamVec) -> Vec<ParamVec> {
        vec![theta; self.grid.steps()]
    }
}

/// `J = Σ_i λ₁(I(t_i) − I_c)² + λ₂(D(t_i) − D_c)² + λ₁(I(T) − I_d)² + λ₂(D(T) − D_d)²`.
pub fn loss(traj: &StateTrajectory, problem: &ControlProblem) -> Result<f64> {
    if traj.grid != problem.grid {
        return Err(Error::Config(
            "trajectory does not cover the problem's observation times".into(),
        ));
    }
    let w = &problem.weights;
    let term = |u: &StateVec, p: &ObservedPoint| {
        w.lambda1 * (u.i - p.infections).powi(2) + w.lambda2 * (u.d - p.deaths).powi(2)
    };
    let mut j = term(traj.last(), &problem.target);
    for i in 1..problem.grid.intervals() {
        if let Some(p) = problem.observation_at(i) {
            j += term(traj.at_observation(i), p);
        }
    }
    Ok(j)
}

/// Largest relative misfit of `I` and `D` at the observation times of `series`
/// found on the trajectory grid, as `(max |I − I_c|/I_c, max |D − D_c|/D_c)`.
/// Zero reported counts are skipped.
pub fn relative_misfit(traj: &StateTrajectory, series: &ObservedSeries) -> (f64, f64) {
    let (mut worst_i, mut worst_d) = (0.0_f64, 0.0_f64);
    for p in series.observations() {
        if let Some(k) = traj.grid.find_observation(p.time) {
            let u = traj.at_observation(k);
            if p.infections > 0.0 {
                worst_i = worst_i.max((u.i - p.infections).abs() / p.infections);
            }
            if p.deaths > 0.0 {
                worst_d = worst_d.max((u.d - p.deaths).abs() / p.deaths);
            }
        }
    }
    (worst_i, worst_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::solve_forward;

    fn problem(observed: Vec<ObservedPoint>, target: TargetPoint, w: LossWeights) -> ControlProblem {
        let grid = SolverGrid::uniform(0.0, 1.0, 2, 4).unwrap();
        ControlProblem::new(
            grid,
            StateVec::new(990.0, 0.0, 10.0, 0.0, 0.0),
            observed,
            target,
            w,
            OptimizerSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn loss_examples() {
        let th = ParamVec::new(0.4, 0.2, 0.1, 0.01);
        let base = problem(
            vec![],
            TargetPoint::new(2.0, 0.0, 0.0),
            LossWeights::new(1.0, 1.0).unwrap(),
        );
        let traj = solve_forward(&base.u0, &base.constant_path(th), &base.grid).unwrap();
        let mid = *traj.at_observation(1);
        let end = *traj.last();

        let exact = problem(
            vec![ObservedPoint::new(1.0, mid.i, mid.d)],
            TargetPoint::new(2.0, end.i, end.d),
            LossWeights::new(1.0, 1.0).unwrap(),
        );
        assert_eq!(loss(&traj, &exact).unwrap(), 0.0);

        let off = problem(
            vec![ObservedPoint::new(1.0, mid.i - 2.0, mid.d + 1.0)],
            TargetPoint::new(2.0, end.i, end.d),
            LossWeights::new(1.0, 1.0).unwrap(),
        );
        assert!((loss(&traj, &off).unwrap() - 5.0).abs() < 1e-9);

        let scaled = problem(
            vec![ObservedPoint::new(1.0, mid.i - 2.0, mid.d + 1.0)],
            TargetPoint::new(2.0, end.i, end.d),
            LossWeights::new(3.0, 3.0).unwrap(),
        );
        assert!((loss(&traj, &scaled).unwrap() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn observations_must_sit_on_interior_times() {
        let w = LossWeights::new(1.0, 1.0).unwrap();
        let grid = SolverGrid::uniform(0.0, 1.0, 2, 4).unwrap();
        let u0 = StateVec::new(990.0, 0.0, 10.0, 0.0, 0.0);
        let s = OptimizerSettings::default();
        let t = TargetPoint::new(2.0, 1.0, 1.0);
        assert!(
            ControlProblem::new(grid.clone(), u0, vec![ObservedPoint::new(0.5, 1.0, 1.0)], t, w, s).is_err()
        );
        assert!(
            ControlProblem::new(grid.clone(), u0, vec![ObservedPoint::new(2.0, 1.0, 1.0)], t, w, s).is_err()
        );
        assert!(
            ControlProblem::new(grid.clone(), u0, vec![], TargetPoint::new(3.0, 1.0, 1.0), w, s).is_err()
        );
        let p = ControlProblem::new(grid, u0, vec![ObservedPoint::new(1.0, 1.0, 1.0)], t, w, s).unwrap();
        assert!(p.observation_at(1).is_some());
        assert!(p.observation_at(0).is_none());
        assert!(p.observation_at(2).is_none());
    }

    #[test]
    fn weights() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
        let pts = [
            ObservedPoint::new(1.0, 100.0, 4.0),
            ObservedPoint::new(2.0, 200.0, 5.0),
        ];
        let w = LossWeights::balanced(&pts).unwrap();
        assert_eq!(w.lambda1, 1.0 / 40000.0);
        assert_eq!(w.lambda2, 1.0 / 25.0);
        assert_eq!(step_sizes(1.0), ParamVec::new(100.0, 1.0, 1.0, 0.01));
    }
}
