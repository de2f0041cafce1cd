//! Time-varying SEIR(D) epidemic model with data-driven parameter learning.
//!
//! The state `U = [S, E, I, R, D]` is advanced by a positivity-preserving
//! explicit-implicit scheme, the co-state by its linear backward
//! counterpart with jumps at observation times, and the parameter path
//! `θ = [β, ε, γ, μ]` by projected proximal steps on the Hamiltonian.
//!
//! ```
//! use seir_control::{forward_step, ParamVec, StateVec};
//!
//! let u = StateVec::new(990.0, 0.0, 10.0, 0.0, 0.0);
//! let next = forward_step(&u, &ParamVec::new(0.5, 0.2, 0.1, 0.01), 1.0).unwrap();
//! assert!((next.s - 985.07463).abs() < 1e-5);
//! ```

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod control;
pub mod data;
pub mod error;
pub mod forward;
pub mod model;

pub use adjoint::{backward_step, solve_backward, CostateTrajectory};
pub use control::{
    fit, gradient_constant_theta, loss, ppa_update, scheduled_control, windowed_fit, ControlProblem,
    FitResult, LossWeights, OptimizerSettings, ScheduleOptions, WindowOptions, WindowedFit,
};
pub use data::{
    initial_state, mu_init, parse_csse, parse_population_table, sample_observations, synth_twin,
    ObservedPoint, ObservedSeries, TargetPoint, TwinData,
};
pub use error::{Error, Result};
pub use forward::{forward_step, solve_forward, SolverGrid, StateTrajectory, DEFAULT_SUBSTEPS};
pub use model::{
    hamiltonian, r0, sigma, CostateVec, DemographyParams, FractionState, Param, ParamBounds, ParamVec,
    StateVec,
};
