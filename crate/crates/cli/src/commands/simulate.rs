use std::fmt;
use std::path::Path;

use seir_control::model::integrate_fractions;
use seir_control::{r0, sigma, solve_forward, FractionState, SolverGrid, StateTrajectory};

use super::write_trajectory;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Extinction,
    Persistence,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Extinction => write!(f, "extinction expected (sigma <= 1)"),
            Outcome::Persistence => write!(f, "persistence expected (sigma > 1)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub sigma: f64,
    pub r0: f64,
    pub outcome: Outcome,
    pub trajectory: StateTrajectory,
    /// Daily fractions `(s, e, i)` of the living population.
    pub fractions: Vec<FractionState>,
}

/// Constant-`θ` run from `u0` for `days` days: the full model on a daily
/// grid with `substeps` steps per day, and the fraction system by RK4 with
/// the same step.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Simulation> {
    let missing = |key: &str| CliError::Usage(format!("simulate needs `{key}` in the config"));
    let theta = config.theta.ok_or_else(|| missing("theta"))?;
    let u0 = config.u0.ok_or_else(|| missing("u0"))?;
    let days = config.days.ok_or_else(|| missing("days"))?;
    if days < 1.0 || days.fract() != 0.0 {
        return Err(CliError::Usage(format!(
            "days must be a positive whole number ({days})"
        )));
    }
    let days = days as usize;
    u0.validate()?;
    let grid = SolverGrid::uniform(0.0, 1.0, days, config.substeps)?;
    let trajectory = solve_forward(&u0, &vec![theta; grid.steps()], &grid)?;

    let n = u0.living();
    let x0 = FractionState::new(u0.s / n, u0.e / n, u0.i / n);
    let m = config.substeps;
    let all = integrate_fractions(x0, &theta, config.birth, 1.0 / m as f64, days * m)?;
    let fractions: Vec<FractionState> = all.into_iter().step_by(m).collect();

    let s = sigma(&theta, config.birth)?;
    let sim = Simulation {
        sigma: s,
        r0: r0(&theta)?,
        outcome: if s <= 1.0 {
            Outcome::Extinction
        } else {
            Outcome::Persistence
        },
        trajectory,
        fractions,
    };

    ensure_dir(out)?;
    write_trajectory(&out.join("trajectory.csv"), &sim.trajectory)?;
    write_table(
        &out.join("fractions.csv"),
        &["t", "s", "e", "i", "r"],
        sim.fractions
            .iter()
            .enumerate()
            .map(|(d, x)| vec![d as f64, x.s, x.e, x.i, x.r()]),
    )?;
    Ok(sim)
}
