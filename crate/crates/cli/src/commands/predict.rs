use std::path::Path;

use log::info;
use seir_control::{solve_forward, ParamVec, SolverGrid, StateVec};

use super::{STATE_HEADER, THETA_HEADER};
use crate::error::{CliError, Result};
use crate::output::{read_table, write_table};

/// Holds the last fitted `θ` and runs the model `horizon` days past the end
/// of the fitted trajectory in `fit_dir`. Writes one row per day to
/// `forecast.csv`, starting with the last fitted state.
pub fn cmd_predict(fit_dir: &Path, horizon: usize, substeps: usize) -> Result<Vec<(f64, StateVec)>> {
    let theta_path = fit_dir.join("theta.csv");
    let traj_path = fit_dir.join("trajectory.csv");
    for p in [&theta_path, &traj_path] {
        if !p.is_file() {
            return Err(CliError::Usage(format!(
                "missing fit output {}; run `fit` first or point --out at a fit directory",
                p.display()
            )));
        }
    }
    let last = |path: &Path, header: &[&str]| -> Result<Vec<f64>> {
        read_table(path, header)?
            .pop()
            .ok_or_else(|| CliError::Usage(format!("{} has no rows", path.display())))
    };
    let th = last(&theta_path, &THETA_HEADER)?;
    let theta = ParamVec::new(th[1], th[2], th[3], th[4]);
    let st = last(&traj_path, &STATE_HEADER)?;
    let (t_end, u_end) = (st[0], StateVec::new(st[1], st[2], st[3], st[4], st[5]));
    info!("forecasting {horizon} days from t = {t_end} with theta = {theta:?}");

    let mut forecast = vec![(t_end, u_end)];
    if horizon > 0 {
        let grid = SolverGrid::uniform(t_end, 1.0, horizon, substeps)?;
        let traj = solve_forward(&u_end, &vec![theta; grid.steps()], &grid)?;
        forecast.extend((1..=horizon).map(|k| (grid.observation_times()[k], *traj.at_observation(k))));
    } else {
        u_end.validate()?;
    }
    let rows = forecast.iter().map(|(t, u)| vec![*t, u.s, u.e, u.i, u.r, u.d]);
    write_table(&fit_dir.join("forecast.csv"), &STATE_HEADER, rows)?;
    Ok(forecast)
}
