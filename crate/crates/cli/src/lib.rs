//! Batch front end for fitting time-varying SEIR parameters to reported
//! counts, forecasting with the fitted parameters, steering the model along
//! a target schedule, and plain forward simulation.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::info;

pub use config::RunConfig;
pub use error::{exit, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "seir-control", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config `region`.
    #[arg(long, global = true)]
    pub region: Option<String>,

    /// Output directory; overrides the config `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the config `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn the parameter path from the configured data.
    Fit,
    /// Extend a finished fit with its final parameters.
    Predict {
        /// Days to forecast.
        #[arg(long, default_value_t = 14)]
        horizon: usize,
    },
    /// Learn parameters that drive the model along a `t,I_d,D_d` schedule.
    Control {
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Forward run with constant parameters; prints the threshold classification.
    Simulate,
}

impl Cli {
    fn load_config(&self) -> Result<Option<RunConfig>> {
        let Some(path) = &self.config else {
            return Ok(None);
        };
        let mut config = RunConfig::load(path)?;
        if let Some(region) = &self.region {
            config.region = Some(region.clone());
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(Some(config))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.load_config()?;
    let required = || {
        config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --config".into()))
    };
    match &cli.command {
        Command::Fit => {
            let config = required()?;
            commands::cmd_fit(config, &config.out)?;
            info!("fit written to {}", config.out.display());
        }
        Command::Predict { horizon } => {
            let dir = match (&cli.out, &config) {
                (Some(out), _) => out.clone(),
                (None, Some(c)) => c.out.clone(),
                (None, None) => PathBuf::from("out"),
            };
            let substeps = config
                .as_ref()
                .map_or(seir_control::DEFAULT_SUBSTEPS, |c| c.substeps);
            commands::cmd_predict(&dir, *horizon, substeps)?;
            info!("forecast written to {}", dir.join("forecast.csv").display());
        }
        Command::Control { schedule } => {
            let config = required()?;
            if !schedule.is_file() {
                return Err(CliError::Usage(format!(
                    "no schedule file {}",
                    schedule.display()
                )));
            }
            commands::cmd_control(config, schedule, &config.out)?;
            info!("control written to {}", config.out.join("control").display());
        }
        Command::Simulate => {
            let config = required()?;
            let sim = commands::cmd_simulate(config, &config.out)?;
            println!("sigma = {:.6}", sim.sigma);
            println!("R0 = {:.6}", sim.r0);
            println!("outcome: {}", sim.outcome);
        }
    }
    Ok(())
}
