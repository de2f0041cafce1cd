use std::path::PathBuf;

use seir_control::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NOT_CONVERGED: u8 = 4;
    pub const UNREACHABLE: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing artifacts, or a config value that makes no sense.
    #[error("{0}")]
    Usage(String),

    /// `line` 0 marks a problem not tied to one line.
    #[error("{}", located(path, *line, message))]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A data file could not be read.
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    /// The run finished and wrote its outputs, but some fit did not converge.
    #[error("{0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => exit::CONFIG,
            CliError::Input { .. } => exit::DATA,
            CliError::Output { .. } => exit::IO,
            CliError::NotConverged(_) => exit::NOT_CONVERGED,
            CliError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Config(_) | CoreError::Domain(_) => exit::CONFIG,
        CoreError::RegionNotFound(_)
        | CoreError::Format(_)
        | CoreError::Parse { .. }
        | CoreError::Range(_)
        | CoreError::Csv(_) => exit::DATA,
        CoreError::Diverged { .. } => exit::NOT_CONVERGED,
        CoreError::Unreachable(_) => exit::UNREACHABLE,
        CoreError::Window { source, .. } => core_code(source),
        CoreError::Io(_) => exit::IO,
    }
}

fn located(path: &std::path::Path, line: usize, message: &str) -> String {
    match line {
        0 => format!("{}: {message}", path.display()),
        _ => format!("{}:{line}: {message}", path.display()),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
