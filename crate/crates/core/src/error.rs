use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("newton iteration failed after {iterations} iterations, residual {residual:e}")]
    NewtonFailed { iterations: usize, residual: f64 },

    /// The implicit reaction diagonal `1 - dt * sum_k f_k zdot_k` lost positivity.
    #[error("time step too large: reaction diagonal {diagonal:e} at node {node}; use a smaller dt")]
    Stability { node: usize, diagonal: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Failure inside one run of a multi-run experiment.
    #[error("{label}: {source}")]
    Run {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}", config_message(*line, message))]
    Config { line: Option<usize>, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {message}"),
        None => format!("config: {message}"),
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_run(self, label: impl Into<String>) -> Self {
        Error::Run {
            label: label.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::NewtonFailed { .. } | Error::Stability { .. } => true,
            Error::Step { source, .. } | Error::Run { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
