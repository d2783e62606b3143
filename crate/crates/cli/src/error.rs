use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("training diverged at iteration {iter}: {reason}")]
    Diverged { iter: usize, reason: String },
    #[error(transparent)]
    Train(#[from] orthowgan::wgan::TrainError),
    #[error(transparent)]
    Eval(#[from] orthowgan::eval::EvalError),
    #[error(transparent)]
    Autodiff(#[from] orthowgan::autodiff::AutodiffError),
    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    /// 1 for usage, configuration and I/O problems, 2 for numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
