use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A layout file could not be parsed. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    LayoutSyntax {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid quadrant layout: {0}")]
    InvalidLayout(String),

    #[error("invalid world configuration: {0}")]
    InvalidWorld(String),

    #[error("distance query needs at least one target cell")]
    EmptyTargets,

    #[error("successor {successor} is outside the belief support of state {state}")]
    SupportMismatch { state: usize, successor: usize },

    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("no parameters registered for `{0}`")]
    MissingParams(String),

    #[error("simulations are not paired: {0}")]
    Unpaired(String),

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::LayoutSyntax { .. }
                | Error::InvalidLayout(_)
                | Error::InvalidWorld(_)
                | Error::InvalidParam { .. }
                | Error::MissingParams(_)
                | Error::Unpaired(_)
                | Error::Input { .. }
        )
    }
}
