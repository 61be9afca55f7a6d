use std::path::PathBuf;

use crate::fit::PropertyModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input has zero variance (or is otherwise uninformative) where the
    /// operation needs structure, e.g. a constant image passed to correlation.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("fit did not converge: {message}")]
    FitFailure {
        message: String,
        best: Box<PropertyModel>,
    },

    /// Requested property value lies outside what the model can produce.
    #[error("property value {requested} is unreachable; attainable range is ({min}, {max})")]
    Unreachable { requested: f64, min: f64, max: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("peak correlation {peak} below the required minimum {min_peak}")]
    LowPeak { peak: f64, min_peak: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end: 2 for data and
    /// validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularDesign(_) | Error::FitFailure { .. } | Error::NoConvergence(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
