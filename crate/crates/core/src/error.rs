use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("could not place {layer} without overlap after {attempts} attempts")]
    PlacementFailure { layer: String, attempts: usize },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("infeasible dataset spec: {0}")]
    InfeasibleSpec(String),

    #[error("blindspot set generation exhausted after {attempts} attempts")]
    GenerationExhausted { attempts: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("hypothesized blindspot is empty")]
    EmptyHypothesis,

    #[error("true blindspot is empty")]
    EmptyTruth,

    #[error("experiment configuration {0} is not induction-verified")]
    UnverifiedEc(String),

    #[error("import format error: {0}")]
    ImportFormat(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Numerical failures are reported separately from validation failures by the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Numerical(_) | Error::DegenerateInput(_)
        )
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleSpec(_)
                | Error::Geometry(_)
                | Error::DimensionMismatch(_)
                | Error::EmptyHypothesis
                | Error::EmptyTruth
                | Error::UnverifiedEc(_)
                | Error::ImportFormat(_)
                | Error::Invalid(_)
                | Error::Serde(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
