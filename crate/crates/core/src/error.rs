use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point {point:?} lies outside the validity region ({region})")]
    OutsideDomain { point: Vec<f64>, region: String },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("min-norm compensator is singular at {point:?}: L_g h vanishes while I < J")]
    Singular { point: Vec<f64> },

    #[error("numerical blow-up at t = {t} (path {path:?}): state {state:?}")]
    NumericalBlowup {
        path: Option<usize>,
        t: f64,
        state: Vec<f64>,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn outside(point: &[f64], region: impl Into<String>) -> Self {
        Error::OutsideDomain {
            point: point.to_vec(),
            region: region.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
