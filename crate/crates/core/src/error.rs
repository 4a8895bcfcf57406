use std::path::PathBuf;

use thiserror::Error;

use crate::securesum::ParticipantId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("noise calibration failed: target epsilon {target} not reachable for sigma in [{lo}, {hi}]")]
    CalibrationFailure { target: f64, lo: f64, hi: f64 },

    #[error("protocol setup error: {0}")]
    ProtocolSetup(String),

    /// A secure-summation round closed with missing contributions.
    #[error("round {round_id} aborted: {} participant(s) dropped out", dropouts.len())]
    RoundAbort {
        round_id: u64,
        dropouts: Vec<ParticipantId>,
    },

    #[error("round {round_id} failed after re-run: {reason}")]
    RoundFailure { round_id: u64, reason: String },

    #[error("loss oracle failed for candidate {candidate}: {reason}")]
    OracleFailure { candidate: usize, reason: String },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("wire format error: {0}")]
    Wire(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
