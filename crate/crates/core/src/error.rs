use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A pointwise function was evaluated at a non-positive diameter.
    #[error("singular geometry: diameter {diameter} is not positive")]
    SingularGeometry { diameter: f64 },

    /// A sweep produced a diameter below the floor.
    #[error("infeasible trajectory: diameter {diameter} below floor {floor} at node {node}")]
    InfeasibleTrajectory {
        node: usize,
        diameter: f64,
        floor: f64,
    },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The shooting sweep hit its ceiling before enough roots were bracketed.
    #[error("bracket failure: found {found} of {requested} eigenvalues below k = {ceiling}")]
    BracketFailure {
        found: usize,
        requested: usize,
        ceiling: f64,
    },

    #[error("all {restarts} restarts produced infeasible trajectories")]
    AllRestartsInfeasible { restarts: usize },

    /// A value violates a documented invariant; `field` names the offender.
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            found,
        })
    }
}
