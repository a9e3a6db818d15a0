use thiserror::Error;

use crate::degree::SweepRow;
use crate::integrator::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("quadratic program did not converge after {iterations} iterations (last iterate {iterate:?})")]
    QpNonConvergence { iterations: usize, iterate: Vec<f64> },

    #[error("constraint set is empty")]
    EmptySet,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tangency violated at t = {t}, x = {x:?}: F(t,x) does not meet the tangent cone")]
    TangencyViolation { t: f64, x: Vec<f64> },

    /// A solver failed mid-flight; the trajectory computed so far is attached.
    #[error("trajectory aborted at step {}: {source}", partial.len())]
    Aborted {
        source: Box<Error>,
        partial: Box<Trajectory>,
    },

    #[error("map vanishes on the boundary at {point:?} (residual {residual:.3e})")]
    ZeroOnBoundary { point: Vec<f64>, residual: f64 },

    #[error("0 ∈ Ax + G(x) (up to {residual:.3e}) at boundary point {point:?}")]
    BoundaryResidual { point: Vec<f64>, residual: f64 },

    #[error("homotopy boundary residual vanishes at z = {z} (residual {residual:.3e})")]
    HomotopyResidual { z: f64, residual: f64 },

    #[error("inconclusive: {reason}")]
    Inconclusive { reason: String, sweep: Vec<SweepRow> },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn inconclusive(reason: impl Into<String>) -> Self {
        Error::Inconclusive {
            reason: reason.into(),
            sweep: Vec::new(),
        }
    }

    /// Strips `Aborted` wrappers and returns the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_finite(x: &nalgebra::DVector<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}
