use thiserror::Error;

use crate::jets::JetError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("degenerate fundamental tensor: {0}")]
    Degenerate(String),
    #[error("zero vector where a nonzero one is required")]
    ZeroVector,
    #[error("point {point:?} lies outside the chart")]
    OutsideChart { point: Vec<f64> },
    #[error("velocity left the future cone at t = {t}")]
    ConeExit { t: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },
    #[error("conjugate point at t = {t} before the cut value {cut}")]
    ConjugateBeforeCut { t: f64, cut: f64 },
    #[error("non-positive det A = {det:e} at t = {t}")]
    SingularJacobi { t: f64, det: f64 },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integrator { .. }
                | Error::ConeExit { .. }
                | Error::OutsideChart { .. }
                | Error::Jet(_)
                | Error::Degenerate(_)
                | Error::ConjugateBeforeCut { .. }
                | Error::SingularJacobi { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
