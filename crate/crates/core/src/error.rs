use thiserror::Error;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input or an operation called outside its parameter domain.
    Validation,
    /// A numerical guard refused to return an untrustworthy answer.
    NumericalGuard,
    /// An internal consistency check failed.
    Invariant,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation needs a positive mutation rate (u > 0)")]
    MutationRequired,

    #[error("operation needs a positive selection rate (s > 0)")]
    SelectionRequired,

    #[error("u = 0 with s > 0: use the no-mutation closed form")]
    UseClosedForm,

    #[error("step size {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("alternating sum lost precision (estimated error {estimate:e})")]
    PrecisionLoss { estimate: f64 },

    #[error("coefficients are not nonincreasing at n = {index}")]
    NotMonotone { index: usize },

    #[error("{lines} lines at the horizon exceed the enumeration limit of {limit}")]
    TooManyLines { lines: usize, limit: usize },

    #[error("path count {count} exceeds the cap of {cap}")]
    PathExplosion { count: u128, cap: u128 },

    #[error("replica {replica} did not absorb within {cap} events")]
    ReplicaTimeout { replica: u64, cap: u64 },

    #[error("event cap of {cap} exceeded before the horizon")]
    EventCapExceeded { cap: u64 },

    #[error("event times must be strictly increasing (event {index})")]
    CoincidentEvents { index: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::PrecisionLoss { .. }
            | Error::EventCapExceeded { .. }
            | Error::ReplicaTimeout { .. }
            | Error::PathExplosion { .. }
            | Error::TooManyLines { .. } => ErrorClass::NumericalGuard,
            Error::NotMonotone { .. } | Error::Invariant(_) => ErrorClass::Invariant,
            _ => ErrorClass::Validation,
        }
    }

    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::MutationRequired => "MutationRequired",
            Error::SelectionRequired => "SelectionRequired",
            Error::UseClosedForm => "UseClosedForm",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::PrecisionLoss { .. } => "PrecisionLoss",
            Error::NotMonotone { .. } => "NotMonotone",
            Error::TooManyLines { .. } => "TooManyLines",
            Error::PathExplosion { .. } => "PathExplosion",
            Error::ReplicaTimeout { .. } => "ReplicaTimeout",
            Error::EventCapExceeded { .. } => "EventCapExceeded",
            Error::CoincidentEvents { .. } => "CoincidentEvents",
            Error::Invariant(_) => "Invariant",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
