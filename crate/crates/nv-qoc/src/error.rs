//! Error type shared by every module of the crate.

use std::fmt;

/// Errors produced by construction, simulation, optimization and analysis
/// routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Spin quantum number other than 1/2 or 1.
    UnsupportedSpin(f64),
    /// Composite Hilbert-space dimension above the supported cap.
    DimensionCap { dim: usize, cap: usize },
    /// A matrix that must be Hermitian deviates from its adjoint.
    NotHermitian { deviation: f64 },
    /// Operands with incompatible dimensions.
    DimensionMismatch { expected: usize, found: usize },
    /// A state vector whose norm is not 1.
    NotNormalized { norm: f64 },
    /// A NaN or infinity where a finite value is required.
    NonFinite { what: &'static str },
    /// Pulse data inconsistent with its time grid.
    GridMismatch { expected: usize, found: usize },
    /// Zero-length displacement between dipole-coupled spins.
    ZeroDisplacement,
    /// The requested cost has no gradient under the chosen optimizer.
    GradientUnavailable { cost: &'static str },
    /// A measurement distribution that is empty or not normalized.
    InvalidDistribution { detail: String },
    /// A pulse sequence violating the ordering or structure rules.
    InvalidSequence { detail: String },
    /// Zero response slope; sensitivity is undefined.
    ZeroSlope,
    /// A parameter outside its documented domain.
    InvalidParameter { what: &'static str, value: f64 },
    /// Mismatched or degenerate ensemble weights.
    InvalidEnsemble { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnsupportedSpin(s) => {
                write!(f, "unsupported spin quantum number {s}; expected 1/2 or 1")
            }
            Error::DimensionCap { dim, cap } => {
                write!(f, "Hilbert-space dimension {dim} exceeds the cap of {cap}")
            }
            Error::NotHermitian { deviation } => {
                write!(f, "matrix is not Hermitian (max |H - H^dag| = {deviation:e})")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotNormalized { norm } => {
                write!(f, "state vector is not normalized (norm = {norm})")
            }
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::GridMismatch { expected, found } => {
                write!(f, "pulse grid mismatch: expected {expected} samples, found {found}")
            }
            Error::ZeroDisplacement => write!(f, "displacement vector must be non-zero"),
            Error::GradientUnavailable { cost } => {
                write!(f, "no analytic gradient for {cost}; use a gradient-free optimizer")
            }
            Error::InvalidDistribution { detail } => {
                write!(f, "invalid measurement distribution: {detail}")
            }
            Error::InvalidSequence { detail } => write!(f, "invalid pulse sequence: {detail}"),
            Error::ZeroSlope => write!(f, "response slope is zero; sensitivity is undefined"),
            Error::InvalidParameter { what, value } => {
                write!(f, "invalid parameter {what} = {value}")
            }
            Error::InvalidEnsemble { detail } => write!(f, "invalid ensemble: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
