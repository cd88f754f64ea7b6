//! Crate-wide error type. Every failure names the quantity that was wrong;
//! none of the constructors panic on bad user input.

use alloc::string::String;
use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// All failure modes of the lowering and construction pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input tensor channel count does not match the kernel's input channels.
    ChannelMismatch { expected: usize, got: usize },
    /// The requested padding mode is representable but deliberately not
    /// implemented (reflection); see [`crate::tensor::PaddingMode`].
    UnsupportedPadding,
    /// Spatial dimensions of a tensor are not square.
    NotSquare { height: usize, width: usize },
    /// A flat data buffer does not match the declared shape.
    DataLength { expected: usize, got: usize },
    /// A kernel does not satisfy a constructor's shape requirements.
    InvalidKernel(String),
    /// Grid size is incompatible with the kernel half-width or architecture
    /// (lowering needs d > k; residual builders need d divisible by 4).
    InvalidDimension(String),
    /// Two objects that must agree in shape do not; the message names them.
    ShapeMismatch(String),
    /// A matrix row length does not match the grid (expected d^2 columns).
    DimensionMismatch { expected: usize, got: usize },
    /// The grid is too small to host the construction at all (d < 3).
    DomainTooSmall { d: usize },
    /// A numerically recovered constant failed its independent cross-check.
    SoundnessFailure { max_dev: f64 },
    /// A lowered plan violated one of its structural invariants.
    AuditFailure(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ChannelMismatch { expected, got } => {
                write!(f, "channel mismatch: kernel expects {expected} input channels, tensor has {got}")
            }
            Error::UnsupportedPadding => {
                write!(f, "unsupported padding mode: only constant and periodic padding are implemented")
            }
            Error::NotSquare { height, width } => {
                write!(f, "tensor is not square: {height}x{width}")
            }
            Error::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape (expected {expected})")
            }
            Error::InvalidKernel(msg) => write!(f, "invalid kernel: {msg}"),
            Error::InvalidDimension(msg) => write!(f, "invalid dimension: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} columns, got {got}")
            }
            Error::DomainTooSmall { d } => {
                write!(f, "domain too small: d = {d}, need d >= 3")
            }
            Error::SoundnessFailure { max_dev } => {
                write!(f, "soundness failure: recovered constant deviates by {max_dev:e} between probe points")
            }
            Error::AuditFailure(msg) => write!(f, "audit failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
