use std::fmt;
use std::io;

/// Errors shared by all modules of this crate.
#[derive(Debug)]
pub enum Error {
    /// A point count exceeded 128-bit integer range.
    CountOverflow { n: usize, k: usize },
    /// A vector or block dimension was zero or otherwise unusable.
    InvalidDimension(String),
    /// An input contained NaN or infinity.
    NonFiniteInput,
    /// An operation required a non-zero vector or point.
    ZeroVector,
    /// Two operands disagree on dimension.
    DimensionMismatch { expected: usize, actual: usize },
    /// A pyramid index value is not below N_p(n, k).
    IndexOutOfRange { value: u128, limit: u128 },
    /// A parameter failed validation.
    InvalidArgument(String),
    /// A bitstream or file did not match its declared format.
    Format(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::CountOverflow { n, k } => {
                write!(f, "point count for P({n},{k}) overflows 128-bit arithmetic")
            }
            Error::InvalidDimension(msg) => write!(f, "invalid dimension: {msg}"),
            Error::NonFiniteInput => write!(f, "input contains NaN or infinite values"),
            Error::ZeroVector => write!(f, "operation requires a non-zero vector"),
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Error::IndexOutOfRange { value, limit } => {
                write!(f, "pyramid index {value} out of range (must be < {limit})")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
