use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid configuration: {0}")]
    Config(String),

    #[error("degenerate bounding box: axis {axis} has max {max} <= min {min}")]
    DegenerateBox { axis: usize, min: f64, max: f64 },

    #[error("{}value {value} on axis {axis} lies outside [{lo}, {hi}]", point_prefix(*.point))]
    OutOfBounds {
        point: Option<usize>,
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("level {level} has no valid entries")]
    EmptyLevel { level: usize },

    #[error("quantized symbol {symbol} exceeds the dynamic range of +/-2^23")]
    DynamicRange { symbol: i64 },

    #[error("invalid quantization step {0}")]
    QuantStep(f64),

    #[error("level {level}: expected {expected} packed rows, found {actual}")]
    CountMismatch {
        level: usize,
        expected: usize,
        actual: usize,
    },

    #[error(
        "position mismatch at level {level}: stream carries {expected} valid entries, \
         the supplied points yield {actual}"
    )]
    PositionMismatch {
        level: usize,
        expected: u32,
        actual: u32,
    },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("truncated input: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("entropy stream: {0}")]
    Entropy(#[from] crate::codec::entropy::EntropyError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn point_prefix(point: Option<usize>) -> String {
    match point {
        Some(i) => format!("point {i}: "),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a point index to an out-of-bounds error.
    pub(crate) fn at_point(self, index: usize) -> Self {
        match self {
            Error::OutOfBounds {
                axis, value, lo, hi, ..
            } => Error::OutOfBounds {
                point: Some(index),
                axis,
                value,
                lo,
                hi,
            },
            other => other,
        }
    }

    /// True for errors that mean the stream bytes cannot be trusted.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            Error::Checksum { .. }
                | Error::Corrupt(_)
                | Error::CountMismatch { .. }
                | Error::Entropy(_)
                | Error::BadMagic { .. }
                | Error::Version { .. }
                | Error::Truncated { .. }
        )
    }
}
