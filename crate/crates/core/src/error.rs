use std::path::PathBuf;

use thiserror::Error;

use crate::posit::PositFormat;
use crate::simd::Mode;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode code {0:#04b} (00 = p8, 01 = p16, 10 = p32)")]
    InvalidMode(u8),

    #[error("malformed hex word `{0}`")]
    MalformedHex(String),

    #[error("{format} words are {expected} hex digits wide, got {found}")]
    WrongWidth {
        format: PositFormat,
        expected: usize,
        found: usize,
    },

    #[error("bit pattern {bits:#x} does not fit in {format}")]
    PatternTooWide { bits: u64, format: PositFormat },

    #[error("NaR has no real value")]
    NotAReal,

    #[error("lane mask {mask:#x} selects lanes outside {mode} mode")]
    LaneMask { mask: u8, mode: Mode },

    #[error("expected {expected} per-lane values, got {found}")]
    LaneCount { expected: usize, found: usize },

    #[error("shift amount {amount} out of range for {width}-bit lanes")]
    ShiftOutOfRange { amount: u32, width: u32 },

    #[error("quire wrapped around its {width}-bit accumulator")]
    QuireOverflow { width: u32 },

    #[error("operand format {found} does not match {expected}")]
    FormatMismatch {
        expected: PositFormat,
        found: PositFormat,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("evaluation needs at least one sample")]
    EmptyEvaluation,

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
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
