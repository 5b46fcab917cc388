//! Process exit codes, one per error class.

use std::fmt;

use pano_core::Error;

/// Bad invocation: wrong arity, out-of-range option, malformed override.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Exit code for every class of failure the CLI can report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Internal = 1,
    Usage = 2,
    FileNotFound = 3,
    UnsupportedFormat = 4,
    CorruptImage = 5,
    InvalidImage = 6,
    Config = 7,
    InvalidParameter = 8,
    Alignment = 9,
    DegenerateTransform = 10,
    MasterTooSmall = 11,
    Io = 12,
    Descriptor = 13,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_core(e: &Error) -> Self {
        match e {
            Error::FileNotFound(_) => Self::FileNotFound,
            Error::UnsupportedFormat(_) => Self::UnsupportedFormat,
            Error::CorruptImage(_) => Self::CorruptImage,
            Error::DimensionMismatch(_) | Error::ImageTooSmall { .. } => Self::InvalidImage,
            Error::Config(_) => Self::Config,
            Error::InvalidParameter(_) => Self::InvalidParameter,
            Error::EmptyResponse
            | Error::ZeroGradientNeighborhood { .. }
            | Error::TooCloseToBorder { .. }
            | Error::ZeroDescriptor { .. } => Self::Descriptor,
            Error::InsufficientMatches(_) | Error::NoConsensus { .. } => Self::Alignment,
            Error::DegenerateTransform(_) => Self::DegenerateTransform,
            Error::MasterTooSmall(_) => Self::MasterTooSmall,
            Error::PipelineFailure { source, .. } => Self::of_core(source),
            Error::Io(_) | Error::Json(_) => Self::Io,
        }
    }

    pub fn of(err: &anyhow::Error) -> Self {
        if err.downcast_ref::<Usage>().is_some() {
            return Self::Usage;
        }
        if let Some(e) = err.downcast_ref::<Error>() {
            return Self::of_core(e);
        }
        if let Some(f) = err.downcast_ref::<pano_core::StitchFailure>() {
            return Self::of_core(&f.error);
        }
        if err.downcast_ref::<std::io::Error>().is_some() {
            return Self::Io;
        }
        Self::Internal
    }
}
