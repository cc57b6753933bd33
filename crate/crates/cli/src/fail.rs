//! Exit-code classification.

use std::fmt;

use lesiontrack::Error as CoreError;

/// Exit codes; stable across releases.
pub mod code {
    /// I/O failure, unreadable or inconsistent input data.
    pub const IO: i32 = 1;
    /// Invalid arguments, configuration or phantom parameters.
    pub const INVALID: i32 = 2;
    /// Degenerate (empty) instance mask given to `synth`.
    pub const EMPTY_MASK: i32 = 3;
    /// Registration diverged.
    pub const DIVERGED: i32 = 4;
}

/// An error carrying its exit code explicitly.
#[derive(Debug)]
pub struct Fail {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Fail {}

pub fn fail(code: i32, message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Fail {
        code,
        message: message.into(),
    })
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Io { .. }
        | CoreError::Header(_)
        | CoreError::NonAxisAligned(_)
        | CoreError::UnsupportedDatatype(_)
        | CoreError::NanVoxel
        | CoreError::GridMismatch(_)
        | CoreError::Json(_) => code::IO,
        CoreError::Diverged { .. } => code::DIVERGED,
        CoreError::EmptyMask => code::EMPTY_MASK,
        CoreError::InvalidInput(_)
        | CoreError::ConstantVolume
        | CoreError::MissingLabel(_)
        | CoreError::OutOfBounds(_)
        | CoreError::Segmenter(_) => code::INVALID,
    }
}

/// Exit code for an error chain: the first explicit [`Fail`] or core error
/// decides, anything else is treated as I/O.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<Fail>() {
            return f.code;
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return core_code(c);
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return code::INVALID;
        }
    }
    code::IO
}
