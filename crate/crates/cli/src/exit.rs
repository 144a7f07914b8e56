use std::fmt;

pub const OK: i32 = 0;
pub const VERIFY_FAILED: i32 = 1;
pub const USAGE: i32 = 2;
pub const IO: i32 = 3;

/// Bad flags, config keys or values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A verification run that completed but found failed invariants.
#[derive(Debug)]
pub struct VerifyFailed(pub Vec<String>);

impl fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} check(s) failed: {}", self.0.len(), self.0.join("; "))
    }
}

impl std::error::Error for VerifyFailed {}

/// Exit code for an error chain: file problems are I/O, contract and shape
/// violations are usage, failed checks and numerical breakdowns are 1.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<VerifyFailed>() {
            return VERIFY_FAILED;
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
        if let Some(e) = cause.downcast_ref::<marginkd::Error>() {
            return match e {
                marginkd::Error::Io(_) | marginkd::Error::Csv(_) | marginkd::Error::Json(_) | marginkd::Error::Format { .. } => IO,
                marginkd::Error::Contract(_) | marginkd::Error::Dimension { .. } | marginkd::Error::Index { .. } => USAGE,
                _ => VERIFY_FAILED,
            };
        }
    }
    VERIFY_FAILED
}
