//! Process exit codes.

use std::fmt;

pub const CONFIG: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const IO: u8 = 4;

/// Invalid flags or settings detected by the CLI itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<hesunet::Error>() {
            return match e {
                hesunet::Error::Config(_) | hesunet::Error::Shape { .. } => CONFIG,
                hesunet::Error::NonFinite(_) => NUMERIC,
                hesunet::Error::Format(_)
                | hesunet::Error::Data(_)
                | hesunet::Error::Io(_)
                | hesunet::Error::Image(_) => IO,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return IO;
        }
    }
    1
}
