use thiserror::Error;

use crate::kernel::Actor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("event scheduled in the past: t={time} < clock={clock}")]
    PastEvent { time: f64, clock: f64 },

    #[error("handler failed on event #{seq} at t={time} ({actor:?}): {message}")]
    Handler {
        time: f64,
        seq: u64,
        actor: Actor,
        message: String,
    },

    #[error("distance {0} m is below the 1 m reference distance")]
    BelowReferenceDistance(f64),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("search space too large: {groups} groups x {bits} bits exceeds 16")]
    SearchSpaceTooLarge { groups: usize, bits: u8 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{0}` cannot be swept")]
    NotSweepable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
