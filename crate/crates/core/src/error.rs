use thiserror::Error;

use crate::arena::RegionLabel;

/// Errors surfaced by the arena, the layout functions and the persistent array.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("duplicate region label {0:?}")]
    DuplicateRegion(RegionLabel),
    #[error("unknown region {0:?}")]
    UnknownRegion(RegionLabel),
    #[error("address {address} out of range for arena of {size} words")]
    OutOfRange { address: u64, size: u64 },
    #[error("cannot shrink region {label:?} from {old} to {new} words")]
    Shrink {
        label: RegionLabel,
        old: u64,
        new: u64,
    },
    #[error("arena budget of {budget} words exceeded (requested {requested})")]
    BudgetExceeded { budget: u64, requested: u64 },
    #[error("path of length {len} does not fit a tree of {levels} levels")]
    PathTooLong { len: usize, levels: u32 },
    #[error("invalid path step {0}; expected 0, 1 or 2")]
    InvalidStep(u8),
    #[error("rank {rank} out of range for {slots} slots")]
    RankOutOfRange { rank: u64, slots: u64 },
    #[error("node set is not closed under parents")]
    NotParentClosed,
    #[error("block size must be at least one word")]
    ZeroBlock,
    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(String),
    #[error("{0} is not a power of two >= 2")]
    NotPowerOfTwo(u64),
    #[error("region holds {have} node slots, {need} required")]
    RegionTooSmall { have: u64, need: u64 },
    #[error("value {0} collides with a reserved sentinel")]
    ReservedPayload(u64),
    #[error("version {requested} is newer than the latest version {latest}")]
    FutureVersion { requested: u64, latest: u64 },
    #[error("no tree covers ({column}, {version})")]
    Uncovered { column: u64, version: u64 },
    #[error("node already has three children")]
    ThirdChildExists,
    #[error("malformed write log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
