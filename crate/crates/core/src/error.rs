use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is not readable as text: {0}")]
    UnreadableInput(String),
    #[error("export contains no records")]
    EmptyExport,
    #[error("no cited reference has a publication year")]
    NoDatedRefs,
    #[error("segmentation produced no non-empty segment")]
    EmptySegmentation,
    #[error("invalid year range {0}..{1}")]
    InvalidRange(i32, i32),
    #[error("graph contains a cycle")]
    CyclicInput,
    #[error("path count overflow on arc {0} -> {1}")]
    PathCountOverflow(String, String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("partition has {got} assignments for {expected} nodes")]
    PartitionMismatch { expected: usize, got: usize },
    #[error("malformed review file at line {line}: {message}")]
    MalformedReviewFile { line: usize, message: String },
    #[error("malformed ledger at line {line}: {message}")]
    MalformedLedger { line: usize, message: String },
    #[error("project format version {found} is newer than supported version {supported}")]
    VersionTooNew { found: u32, supported: u32 },
    #[error("corrupt project file at byte {offset}: {message}")]
    CorruptFile { offset: usize, message: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
