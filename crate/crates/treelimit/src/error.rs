use thiserror::Error;

/// Errors surfaced by tree, measure and experiment operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("word depth {0} exceeds the supported maximum {1}")]
    DepthOverflow(usize, usize),
    #[error("invalid character {0:?} in word (expected '0' or '1')")]
    BadWordChar(char),
    #[error("node {0:?} is already in the tree")]
    DuplicateNode(String),
    #[error("parent of {0:?} is not in the tree")]
    OrphanInsert(String),
    #[error("operation requires a nonempty tree")]
    EmptyTree,
    #[error("complete tree of height {0} exceeds the supported maximum {1}")]
    HeightOverflow(u32, u32),
    #[error("group element supplies {got} bits but the tree has height {need}")]
    GroupElementTooShort { need: usize, got: usize },
    #[error("probability {0} outside the open interval (0, 1)")]
    BadProbability(f64),
    #[error("point pattern must contain at least one bit")]
    EmptyPointPattern,
    #[error("invalid table measure: {0}")]
    BadTable(String),
    #[error("cylinder depth {0} exceeds the configured maximum {1}")]
    CylinderDepthOverflow(u32, u32),
    #[error("words {0:?} and {1:?} are prefix-related; divergence undecidable")]
    UndecidablePrefix(String, String),
    #[error("node {0:?} has zero mass under the measure")]
    ZeroMassNode(String),
    #[error("node {0:?} never entered the trajectory")]
    NeverEntered(String),
    #[error("not a boundary partition: {0}")]
    NotBoundaryPartition(String),
    #[error("sequence of length {got} too short (need at least {need})")]
    SequenceTooShort { need: usize, got: usize },
    #[error("tied input values detected at position {0}")]
    TiedValues(usize),
    #[error("fluctuation samples disagree: {0}")]
    MismatchedSamples(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("bad measure spec {0:?}: {1}")]
    BadMeasureSpec(String, String),
    #[error("model {0:?} does not grow incrementally")]
    NotIncremental(String),
    #[error("bad trajectory file: {0}")]
    BadTrajectoryFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
