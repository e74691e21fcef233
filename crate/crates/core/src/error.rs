use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative entry {value} at row {row}, column {col} (1-based)")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} (1-based) sums to {sum}, outside the accepted tolerance of 1")]
    RowSumOutOfTolerance { row: usize, sum: f64 },

    #[error("matrix list must not be empty")]
    EmptyMatrixList,

    #[error("subset must be a nonempty proper subset of the {n} nodes")]
    SubsetNotProper { n: usize },

    #[error("subsets must have equal cardinality: {left} vs {right}")]
    CardinalityMismatch { left: usize, right: usize },

    #[error("diagonal entry {value} at node {node} (1-based) is below the declared floor {floor}")]
    DiagonalBelowFloor { node: usize, value: f64, floor: f64 },

    #[error("self-weight floor must lie in (0,1), got {0}")]
    InvalidSelfWeightFloor(f64),

    #[error("schedule declares no self-weight floor; this operation requires one")]
    SelfWeightFloorUndeclared,

    #[error("time {t} is before the schedule start {t0}")]
    TimeBeforeStart { t: u64, t0: u64 },

    #[error("time {t} exceeds the schedule horizon {horizon}")]
    HorizonExceeded { t: u64, horizon: u64 },

    #[error("horizon [{start}, {end}] is too short for window length {window}")]
    HorizonTooShort { start: u64, end: u64, window: u64 },

    #[error("window length must be at least 1")]
    InvalidWindow,

    #[error("{what} requires n <= {limit}, got {n}")]
    EnumerationGuard {
        what: &'static str,
        limit: usize,
        n: usize,
    },

    #[error("arc set is empty")]
    EmptyArcSet,

    #[error("arc ({from}, {to}) (1-based) is outside the node range 1..={n} or is a self-loop")]
    InvalidArc { from: usize, to: usize, n: usize },

    #[error("graph has no directed spanning tree")]
    NoSpanningTree,

    #[error("node {node} (1-based) has no incoming persistent arc")]
    NoIncomingPersistentArc { node: usize },

    #[error("invalid permutation of {n} nodes")]
    InvalidPermutation { n: usize },

    #[error("vector is not sorted nondecreasingly at position {pos} (1-based)")]
    NotSorted { pos: usize },

    #[error("index {index} out of range 1..={max} (1-based)")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("stage mass target delta={delta} must exceed {minimum} for these parameters")]
    StageTargetTooSmall { delta: f64, minimum: f64 },

    #[error("ratio bound must be >= 1, got {0}")]
    InvalidRatioBound(f64),

    #[error("horizon exhausted after {scanned} steps with {accumulated} of {required} accumulated")]
    HorizonExhausted {
        scanned: u64,
        accumulated: f64,
        required: f64,
    },

    #[error("trajectory does not come from the expected fixture: {0}")]
    WrongFixture(String),

    #[error("sorted-state identity violated at step {t}: |z - Cz| = {deviation}")]
    SortedStateMismatch { t: u64, deviation: f64 },

    #[error("spread increased at step {t}: {before} -> {after}")]
    SpreadIncreased { t: u64, before: f64, after: f64 },

    #[error("schedule file: {0}")]
    ScheduleFile(String),

    #[error("generator construction: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
