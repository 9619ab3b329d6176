use thiserror::Error;

/// Errors raised by the grid, solver and diagnostics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FbError {
    #[error("degenerate domain box: {0}")]
    DegenerateBox(String),
    #[error("need at least 3 nodes per axis, got {0}x{1}")]
    TooFewNodes(usize, usize),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("ball of radius {radius} about ({x}, {y}) exits the domain")]
    BallExitsDomain { x: f64, y: f64, radius: f64 },
    #[error("cell ({0}, {1}) out of range")]
    CellOutOfRange(usize, usize),
    #[error("grids of the operands differ")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("field is not admissible: {0}")]
    NotAdmissible(String),
    #[error("weight bounds violated: {0}")]
    WeightBounds(String),
    #[error("linear solve stalled: residual {residual:e} after {iterations} iterations")]
    SolveFailed { residual: f64, iterations: usize },
    #[error("interior has {0} nodes, exhaustive search supports at most 25")]
    InteriorTooLarge(usize),
    #[error("no free boundary: {0}")]
    EmptyFreeBoundary(String),
    #[error("too few interface points near ({x}, {y}): {found}")]
    TooFewNeighbors { x: f64, y: f64, found: usize },
    #[error("point ({0}, {1}) is not within one cell of the free boundary")]
    NotOnFreeBoundary(f64, f64),
    #[error("monotonicity violated along column at transverse coordinate {0}")]
    NotMonotone(f64),
    #[error("level {level} exceeds column maximum {column_max} at transverse coordinate {at}")]
    LevelAboveColumn {
        level: f64,
        column_max: f64,
        at: f64,
    },
    #[error("undefined direction: {0}")]
    UndefinedDirection(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for FbError {
    fn from(e: std::io::Error) -> Self {
        FbError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FbError>;
