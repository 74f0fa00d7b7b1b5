use thiserror::Error;

/// Errors raised by the lattice, geometry, map and flow layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {0} out of range (expected 0..4)")]
    AxisOutOfRange(usize),

    #[error("derivative order {0} unsupported (expected 1 or 2)")]
    UnsupportedOrder(usize),

    #[error("non-finite value in {what} at node {node}")]
    NonFinite { what: &'static str, node: usize },

    #[error("field has {found} values, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: String, found: String },

    #[error("field is empty")]
    EmptyField,

    #[error("non-positive volume density {value} at node {node}")]
    NonPositiveVolume { node: usize, value: f64 },

    #[error("metric is not positive definite at node {node}")]
    NotPositiveDefinite { node: usize },

    #[error("conformal factor {value} at node {node} exceeds |phi| <= 20")]
    ConformalFactorOverflow { node: usize, value: f64 },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("point with |y| = {radius} leaves the ball chart (guard {guard})")]
    ChartViolation { radius: f64, guard: f64 },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("cutoff radius {radius} too large for grid (must be below {limit})")]
    RadiusTooLarge { radius: f64, limit: f64 },

    #[error("map has vanishing Dirichlet energy")]
    DegenerateMap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid flow configuration: {0}")]
    InvalidFlowConfig(String),

    #[error("field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
