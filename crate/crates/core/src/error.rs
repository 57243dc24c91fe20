use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid wave speed parameter: {0}")]
    InvalidWaveSpeed(String),

    #[error("invalid initial data: {0}")]
    InvalidData(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("positivity loss at node ({i}, {j}) (X = {xi}, Y = {eta}): p = {p}, q = {q}; step too coarse")]
    PositivityLoss {
        i: usize,
        j: usize,
        xi: f64,
        eta: f64,
        p: f64,
        q: f64,
    },

    #[error("cell divergence at node ({i}, {j}): fixed-point residual grew from {previous:e} to {current:e}")]
    CellDivergence {
        i: usize,
        j: usize,
        previous: f64,
        current: f64,
    },

    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("no convergence after {iterations} Picard sweeps (last ratios: {ratios:?})")]
    NoConvergence { iterations: usize, ratios: Vec<f64> },

    #[error("compatibility violation at node ({i}, {j}): path mismatch {mismatch:e} exceeds {limit:e}")]
    CompatibilityViolation {
        i: usize,
        j: usize,
        mismatch: f64,
        limit: f64,
    },

    #[error("physical coordinates have not been attached to the grid")]
    MissingCoordinates,

    #[error("time {tau} outside the recovered range [{t_min}, {t_max}]")]
    TimeOutOfRange { tau: f64, t_min: f64, t_max: f64 },

    #[error("level set t = {0} is empty")]
    EmptyLevelSet(f64),

    #[error("test function support leaves the covered region: {0}")]
    SupportOutsideRegion(String),

    #[error("no overlap between compared x-ranges")]
    NoOverlap,

    #[error("CFL condition violated: dt = {dt:e} > {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
