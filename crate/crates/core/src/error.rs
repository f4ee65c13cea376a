use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("log window does not cover the radial grid: {0}")]
    WindowMismatch(String),

    #[error("non-finite value detected at t = {time}")]
    NanDetected { time: f64 },

    #[error("H1 norm {h1:.6e} exceeded ceiling {ceiling:.6e} at t = {time}; last safe time {last_safe}")]
    H1CeilingExceeded {
        time: f64,
        last_safe: f64,
        h1: f64,
        ceiling: f64,
    },

    #[error("shooting bracket not found: {0}")]
    NoSignChange(String),

    #[error("profile has not decayed at r_max: Q(r_max)/Q(0) = {ratio:.3e}")]
    NotDecayed { ratio: f64 },

    #[error("limit did not converge: {0}")]
    NotConverged(String),

    #[error("time {time} is not covered by the trajectory [{start}, {end}]")]
    CoverageGap { time: f64, start: f64, end: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("power iteration did not settle: relative oscillation {0:.3e}")]
    NonConvergentIteration(f64),

    #[error("alpha = {alpha} outside (0, {upper})")]
    InvalidAlpha { alpha: f64, upper: f64 },

    #[error("(q, r) = ({q}, {r}) is not admissible in dimension {n}")]
    InadmissiblePair { q: f64, r: f64, n: usize },

    #[error("bad snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
