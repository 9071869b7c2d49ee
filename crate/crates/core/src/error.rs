use thiserror::Error;

/// Errors surfaced by grid construction, solvers and verification suites.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),

    #[error(
        "time horizon {t_max} is not an integer multiple of the age step {da} \
         (ratio {ratio}); characteristic alignment da == dt is impossible"
    )]
    NonCommensurate { t_max: f64, da: f64, ratio: f64 },

    #[error("kernel half-width must lie in (0, 24], got {0}")]
    InvalidHalfWidth(f64),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{what} has {got} values, grid expects {expected}")]
    ShapeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value {value} at node (age {age}, time {time}, x {x})")]
    NonFinite {
        value: f64,
        age: usize,
        time: usize,
        x: usize,
    },

    #[error(
        "fixed-point boundary iteration did not converge in {max_iter} iterations \
         (last residual {last:e})"
    )]
    FixedPointDiverged {
        max_iter: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("brute-force enumeration is limited to {max} control cells, grid has {cells}")]
    TooManyControlCells { cells: usize, max: usize },

    #[error(
        "perturbation direction inadmissible at {count} node(s), \
         first at (age {age}, time {time}, x {x}): {reason}"
    )]
    InadmissibleDirection {
        count: usize,
        age: usize,
        time: usize,
        x: usize,
        reason: &'static str,
    },

    #[error("comparison pair not ordered: {what} at node (age {age}, time {time}, x {x})")]
    UnorderedPair {
        what: &'static str,
        age: usize,
        time: usize,
        x: usize,
    },

    #[error("series violates the integral-inequality hypothesis at index {index}")]
    GronwallHypothesis { index: usize },

    #[error("{0}")]
    Invalid(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
