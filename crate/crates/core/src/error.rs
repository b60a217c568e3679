use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation at state {state:?}, t = {time}{}", location(.trajectory, .step))]
    DomainViolation {
        state: Vec<f64>,
        time: f64,
        trajectory: Option<usize>,
        step: Option<usize>,
    },
    #[error("ground state has a nonzero phase gradient; a real positive ground state is required")]
    NonPositiveGroundState,
    #[error("superposition vanishes at {state:?} (nodal point)")]
    NodalPoint { state: Vec<f64> },
    #[error("required substep {0:e} is below the minimum of 1e-8")]
    StepSizeUnderflow(f64),
    #[error("no snapshot data supplied")]
    EmptyData,
    #[error("eigenvalue is zero; logarithm undefined")]
    ZeroEigenvalue,
    #[error("ill-conditioned system (condition number {0:e})")]
    IllConditioned(f64),
    #[error("dictionary does not expose analytic derivatives")]
    DerivativesUnavailable,
    #[error("observable is singular at the origin (|x| = {0:e})")]
    SingularObservable(f64),
    #[error("duplicate dictionary label `{0}`")]
    DuplicateLabel(String),
    #[error("objective references missing observable `{0}`")]
    IndexMissing(String),
    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,
    #[error("matrix G(x) is rank deficient (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },
    #[error("division by a vanishing ground state at point {0}")]
    DivisionByZero(usize),
    #[error("criticality identity violated: attained {attained}, expected {expected}")]
    BellmanMismatch { attained: f64, expected: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(trajectory: &Option<usize>, step: &Option<usize>) -> String {
    match (trajectory, step) {
        (Some(i), Some(k)) => format!(" (trajectory {i}, step {k})"),
        (Some(i), None) => format!(" (trajectory {i})"),
        (None, Some(k)) => format!(" (step {k})"),
        (None, None) => String::new(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
