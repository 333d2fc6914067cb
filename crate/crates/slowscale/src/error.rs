use thiserror::Error;

/// Errors produced by parsing, state-space construction, reduction and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error (line {line}): {msg}")]
    Parse { line: usize, msg: String },

    #[error("network has no fast reactions")]
    NoFastSubsystem,

    #[error("state space is not provably bounded and no caps were given{}", match .input_reaction {
        Some(r) => format!(": uncapped input reaction `{r}`"),
        None => String::from(": no positive conservation law found"),
    })]
    Unbounded { input_reaction: Option<String> },

    #[error("cap exceeded: reaction `{reaction}` leaves the truncation box from state {state:?}")]
    CapExceeded { reaction: String, state: Vec<u64> },

    #[error("state budget exceeded: more than {limit} accessible states")]
    StateBudgetExceeded { limit: usize },

    #[error("null space of absorbing block {scc} is not one-dimensional (residual {residual:.3e})")]
    NumericalRankDeficiency { scc: usize, residual: f64 },

    #[error("singular {block} block in fast component {component}")]
    SingularInternalBlock { component: usize, block: &'static str },

    #[error("reduced generator violates the Markov property: {msg}")]
    NotMarkov { msg: String },

    #[error("projection identity {which} violated: residual {residual:.3e} > tol {tol:.3e}")]
    ProjectionIdentity {
        which: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("distribution is not stationary: ||Kp||_inf = {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotStationary { residual: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time grids do not match")]
    GridMismatch,

    #[error("{0} is not a generator: {1}")]
    NotGenerator(String, String),

    #[error("binomial overflow computing C({n}, {k})")]
    Overflow { n: u64, k: u64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
