use thiserror::Error;

/// Which of the two contraction inequalities a certificate violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedInequality {
    /// `(1 + γ²A₁)(1 + αA₂)/(1 + γμ)² < 1`
    Distance,
    /// `γ²B₁(1 + αA₂)/(α(1 + γμ)²) + B₂ < 1`
    Control,
}

impl std::fmt::Display for FailedInequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailedInequality::Distance => write!(f, "(1+γ²A1)(1+αA2)/(1+γμ)² < 1"),
            FailedInequality::Control => write!(f, "γ²B1(1+αA2)/(α(1+γμ)²) + B2 < 1"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite (pivot {pivot} at row {row})")]
    NotSpd { row: usize, pivot: f64 },

    #[error("rank-one solve needs c > 0, got {0}")]
    NonPositiveC(f64),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("invalid probability distribution: {0}")]
    BadDistribution(String),

    #[error("function index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("stepsize must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("prox over an empty subset")]
    EmptySubset,

    #[error("sampler support has {size} subsets, above the enumeration cap {cap}")]
    SupportTooLarge { size: u128, cap: u128 },

    #[error("control state does not match the {0} correction")]
    StateMismatch(&'static str),

    #[error("missing constant: {0}")]
    MissingConstant(&'static str),

    #[error("certificate invalid: {inequality} fails (value {value})")]
    CertificateInvalid { inequality: FailedInequality, value: f64 },

    #[error("degenerate constants: {0}")]
    DegenerateConstants(String),

    #[error("mismatch in {what}: certificate {certificate}, closed form {closed_form}")]
    Mismatch {
        what: &'static str,
        certificate: f64,
        closed_form: f64,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("invalid method: {0}")]
    InvalidMethod(String),

    #[error("no stepsize selector for {0}")]
    NoSelector(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
