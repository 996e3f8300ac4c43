use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("trivial subspace{}: all spanning columns are numerically zero", name.as_ref().map(|n| format!(" '{n}'")).unwrap_or_default())]
    TrivialSubspace { name: Option<String> },

    #[error("unknown divergence '{0}' (expected 'kl' or 'quadratic')")]
    UnknownDivergence(String),

    #[error("density {value} at atom {atom} is outside the domain of the divergence")]
    DensityDomain { atom: usize, value: f64 },

    #[error("subspace containment: {0}")]
    Containment(String),

    #[error("degenerate sum operator: every singular value is below the rank tolerance")]
    DegenerateOperator,

    #[error("sum is not closed: cosine of the Friedrichs angle is {cos} (>= 1)")]
    NotClosed { cos: f64 },

    #[error("inner minimization over subspace {subspace} did not converge after {iterations} iterations (gradient norm {residual:e})")]
    InnerNotConverged {
        subspace: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("joint Newton solve did not converge after {iterations} iterations (gradient norm {residual:e})")]
    JointNotConverged { iterations: usize, residual: f64 },

    #[error("singular Hessian in subspace block {0}")]
    SingularHessian(usize),

    #[error("unbounded iterates: sup-distance {radius} exceeds the guard {guard} at sweep {sweep}")]
    UnboundedIterates { sweep: usize, radius: f64, guard: f64 },

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error in field '{field}'{}: {message}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Schema {
        field: String,
        row: Option<usize>,
        message: String,
    },

    #[error("missing trace field: {0}")]
    MissingTraceField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InnerNotConverged { .. }
                | Error::JointNotConverged { .. }
                | Error::SingularHessian(_)
                | Error::UnboundedIterates { .. }
                | Error::DegenerateOperator
                | Error::NotClosed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
