use thiserror::Error;

pub type Result<T> = std::result::Result<T, FolError>;

#[derive(Debug, Error)]
pub enum FolError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {elem}: jacobian determinant {det_j:e} at ({xi}, {eta})")]
    DegenerateElement {
        elem: usize,
        det_j: f64,
        xi: f64,
        eta: f64,
    },

    #[error("unsupported quadrature order {0} (expected 1, 2 or 3)")]
    UnsupportedQuadrature(usize),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular matrix at pivot {0}")]
    Singular(usize),

    #[error("newton solver did not converge after {iterations} iterations; residual history {history:?}")]
    NewtonDiverged { iterations: usize, history: Vec<f64> },

    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("training diverged at epoch {epoch}: {term} is not finite")]
    TrainingDiverged { epoch: usize, term: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FolError {
    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        FolError::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
