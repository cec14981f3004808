use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmaError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch between operands: {0} vs {1}")]
    GridMismatch(String, String),

    #[error("operation requires n = {required}, got n = {got}")]
    Dimension { required: usize, got: usize },

    #[error("form is not Hermitian: max asymmetry {max_asym:.3e} exceeds {tol:.3e}")]
    NotHermitian { max_asym: f64, tol: f64 },

    #[error("form not positive enough: min eigenvalue {min_eig:.6e} < {required:.6e}")]
    NotPositive { min_eig: f64, required: f64 },

    #[error("right-hand side rejected: {0}")]
    Rhs(String),

    #[error("admissible potential generation failed: {0}")]
    Admissible(String),

    #[error("Newton iteration failed: {msg} (last residual {residual:.3e})")]
    Newton { msg: String, residual: f64 },

    #[error("Krylov solver stagnated: {0}")]
    Krylov(String),

    #[error("kernel iteration failed: {msg}; residual history {history:?}")]
    KernelIteration { msg: String, history: Vec<f64> },

    #[error("flow aborted: {0}")]
    Flow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("diagnostic input rejected: {0}")]
    Diagnostic(String),

    #[error("field dump: {0}")]
    Io(String),
}

impl From<std::io::Error> for CmaError {
    fn from(e: std::io::Error) -> Self {
        CmaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CmaError>;
