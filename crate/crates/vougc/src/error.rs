use num_complex::Complex64;

/// Error type shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("singular Lyapunov equation: eigenvalue sum magnitude {0:.3e} below tolerance")]
    SingularLyapunov(f64),

    #[error("no stabilising Riccati solution; Hamiltonian spectrum: {0:?}")]
    NoStabilisingSolution(Vec<Complex64>),

    #[error("Riccati solver residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Convergence { residual: f64, tol: f64 },

    #[error("(A33, Ar3) is not detectable with nonzero Ar3")]
    NotDetectable,

    #[error("ill-conditioned covariance: {0}")]
    IllConditionedCovariance(String),

    #[error("numerical degeneracy: {0}")]
    Degeneracy(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trajectory diverged at t = {t}: state norm {norm:.3e} exceeds guard")]
    Divergence { t: f64, norm: f64 },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) => 2,
            Error::Dimension(_) | Error::Validation(_) | Error::Unsupported(_) => 3,
            Error::SingularLyapunov(_)
            | Error::NoStabilisingSolution(_)
            | Error::Convergence { .. }
            | Error::NotDetectable
            | Error::Consistency(_) => 4,
            Error::IllConditionedCovariance(_) | Error::Degeneracy(_) | Error::Coverage(_) => 5,
            Error::Divergence { .. } => 6,
        }
    }
}
