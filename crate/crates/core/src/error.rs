use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mode index ({0}, {1}, {2}) out of range 1..={3}")]
    IndexOutOfRange(usize, usize, usize, usize),

    #[error("y-quadrature grid has {points} points, need at least {required}")]
    UnderResolved { points: usize, required: usize },

    #[error("grid: {0}")]
    Grid(String),

    #[error("implicit system for mode {mode} is singular (pivot {pivot:e} at row {row})")]
    SingularSystem { mode: usize, row: usize, pivot: f64 },

    #[error("explicit stability guard tripped at t = {t}: courant number {courant:.3} exceeds {limit}")]
    Courant { t: f64, courant: f64, limit: f64 },

    #[error("blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("decay certification refused: {0}")]
    CertificationRefused(String),

    #[error("initial datum: {0}")]
    InitialData(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Time at which a run was aborted, for numerical failures.
    pub fn abort_time(&self) -> Option<f64> {
        match self {
            Error::Courant { t, .. } | Error::BlowUp { t, .. } => Some(*t),
            _ => None,
        }
    }
}
