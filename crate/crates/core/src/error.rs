use thiserror::Error;

/// Errors raised while building or solving a constrained emulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgpError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {value} lies outside [0, 1]")]
    OutOfDomain { value: f64 },

    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    /// The kernel's sample paths are not smooth enough for the requested
    /// derivative order or constraint.
    #[error("kernel too rough: {family} supports mixed order {supported}, {requested} requested")]
    KernelTooRough {
        family: String,
        supported: u32,
        requested: u32,
    },

    /// Too few coefficients to interpolate the data (need m > n).
    #[error("too few coefficients: {coefficients} coefficients for {observations} observations")]
    InfeasibleSize {
        coefficients: usize,
        observations: usize,
    },

    #[error("coefficient count {requested} exceeds the configured cap {cap}")]
    TooLarge { requested: usize, cap: usize },

    /// Data and constraints cannot hold together.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("equality system is rank deficient")]
    RankDeficient,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration limit {0} exceeded")]
    IterationLimit(usize),

    /// Rejection sampling accepted too few proposals to be practical.
    #[error("acceptance rate {rate:.3e} below 1/{max_tries}; use the Gibbs sampler")]
    LowAcceptance { rate: f64, max_tries: usize },

    #[error("io error: {0}")]
    Io(String),
}

/// Coarse class of an error, used for process exit codes and C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Infeasible,
    Numerical,
}

impl CgpError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CgpError::Infeasible(_) => ErrorClass::Infeasible,
            CgpError::RankDeficient
            | CgpError::Numerical(_)
            | CgpError::IterationLimit(_)
            | CgpError::LowAcceptance { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Config,
        }
    }

    /// Process exit code: 2 config error, 3 infeasible, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Infeasible => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl From<std::io::Error> for CgpError {
    fn from(e: std::io::Error) -> Self {
        CgpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CgpError>;
