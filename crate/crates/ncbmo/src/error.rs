use thiserror::Error;

/// Error type shared by all modules. Variants carry enough context to
/// reconstruct what went wrong without a debugger.
#[derive(Debug, Error)]
pub enum NcError {
    #[error("linalg: matrix is not Hermitian (relative residual {residual:.3e})")]
    NonHermitian { residual: f64 },

    #[error("linalg: negative power of a singular positive matrix (min eigenvalue {min_eig:.3e})")]
    SingularPower { min_eig: f64 },

    #[error("{module}: exponent {p} out of range (require p >= {min} or p = inf)")]
    BadExponent {
        module: &'static str,
        p: f64,
        min: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("algebra: bad block spec: {0}")]
    BadSpec(String),

    #[error("algebra: levels not strictly increasing at level {level}")]
    NotIncreasing { level: usize },

    #[error("algebra: level {level} not invariant under the modular group (residual {residual:.3e})")]
    NotModularInvariant { level: usize, residual: f64 },

    #[error("algebra: state is not a faithful density: {0}")]
    StateNotFaithful(String),

    #[error("martingale: element outside the ambient algebra (residual {residual:.3e})")]
    NotInAlgebra { residual: f64 },

    #[error("martingale: instance too large: {0}")]
    TooLarge(String),

    #[error("norms: sup-norm terms must be PSD (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("norms: instance is not commutative (off-diagonal mass {mass:.3e})")]
    NotCommutative { mass: f64 },

    #[error("norms: optimizer diverged (non-finite iterate)")]
    OptimizerDiverged,

    #[error("norms: sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("interval: intervals are not nested")]
    NotNested,

    #[error("verify: witness not in the admissible subspace (residual {residual:.3e})")]
    BadWitness { residual: f64 },

    #[error("verify: state is not tracial (deviation {0:.3e})")]
    NotTracial(f64),

    #[error("verify: empty report stream")]
    EmptyStream,

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NcError>;
