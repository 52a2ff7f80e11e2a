use thiserror::Error;

/// Errors produced while building or analysing level shift operators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid small system: {0}")]
    InvalidSystem(String),

    #[error("degeneracy tolerance clash: {0}")]
    ToleranceClash(String),

    #[error("coupling matrix is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("{0} is not a Bohr frequency of the small system")]
    NotBohrFrequency(f64),

    #[error(
        "the level shift operator does not exist: infrared exponent p = {p} lies below -1/2, \
         so the regularized operator diverges as eps -> 0"
    )]
    NonexistentLso { p: f64 },

    #[error("quadrature did not converge: estimate {estimate:e} with error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("invalid form factor: {0}")]
    InvalidFormFactor(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver failed to converge")]
    Eigensolver,

    #[error("eigenbranch tracking failed: {0}")]
    BranchTracking(String),

    #[error("kernel dimension is {found}, expected {expected}")]
    KernelDimension { found: usize, expected: usize },

    #[error("shifted linear system is singular (condition estimate {0:e})")]
    SingularSystem(f64),

    #[error("{what} diverges for infrared exponent p = {p}")]
    DivergentIntegral { what: String, p: f64 },

    #[error("{what} did not converge under refinement: {trace}")]
    NotConverged { what: String, trace: String },
}

pub type Result<T> = std::result::Result<T, Error>;
