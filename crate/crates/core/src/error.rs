use alloc::string::String;

/// Failures raised by the lattice model, the Fock-space machinery and the
/// jump process.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),
    #[error("one-particle Hamiltonian is not Hermitian (deviation {deviation:e})")]
    NonHermitian { deviation: f64 },
    #[error("zero mode with energy {energy:e}; the positive/negative split is ambiguous")]
    ZeroMode { energy: f64 },
    #[error("negative and positive mode counts differ ({neg} vs {pos})")]
    ModeCountMismatch { neg: usize, pos: usize },
    #[error("no on-site conjugation intertwines h1 with -h1 (best deviation {deviation:e})")]
    ConjugationMismatch { deviation: f64 },
    #[error("degenerate eigenspace at energy {energy} is not momentum-diagonalizable")]
    DegeneracyResolutionFailed { energy: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mode vectors are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("fock space with {modes} modes exceeds the limit of {limit}")]
    TooLarge { modes: usize, limit: usize },
    #[error("charge {charge} at site {site} is out of range")]
    ChargeOutOfRange { site: usize, charge: i32 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("region grows to cover the whole lattice")]
    RegionTooLarge,
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("electron and positron sites must be pairwise distinct")]
    SitesNotDistinct,
    #[error("krylov evolution did not converge (error estimate {estimate:e})")]
    ConvergenceFailure { estimate: f64 },
    #[error("configuration has probability {probability:e}; jump rates are undefined there")]
    ZeroProbabilityConfiguration { probability: f64 },
    #[error("jump rate times step stays at {product} after maximal subdivision")]
    StepTooCoarse { product: f64 },
    #[error("invalid evolution plan: {0}")]
    InvalidPlan(String),
}

pub type Result<T> = core::result::Result<T, Error>;
