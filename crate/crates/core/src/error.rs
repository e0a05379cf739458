use thiserror::Error;

/// Everything that can go wrong while building populations, drawing outcomes,
/// or computing estimates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("stratum ({stratum}, {status}) has non-integer size N*rho = {size}")]
    NonIntegerStratum {
        stratum: usize,
        status: usize,
        size: f64,
    },

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),

    #[error("total testing mass sum(rho*pi) is zero")]
    ZeroTestingMass,

    #[error("active information undefined: log of a zero prevalence")]
    UndefinedActiveInfo,

    #[error("testing probabilities depend on infection status in stratum {0}")]
    MechanismMismatch(usize),

    #[error("no tested individuals")]
    EmptySample,

    #[error("stratum {0} has no tested individuals")]
    EmptyStratum(usize),

    #[error("zero sampling-probability weight for a stratum with tested individuals")]
    DivisionByZeroWeight,

    #[error("population of size {0} is too large to enumerate (limit 30)")]
    TooLarge(u64),

    #[error("slab constraints define an empty region")]
    EmptyRegion,

    #[error("rejection sampler starved: acceptance rate {rate:e} after {attempts} attempts")]
    RejectionStarvation { rate: f64, attempts: u64 },

    #[error("estimate {0} lies on the boundary of [0, 1]")]
    BoundaryEstimate(f64),

    #[error("variance bracket {0:e} is negative")]
    NegativeVarianceCombination(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported mechanism for this operation: {0}")]
    UnsupportedMechanism(String),
}

pub type Result<T> = std::result::Result<T, Error>;
