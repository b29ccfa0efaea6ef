use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("binomial coefficient C({n}, {k}) overflows 128 bits")]
    BinomialOverflow { n: u64, k: u64 },

    #[error("enumeration too large: {count} tuples exceeds budget {budget}")]
    EnumerationTooLarge { count: f64, budget: u64 },

    #[error("rank {rank} out of range for C({n}, {m}) = {total}")]
    RankOutOfRange { rank: u128, n: usize, m: usize, total: u128 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    #[error("degenerate conditional law: U_h2 = 0")]
    DegenerateConditionalLaw,

    #[error("missing moment: {0}")]
    MissingMoment(&'static str),

    #[error("approximate value refused: {0}")]
    ApproximateRefused(&'static str),

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
