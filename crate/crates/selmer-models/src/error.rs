use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid modulus {0}")]
    InvalidModulus(u64),
    #[error("modulus {0} is not a prime power; split it with crt_split first")]
    NotPrimePower(u64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate quadratic form modulo {0}")]
    Degenerate(u64),
    #[error("non-unit norm")]
    NonUnitNorm,
    #[error("not split")]
    NotSplit,
    #[error("unsupported spinor modulus {0}")]
    UnsupportedSpinorModulus(u64),
    #[error("enumeration budget exceeded: group order {order} > budget {budget}")]
    BudgetExceeded { order: String, budget: u64 },
    #[error("empty coset after {0} tries")]
    EmptyCoset(usize),
    #[error("alternating model acceptance failed after {tries} tries; increase the buffer (currently {buffer})")]
    AcceptanceFailure { tries: usize, buffer: u32 },
    #[error("outcome key spaces differ: {0}")]
    KeyMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
