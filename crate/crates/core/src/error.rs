use alloc::string::String;

use crate::state::Reg;

/// Errors raised by the simulator itself, as opposed to protocol verdicts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("invalid permutation")]
    InvalidPermutation,
    #[error("width mismatch: expected {expected} bits, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("unknown register {0:?}")]
    UnknownRegister(Reg),
    #[error("register {0:?} already exists")]
    DuplicateRegister(Reg),
    #[error("entangled discard of register {0:?}")]
    EntangledDiscard(Reg),
    #[error("a key pair needs two different keys")]
    EqualKeys,
    #[error("could not sample distinct keys of width {width}")]
    KeySampling { width: usize },
    #[error("undecryptable branch")]
    Undecryptable,
    #[error("tag mismatch")]
    TagMismatch,
    #[error("query budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("Hadamard measurement over a span of rank {0} is too large")]
    RankTooLarge(usize),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("configuration error: {0}")]
    Config(String),
}
