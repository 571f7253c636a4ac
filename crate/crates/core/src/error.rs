use thiserror::Error;

use crate::protocol::{PartyId, Symbol, Tape};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("tape {tape} of party {party} is outside its domain [0, {domain})")]
    TapeOutOfRange { party: PartyId, tape: Tape, domain: Tape },

    #[error(
        "enumeration of {size} tape pairs exceeds the budget of {budget}; \
         use sampled mode or raise FAIRFLIP_BUDGET"
    )]
    CapacityExceeded { size: u128, budget: u64 },

    #[error("transcript prefix {0:?} is not reachable")]
    UnreachablePrefix(Vec<Symbol>),

    #[error("prefix of length {len} is longer than the protocol's {rounds} rounds")]
    PrefixTooLong { len: usize, rounds: usize },

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid value {value}: expected {expected}")]
    Domain { value: String, expected: &'static str },
}
