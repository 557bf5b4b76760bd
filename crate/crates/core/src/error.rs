use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{what} must be a power of two, got {value}")]
    NotPowerOfTwo { what: &'static str, value: usize },

    #[error("array of length {len} exceeds the supported maximum {max}")]
    TooLarge { len: usize, max: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A butterfly layer produced a bin with more than `Z` real elements.
    #[error("bin {bin} overflowed at layer {layer}")]
    Overflow { layer: usize, bin: usize },

    /// Bin placement was handed more than `Z` reals for one group.
    #[error("group {group} received more than {capacity} real elements")]
    GroupOverflow { group: usize, capacity: usize },

    #[error("duplicate source key {0} in send-receive")]
    DuplicateKey(u64),

    #[error("retry budget exhausted after {attempts} attempts")]
    RetriesExhausted { attempts: u32 },

    #[error("address {addr} out of range for memory of size {size}")]
    AddressOutOfRange { addr: u64, size: usize },

    #[error("instrumentation fault: {0}")]
    Instrument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
