//! Data-oblivious algorithms in the binary fork-join model.

pub mod element;
pub mod error;
pub mod exec;
pub mod instrument;
pub mod primitives;
pub mod bitonic;
pub mod oblivious;
pub mod orba;
pub mod permute;
pub mod rsort;
pub mod apps;
pub mod check;
pub mod codec;

pub use element::{Bin, BinMatrix, Element, Kind, PipelineParams};
pub use error::{Error, Result};
pub use exec::{Backend, Counters, Ctx, Slab};
