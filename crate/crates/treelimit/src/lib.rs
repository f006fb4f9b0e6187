//! Growing binary trees on bit-words and their subtree-size limit laws.
//!
//! A tree here is a prefix-stable set of finite `{0,1}`-words. Three growth
//! dynamics are provided (digital routing driven by a dyadic measure, rank
//! insertion, and a nested uniform chain), together with the dyadic measures
//! on infinite bit-sequences that arise as their limits, local increment
//! processes, and Monte Carlo machinery that checks first- and second-order
//! convergence against closed-form targets.
//!
//! The crate is deterministic end to end: every randomized routine takes an
//! explicit seed or rng, replicate seeds are derived by a fixed avalanche
//! function, and parallel runs aggregate in replicate order, so results do
//! not depend on worker count.

pub mod clt;
pub mod error;
pub mod growth;
pub mod increments;
pub mod measure;
pub mod report;
pub mod seed;
pub mod stats;
pub mod tree;
pub mod word;

pub use error::Error;
pub use measure::Measure;
pub use tree::BinaryTree;
pub use word::Word;

/// Shorthand result type used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
