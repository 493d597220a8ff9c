//! Stable online learning on dependent (mixing) data streams.
//!
//! The crate has three layers. [`process`] generates samples from finite
//! Markov chains and computes their mixing coefficients exactly. [`loss`]
//! and [`learner`] implement the loss families and online algorithms.
//! [`bounds`] and [`evaluate`] turn a run into generalization guarantees
//! and check them against exact risks.

pub mod bounds;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod learner;
pub mod linalg;
pub mod loss;
pub mod parallel;
pub mod process;
pub mod verify;

pub use error::{Error, Result};
