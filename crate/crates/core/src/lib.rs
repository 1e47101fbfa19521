//! Seedable grid-world laboratory for asocial and social tabular
//! reinforcement learners.

pub mod config;
pub mod dp;
pub mod error;
pub mod experiments;
pub mod gridworld;
pub mod metrics;
pub mod optimizer;
pub mod registry;
pub mod rl;
pub mod rng;
pub mod social;

pub use error::{Error, Result};
