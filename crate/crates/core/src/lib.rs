//! Adaptive multi-objective fuzzing scheduler.
//!
//! A bandit picks which objectives (execution speed, stack depth,
//! satisfied comparison bytes) to pursue each round, a power schedule sizes
//! each seed's mutation budget from those objectives, and an in-loop
//! NSGA-II pass pushes the shared corpus toward the Pareto front.

pub mod cli;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod mpmab;
pub mod mutation;
pub mod nic;
pub mod objectives;
pub mod oracle;
pub mod power;
pub mod report;
pub mod simtarget;

pub use error::{Error, Result};
