//! Exact tabular maximum-entropy RL and inverse reward learning.
//!
//! The crate solves soft Bellman fixed points and occupancy measures exactly,
//! and on top of them implements four inverse-RL trainers: adversarial
//! MaxEnt-IRL, single-loop maximum-likelihood IRL, trust-region reward
//! optimization with a certified penalized surrogate, and its proximal
//! variant with an adaptive penalty. A set of numerical checkers verifies the
//! bounds that back the monotonic-improvement guarantee.

pub mod demos;
pub mod error;
pub mod experiment;
pub mod irl;
mod linalg;
pub mod mdp;
pub mod reward;
pub mod soft;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::TabularMdp;
pub use reward::{RewardKind, RewardParam};
pub use soft::{OccupancyMeasure, SoftSolution, SolverOptions};
