//! Monte Carlo for heavy-tailed Lévy processes with negative drift.
//!
//! The crate samples exact trajectories of a Lévy process whose upward jumps
//! have a regularly varying tail, computes exponential functionals along
//! them, and estimates rare-event quantities (positivity, survival above
//! zero, Laplace transforms on those events) by stratifying over the exact
//! Poisson law of the number of large jumps. Survival probabilities of
//! continuous-state branching processes in a Lévy environment are computed
//! from the same machinery.

pub mod cbre;
pub mod error;
pub mod fluctuation;
pub mod functional;
pub mod mc;
pub mod model;
pub mod pathsim;
mod quad;
pub mod rarevent;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use mc::{McConfig, McEstimate};
pub use model::{FSpec, LevyModel, TailSpec};
pub use pathsim::{Path, RngStream};
