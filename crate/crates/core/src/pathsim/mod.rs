//! Exact trajectories of `ξ` and of its large-jump truncations, and the
//! path statistics built from them.

mod path;
mod rng;
mod sample;

pub use path::{GridPoint, JumpRecord, Path};
pub use rng::{Rng, RngStream};
pub use sample::{sample_path, sample_path_with, sample_truncated_with};
pub(crate) use sample::{exponential, open_unit, sample_capped, walk_to_passage};
