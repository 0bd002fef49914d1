//! Wang-Landau sampling with deterministic step sizes, and the exit-time
//! experiments built on it: a three-state metastable chain with exact
//! oracles, a two-dimensional double well, a replica harness and scaling fits.

pub mod error;
pub mod exitlab;
pub mod landscape;
pub mod rng;
pub mod scalefit;
pub mod schedule;
pub mod stats;
pub mod toy;
pub mod wl;

pub use error::{Error, Result};
pub use schedule::StepSchedule;
pub use wl::{LogWeightVector, UpdateRule, WeightVector};
