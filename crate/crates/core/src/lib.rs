//! Average-reward decision models for an off-grid solar battery whose
//! transition graphs return through a single root state.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod measures;
pub mod model;
pub mod sim;
pub mod sparse;
pub mod solvers;
pub mod state;
pub mod structured;
pub mod synthetic;

pub use error::{Error, Result};
