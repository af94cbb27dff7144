//! Time-symmetric operator-tensor circuits.
//!
//! Build typed circuits of operator tensors, evaluate them forwards or
//! backwards in time, check physicality, dilate to unitaries and run the
//! time-reversed experiment.

pub mod circuit;
pub mod classical;
pub mod cli;
pub mod dsl;
pub mod duotensor;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod optensor;
pub mod physicality;
pub mod samples;
pub mod types;

pub use error::{Error, Result};
