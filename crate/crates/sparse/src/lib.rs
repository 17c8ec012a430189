//! File formats, checkpoints, parallel drivers and the command-line front end
//! for [`sparse_core`].

pub mod checkpoint;
pub mod commands;
mod error;
pub mod exec;
pub mod experiment;
pub mod fingerprint;
pub mod io;

pub use error::{Result, SparseError};
