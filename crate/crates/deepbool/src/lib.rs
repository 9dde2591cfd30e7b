//! Dataset loaders, file formats, run configuration and the command line for
//! deep Boolean networks. The model, training and compiler live in
//! `deepbool-core`.

mod bytes;
pub mod cli;
pub mod config;
pub mod datasets;
mod error;
pub mod metrics;
pub mod model_io;
pub mod netlist_io;

pub use error::{Error, Result};
