pub mod error;
pub mod model;
pub mod cluster;
pub mod simkit;
pub mod factorize;
pub mod identify;
pub mod harness;
pub mod sentinel;
pub mod cli;

pub use error::{Error, Result};
