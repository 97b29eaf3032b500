//! Equalization laboratory for simulated optical links.

pub mod channel;
pub mod checkpoint;
pub mod classic;
pub mod constellation;
pub mod dataset;
pub mod error;
pub mod explore;
pub mod nn;
pub mod optim;
pub mod registry;
pub mod signal;
pub mod snn;
pub mod vae;

pub use error::{Error, Result};
