//! Frequency-domain seismic wavefield surrogates.

pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod fdtd;
pub mod freq;
pub mod helmholtz;
pub mod io;
pub mod nn;
pub mod rng;
pub mod train;
pub mod velocity;

pub use error::{Error, Result};
