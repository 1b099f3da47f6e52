//! Transport-noise SPDEs on the 2-torus: scaling limits, large deviations and
//! central-limit fluctuations, simulated pseudo-spectrally.

pub mod checks;
pub mod cli;
pub mod cltstats;
pub mod detpde;
pub mod error;
pub mod estimates;
pub mod ldp;
pub mod noise;
pub mod rng;
pub mod spde;
pub mod spectral;

pub use error::{Error, Result};
