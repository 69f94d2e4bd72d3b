pub mod cavity;
pub mod cli;
pub mod config;
pub mod disorder;
pub mod energy;
pub mod error;
pub mod groundstate;
pub mod lattice;
pub mod rng;
pub mod spinwave;
pub mod units;

pub use error::{Error, Result};
