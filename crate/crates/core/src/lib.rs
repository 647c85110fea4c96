pub mod config;
pub mod error;
pub mod harness;
pub mod hermite;
pub mod ising;
pub mod multimode;
pub mod noise;
pub mod singlemode;
pub mod tensors;
pub mod trial;

pub use error::{CimError, Result};
