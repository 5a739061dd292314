pub mod bn;
pub mod cli;
pub mod error;
pub mod learn;
pub mod learner;
pub mod refinement;
pub mod rng;
pub mod scenario;
pub mod scoring;
pub mod session;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
