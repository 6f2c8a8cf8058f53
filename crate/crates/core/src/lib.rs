//! Average-reward deterministic policy gradient: environments, linear and
//! neural actor-critic learners, exact oracles and an experiment harness.

pub mod actor;
pub mod critic;
pub mod env;
pub mod error;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod neural;
pub mod oracles;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod runlog;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
