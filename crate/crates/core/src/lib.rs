//! Rate-energy trade-off optimizers for pinching-antenna SWIPT downlinks.

pub mod allocation;
pub mod baselines;
pub mod chain_qp;
pub mod error;
pub mod fdma;
pub mod harness;
pub mod model;
pub mod noma;
pub mod pso;
pub mod single_pair;
pub mod system;
pub mod tdma;

pub use error::{Error, Result};
