pub mod circuit;
pub mod cost;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod optimizer;
pub mod qubo;

pub use error::{Error, Result};
