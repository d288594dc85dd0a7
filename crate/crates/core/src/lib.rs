//! Capacity bounds for the binary energy-harvesting channel.

pub mod capacity;
pub mod cli;
pub mod error;
pub mod export;
pub mod ldl;
pub mod markov;
pub mod model;
pub mod noisy;
pub mod oracle;
pub mod program;
pub mod qgraph;
pub mod solver;
pub mod verify;

pub use error::{BehcError, Result};
