//! Synthetic tasks, training and evaluation loops, metrics, oracle suites
//! and timing benchmarks built on `dgssm-core`.

pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod synth;
pub mod train;

pub use error::{HarnessError, Result};
