//! Directed-graph state space model.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: directed graphs, batching, JSON-lines I/O and dataset statistics.
//! - [`algos`]: SCC decomposition, condensation depth, PageRank and k-hop
//!   predecessor extraction, plus the layered ego-sequence builder.
//! - [`ssm`]: diagonal state space parameters, zero-order-hold discretization and
//!   the per-hop kernel table.
//! - [`nn`]: a dense reverse-mode tensor engine with the operators the model needs,
//!   AdamW and a finite-difference gradient checker.
//! - [`model`]: encodings, the attention-selective SSM scan, fusion attention and
//!   the layer stack with task heads.
//! - [`preprocess`]: per-graph derived structure and its sidecar file format.

pub mod algos;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod ssm;

pub use error::{Error, Result};
