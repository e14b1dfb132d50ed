//! Clustering general data with an adaptively learned sparse graph and a
//! graph auto-encoder.
//!
//! The pipeline alternates two steps. A sparse, weighted graph is solved in
//! closed form from pairwise distances ([`graph_kernel`]); a graph
//! convolutional auto-encoder is then trained to reconstruct that graph's
//! connectivity distribution from a distance-softmax decoder ([`gae`]). The
//! graph is rebuilt from the learned embedding with a growing neighbour count
//! ([`trainer`]), and final labels come from spectral clustering or k-means
//! ([`clustering`]). [`analysis`] holds numerical checks of the method's
//! sparsity, degeneration, entropy and spectrum properties.

pub mod analysis;
pub mod clustering;
pub mod config;
pub mod error;
pub mod gae;
pub mod graph_kernel;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod sparse;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
