//! Decentralized stochastic optimization over noisy links.
//!
//! The crate simulates gradient tracking with a noise-attenuation parameter
//! (IC-GT) alongside the usual decentralized baselines, and ships executable
//! checks of the consensus-error analysis behind it:
//!
//! - [`graph`]: topologies, Metropolis mixing matrices and their spectra.
//! - [`channel`]: exact, AWGN and probabilistic-quantization links.
//! - [`objective`]: local objectives, gradient oracles and a reference solver.
//! - [`dataset`]: MNIST IDX ingestion, synthetic data and sharding.
//! - [`algorithm`]: IC-GT, its baselines and the parameter calculators.
//! - [`theory`]: numerical verification of the contraction and recursion facts.
//! - [`harness`]: configuration, experiment runs, sweeps and CSV output.
//!
//! Every random draw comes from a counter-based substream keyed by
//! `(seed, tag, node, iteration, ...)`, so results do not depend on the order
//! in which nodes are processed or on the number of worker threads.

pub mod algorithm;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod harness;
pub mod objective;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
