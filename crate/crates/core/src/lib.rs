//! Block vertex components model for block-structured, edge-exchangeable
//! interaction networks.
//!
//! Networks are sequences of interactions, each with one sender and one or
//! more commentators. Nodes belong to blocks; blocks choose each other
//! through a propensity matrix and choose their vertices through a
//! Pitman-Yor urn, which yields sparse networks with power-law degrees.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod consistency;
pub mod error;
pub mod generator;
pub mod gibbs;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod network;
pub mod numeric;
pub mod params;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use network::{BlockAssignment, Interaction, InteractionNetwork, NodeIndex};
pub use params::{ModelParams, Propensity};
