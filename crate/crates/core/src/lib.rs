//! Federated social event detection with dual aggregation.
//!
//! Clients hold private message graphs and train a graph-attention encoder
//! with a triplet objective. Each round the server groups clients by
//! minimizing the two-dimensional structural entropy of a model-similarity
//! graph and sends every client a softmax-weighted mix of its group's models
//! ([`sega`]). Clients blend that model with their own through a
//! Gaussian-process search over the mixing weight ([`bola`]) and then train
//! with an event-centroid alignment term toward the frozen global model
//! ([`local_opt`]). [`federation`] drives rounds for this protocol and for the
//! Local and FedAvg baselines; [`harness`] wires it to config files and CSV
//! reports.

pub mod attacks;
pub mod bola;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod federation;
pub mod harness;
pub mod local_opt;
pub mod metrics;
pub mod sega;

pub use error::{Error, ErrorKind, Result};
