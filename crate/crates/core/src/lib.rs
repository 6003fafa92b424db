//! Connection management for simulated radio access networks, with an
//! adversarial-robustness toolkit around it.
//!
//! The crate simulates small cell/UE deployments, scores candidate
//! connection decisions with a graph neural network trained by deep
//! Q-learning, attacks the trained policy with projected-gradient evasion
//! attacks through three surfaces (model inputs, the RSRP matrix, and a
//! masked subset of UEs), and defends it with adversarial fine-tuning and a
//! hinge policy regularizer. An evaluation harness reproduces the
//! coverage/capacity degradation and recovery curves as CSV and SVG.

pub mod attack;
pub mod checkpoint;
pub mod defense;
pub mod error;
pub mod eval;
pub mod features;
pub mod gnn;
pub mod rl;
pub mod sim;
pub mod tape;

pub use error::{Error, Result};
