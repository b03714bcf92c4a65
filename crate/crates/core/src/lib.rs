//! Decoding, node detection and simulation for two-state hidden Markov
//! models.
//!
//! The crate provides batch and streaming MAP (Viterbi) decoding with a
//! canonical tie-break, classification of time steps into strong/weak
//! nodes, constructive barrier certificates, and a seeded Monte Carlo
//! harness that checks node and barrier properties empirically.

pub mod cli;
pub mod model;
pub mod nodes;
pub mod numeric;
pub mod rng;
pub mod sample;
pub mod simlab;
pub mod state;
pub mod stream;
pub mod viterbi;

pub use model::{CaseLabel, EmissionModel, Initial, ModelDocument, ModelError, Observation, TwoStateHmm};
pub use state::State;
