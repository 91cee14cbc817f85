//! Entailment-tree construction and evaluation.
//!
//! The pipeline: train sentence embeddings with a translation-style geometry
//! ([`embed`]), train fact/step scoring heads on top ([`controller`]), build
//! trees by greedy or beam search over candidate steps ([`reasoner`]) with a
//! pluggable conclusion generator ([`generator`]), retrieve candidate facts
//! from an open corpus ([`retrieval`]), and score predictions against gold
//! trees ([`metrics`]). Dataset handling and orchestration live in [`data`].

pub mod controller;
pub mod data;
pub mod reasoner;
pub mod retrieval;
pub mod embed;
pub mod generator;
pub mod metrics;
pub mod tree;
pub mod util;
