//! Two learning paradigms side by side: a dense feed-forward network trained
//! with SGD on a root-mean-square objective, and a Hopfield associative memory
//! trained with the Hebbian rule followed by iterative energy corrections.
//!
//! On top of both the crate provides the weight-space tooling used to compare
//! them: equioutput replicas of MLP weight vectors (hidden-unit sign flips and
//! permutations), partitions of small enumerable pattern spaces into
//! trained/generalized/adversarial/irrelevant sets, FGSM attacks transferred
//! from the MLP to the associative memory, and energy-landscape samples.

pub mod adversarial;
pub mod cli;
pub mod error;
pub mod hopfield;
pub mod landscape;
pub mod mlp;
pub mod patterns;
pub mod seed;
pub mod weightspace;

pub use error::{Error, Result};
