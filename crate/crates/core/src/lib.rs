//! Detection of item preknowledge from test data.
//!
//! The library fits a two-class item response model to a matrix of binary
//! responses (and, when available, log response times): each person either
//! answered honestly or had prior access to some items, and each item is
//! either secure or compromised. Persons with preknowledge get a success
//! boost (and a speed boost) on exactly the compromised items, which is what
//! makes the two labels jointly identifiable.
//!
//! Inference is by Metropolis-within-Gibbs MCMC over random-scan sweeps of
//! parameter blocks ([`sampler`]). Posterior probabilities of the person and
//! item labels are turned into flagging decisions with marginal error
//! control ([`decision`]), and fits are compared through deviance summaries
//! ([`diagnostics`]). The [`simulation`] module generates synthetic data with
//! known labels and scores the whole pipeline against that ground truth.

pub mod decision;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod simulation;

pub use error::{Error, Result};
