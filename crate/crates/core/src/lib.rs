//! Modeling library for weak-coherent-pulse BB84 under a generalized
//! photon-number-splitting interceptor: closed-form detection statistics
//! (i.i.d. and after-pulse HMM), Monte Carlo simulators, Bayesian inference
//! over the interceptor parameters, and secure-key-rate estimates.

pub mod config;
pub mod detection;
pub mod error;
pub mod hmm;
pub mod inference;
pub mod keyrate;
pub mod params;
pub mod photonstats;
pub mod simulate;
pub mod special;

pub use error::{ModelError, Result};

/// Concrete f64 aliases for the generic numeric cores.
pub type ClickProb64 = photonstats::ClickProb<f64>;
pub type ClickGrad64 = photonstats::ClickGrad<f64>;
