//! Genetic-drift laboratory for univariate estimation-of-distribution
//! algorithms (EDAs).
//!
//! The crate models the family of n-Bernoulli-lambda-EDAs (PBIL, UMDA,
//! lambda-MMAS, cGA, cross-entropy) together with the reduced stochastic
//! processes that a neutral bit's sampling frequency follows.  On top of the
//! simulators it provides an exact absorbing-Markov-chain oracle, closed-form
//! conditional moments, stochastic-dominance checks, and an experiment
//! harness for hitting-time campaigns, scaling-law fits, concentration-bound
//! validation, and population-size advice.
//!
//! All randomness flows through counter-addressable seeded streams
//! ([`stream::replica_stream`]), so every campaign is reproducible bit for
//! bit regardless of thread count.

pub mod dominance;
pub mod eda;
pub mod error;
pub mod lab;
pub mod markov;
pub mod moments;
pub mod neutral;
pub mod stats;
pub mod stopping;
pub mod stream;

pub use error::{Error, Result};
