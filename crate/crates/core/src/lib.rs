//! Alive particle filters for hidden Markov models with intractable
//! observation densities, their twisted (change-of-measure) variants, and
//! particle marginal Metropolis-Hastings built on top of them.
//!
//! Observations are compared with simulated pseudo-observations through an
//! ABC indicator kernel ([`abc`]). The alive filter ([`smc::alive_filter`])
//! keeps drawing particles until `N` of them hit the ABC ball, which gives
//! an unbiased estimate of the ABC normalising constant that never
//! collapses to zero. The twisted variant ([`twist::alive_twisted_filter`])
//! draws one particle per generation from a lookahead-reweighted proposal
//! and corrects the estimate by the matching Radon-Nikodym factor.

pub mod abc;
pub mod criteria;
pub mod error;
pub mod experiment;
pub mod models;
pub mod pmmh;
pub mod rng;
pub mod smc;
pub mod stats;
pub mod twist;

pub use error::{Error, Result};
