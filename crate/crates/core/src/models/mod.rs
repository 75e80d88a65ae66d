//! State-space models and the exact oracles used to validate the filters.

mod discrete;
mod linear_gaussian;
mod stable;
mod stoch_vol;

pub use discrete::{discrete_abc_log_marginal, enumerate_abc_log_marginal, DiscreteHmm, DiscreteHmmParams, SymbolBall};
pub use linear_gaussian::{kalman_log_marginal, lg_model, lookahead_moments, KalmanState, LinearGaussian, LinearGaussianParams};
pub use stable::{stable_sample, StableParams, StableSampler};
pub use stoch_vol::{sv_model, StochVol, StochVolParams};

use rand::Rng;
use std::fmt::Debug;

/// A hidden Markov model given through its samplers.
///
/// `sample_initial` draws `K_0`; the first filtered latent state is
/// `K_1 ~ f(. | K_0)`. Densities are optional because the whole point of
/// the alive filters is to work without them.
pub trait HmmModel: Send + Sync {
    type State: Copy + Debug + Send + Sync;
    type Obs: Copy + Debug + Send + Sync;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn sample_transition<R: Rng + ?Sized>(&self, prev: &Self::State, rng: &mut R) -> Self::State;

    fn sample_observation<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::Obs;

    /// `log g(y | k)` when the observation density can be evaluated.
    fn observation_log_density(&self, _y: &Self::Obs, _state: &Self::State) -> Option<f64> {
        None
    }

    /// `log p(y_{n+lag} = y | k_n = state)` when available in closed form.
    fn lookahead_log_predictive(&self, _y: &Self::Obs, _state: &Self::State, _lag: usize) -> Option<f64> {
        None
    }
}

/// A forward simulation: latent path `k_1..k_T` and observations `y_1..y_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<S, O> {
    pub latent: Vec<S>,
    pub observations: Vec<O>,
}

pub fn simulate<M: HmmModel, R: Rng + ?Sized>(
    model: &M,
    steps: usize,
    rng: &mut R,
) -> Simulation<M::State, M::Obs> {
    assert!(steps >= 1, "simulate needs at least one step");
    let mut latent = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    let mut k = model.sample_initial(rng);
    for _ in 0..steps {
        k = model.sample_transition(&k, rng);
        observations.push(model.sample_observation(&k, rng));
        latent.push(k);
    }
    Simulation {
        latent,
        observations,
    }
}
