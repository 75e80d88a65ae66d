use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HmmModel;
use crate::rng::gaussian;
use crate::stats::log_normal_pdf;
use crate::{Error, Result};

/// `K_0 ~ N(0, nu2)`, `K_n | k ~ N(phi k, nu2)`, `Y_n | k ~ N(k, tau2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianParams {
    pub phi: f64,
    pub nu2: f64,
    pub tau2: f64,
}

impl LinearGaussianParams {
    pub fn new(phi: f64, nu2: f64, tau2: f64) -> Result<Self> {
        let p = Self { phi, nu2, tau2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi must be finite, got {}", self.phi)));
        }
        if !(self.nu2 > 0.0 && self.nu2.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu2 must be positive, got {}", self.nu2)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau2 must be positive, got {}", self.tau2)));
        }
        Ok(())
    }
}

/// Mean coefficient and variance of `y_{n+lag}` given `k_n` when the latent
/// chain is AR(1) with coefficient `phi` and innovation variance `nu2`, and
/// the observation adds independent noise of variance `obs_var`.
///
/// Returns `(phi^lag, obs_var + nu2 * sum_{j<lag} phi^{2j})`.
pub fn lookahead_moments(phi: f64, nu2: f64, obs_var: f64, lag: usize) -> (f64, f64) {
    let mut coef = 1.0;
    let mut var = obs_var;
    for _ in 0..lag {
        var += nu2 * coef * coef;
        coef *= phi;
    }
    (coef, var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    params: LinearGaussianParams,
}

pub fn lg_model(params: LinearGaussianParams) -> Result<LinearGaussian> {
    params.validate()?;
    Ok(LinearGaussian { params })
}

impl LinearGaussian {
    pub fn params(&self) -> &LinearGaussianParams {
        &self.params
    }
}

impl HmmModel for LinearGaussian {
    type State = f64;
    type Obs = f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian(rng, 0.0, self.params.nu2)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, prev: &f64, rng: &mut R) -> f64 {
        gaussian(rng, self.params.phi * prev, self.params.nu2)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, state: &f64, rng: &mut R) -> f64 {
        gaussian(rng, *state, self.params.tau2)
    }

    fn observation_log_density(&self, y: &f64, state: &f64) -> Option<f64> {
        Some(log_normal_pdf(*y, *state, self.params.tau2))
    }

    fn lookahead_log_predictive(&self, y: &f64, state: &f64, lag: usize) -> Option<f64> {
        let p = &self.params;
        let (coef, var) = lookahead_moments(p.phi, p.nu2, p.tau2, lag);
        Some(log_normal_pdf(*y, coef * state, var))
    }
}

/// Kalman filter sufficient statistics: filtered mean and variance of the
/// current latent state plus the log marginal likelihood accumulated so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: f64,
    pub var: f64,
    pub log_marginal: f64,
}

impl KalmanState {
    /// Prior on `K_0`.
    pub fn initial(params: &LinearGaussianParams) -> Self {
        Self {
            mean: 0.0,
            var: params.nu2,
            log_marginal: 0.0,
        }
    }

    /// Predict one step and condition on `y`.
    pub fn step(&mut self, params: &LinearGaussianParams, y: f64) {
        let pred_mean = params.phi * self.mean;
        let pred_var = params.phi * params.phi * self.var + params.nu2;
        let innov_var = pred_var + params.tau2;
        self.log_marginal += log_normal_pdf(y, pred_mean, innov_var);
        let gain = pred_var / innov_var;
        self.mean = pred_mean + gain * (y - pred_mean);
        self.var = (1.0 - gain) * pred_var;
    }
}

/// Exact `log p(y_1..y_T)` for the linear Gaussian model.
pub fn kalman_log_marginal(params: &LinearGaussianParams, ys: &[f64]) -> f64 {
    let mut state = KalmanState::initial(params);
    for &y in ys {
        state.step(params, y);
    }
    state.log_marginal
}
