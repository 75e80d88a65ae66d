use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stable::{StableParams, StableSampler};
use super::HmmModel;
use crate::rng::gaussian;
use crate::stats::log_normal_pdf;
use crate::{Error, Result};

/// `K_n | k ~ N(F k, nu2)`, `Y_n = exp(k_n / 2) * S(alpha, beta, gamma, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochVolParams {
    #[serde(rename = "F")]
    pub f: f64,
    pub nu2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StochVolParams {
    pub fn validate(&self) -> Result<()> {
        if !self.f.is_finite() {
            return Err(Error::InvalidParameter(format!("F must be finite, got {}", self.f)));
        }
        if !(self.nu2 > 0.0 && self.nu2.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu2 must be positive, got {}", self.nu2)));
        }
        self.stable().validate()
    }

    pub fn stable(&self) -> StableParams {
        StableParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochVol {
    params: StochVolParams,
    noise: StableSampler,
}

pub fn sv_model(params: StochVolParams) -> Result<StochVol> {
    params.validate()?;
    Ok(StochVol {
        params,
        noise: StableSampler::new(params.stable())?,
    })
}

impl StochVol {
    pub fn params(&self) -> &StochVolParams {
        &self.params
    }
}

impl HmmModel for StochVol {
    type State = f64;
    type Obs = f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian(rng, 0.0, self.params.nu2)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, prev: &f64, rng: &mut R) -> f64 {
        gaussian(rng, self.params.f * prev, self.params.nu2)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, state: &f64, rng: &mut R) -> f64 {
        (state / 2.0).exp() * self.noise.sample(rng)
    }

    /// Gaussian surrogate: the stable noise is replaced by its alpha = 2
    /// law and the latent state `lag` steps ahead by its mean `F^lag k`,
    /// giving `N(y; 0, 2 gamma^2 exp(F^lag k))`.
    fn lookahead_log_predictive(&self, y: &f64, state: &f64, lag: usize) -> Option<f64> {
        let p = &self.params;
        let var = 2.0 * p.gamma * p.gamma * (p.f.powi(lag as i32) * state).exp();
        Some(log_normal_pdf(*y, 0.0, var))
    }
}
