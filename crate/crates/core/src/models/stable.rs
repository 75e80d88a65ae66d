//! Stable laws `S(alpha, beta, gamma, delta)` sampled with the
//! Chambers-Mallows-Stuck transformation.
//!
//! Parameterisation: `delta` is the mean whenever `alpha > 1`, and
//! `S(2, beta, gamma, delta)` is `N(delta, 2 gamma^2)`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "stable alpha must lie in (0, 2], got {}",
                self.alpha
            )));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "stable beta must lie in [-1, 1], got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stable gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stable delta must be finite, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Pre-computed constants for repeated draws from one stable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableSampler {
    params: StableParams,
    // alpha != 1 shift and scale of the CMS angle
    b: f64,
    s: f64,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Result<Self> {
        params.validate()?;
        let (b, s) = if params.alpha == 1.0 {
            (0.0, 1.0)
        } else {
            let zeta = params.beta * (PI * params.alpha / 2.0).tan();
            (zeta.atan() / params.alpha, (1.0 + zeta * zeta).powf(0.5 / params.alpha))
        };
        Ok(Self { params, b, s })
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let StableParams {
            alpha,
            beta,
            gamma,
            delta,
        } = self.params;
        // V uniform on (-pi/2, pi/2), W standard exponential
        let v = PI * (open_unit(rng) - 0.5);
        let w: f64 = Exp1.sample(rng);
        if alpha == 1.0 {
            let pb = FRAC_PI_2 + beta * v;
            let x = (pb * v.tan() - beta * (FRAC_PI_2 * w * v.cos() / pb).ln()) / FRAC_PI_2;
            gamma * x + delta + beta * gamma * gamma.ln() / FRAC_PI_2
        } else {
            let a = alpha * (v + self.b);
            let x = self.s * a.sin() / v.cos().powf(1.0 / alpha)
                * ((v - a).cos() / w).powf((1.0 - alpha) / alpha);
            gamma * x + delta
        }
    }
}

impl Distribution<f64> for StableSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StableSampler::sample(self, rng)
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw from `S(alpha, beta, gamma, delta)`.
pub fn stable_sample<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<f64> {
    let sampler = StableSampler::new(StableParams {
        alpha,
        beta,
        gamma,
        delta,
    })?;
    Ok(sampler.sample(rng))
}
