//! Twist functions and the twisted filters.
//!
//! A twist `h_t` reweights the proposal of one particle per generation:
//! its ancestor is drawn proportionally to `W Q(h_t)` and its state from the
//! `h_t`-twisted transition `f h_t / Q(h_t)`. Every estimate is corrected by
//! the likelihood ratio of the resulting particle system against the
//! untwisted one, so it stays unbiased for any positive `h`.
//!
//! Steps are zero-based: step `t` filters observation `ys[t]`, and `h_t`
//! is evaluated at the latent state drawn at that step.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussHermite;
use lambert_w::lambert_w0;
use rand::Rng;
use serde::Serialize;

use crate::abc::Acceptance;
use crate::models::{DiscreteHmmParams, HmmModel, LinearGaussianParams, StochVolParams};
use crate::rng::{categorical, categorical_log, gaussian, uniform_int, CategoricalTable};
use crate::smc::{
    check_data, check_n, draw_until, observation_log_weights, AliveRun, BootstrapRun, NormConstEstimate,
    ParticleGeneration, TwistStats, WeightedGeneration,
};
use crate::stats::{log_normal_pdf, log_sum_exp};
use crate::{Error, Result};

/// A sequence of twist functions `h_t`, already bound to the data.
pub trait Twist<S>: Send + Sync {
    /// `log h_t(k)`.
    fn log_h(&self, step: usize, k: &S) -> f64;

    /// `log Q(h_t)(k_prev) = log int f(k | k_prev) h_t(k) dk`.
    fn log_qh(&self, step: usize, prev: &S) -> f64;

    /// Draw from `f(. | prev) h_t(.) / Q(h_t)(prev)`.
    fn sample_twisted<R: Rng + ?Sized>(&self, step: usize, prev: &S, rng: &mut R) -> S;

    /// `log int mu(k_0) Q(h_0)(k_0) dk_0` where `mu` is the law of `K_0`.
    fn log_initial_qh(&self) -> f64;

    /// Draw `k_0` from `mu Q(h_0) / mu(Q(h_0))`.
    fn sample_twisted_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> S;
}

/// Twist values stay in log space, so far tails need no floor; only NaN
/// and `+inf` are rejected. An individual `-inf` is a genuine zero.
fn checked(step: usize, what: &'static str, v: f64) -> Result<f64> {
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::DegenerateTwist { step, what });
    }
    Ok(v)
}

/// A sum of twist values that vanished entirely leaves the factor undefined.
fn nonzero_sum(step: usize, what: &'static str, log_values: &[f64]) -> Result<f64> {
    let total = log_sum_exp(log_values);
    if total == f64::NEG_INFINITY {
        return Err(Error::DegenerateTwist { step, what });
    }
    Ok(total)
}

/// `h = 1`. The twisted filters then sample exactly like their untwisted
/// counterparts.
#[derive(Debug, Clone)]
pub struct ConstantTwist<M> {
    model: M,
}

impl<M> ConstantTwist<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

impl<M: HmmModel> Twist<M::State> for ConstantTwist<M> {
    fn log_h(&self, _: usize, _: &M::State) -> f64 {
        0.0
    }

    fn log_qh(&self, _: usize, _: &M::State) -> f64 {
        0.0
    }

    fn sample_twisted<R: Rng + ?Sized>(&self, _: usize, prev: &M::State, rng: &mut R) -> M::State {
        self.model.sample_transition(prev, rng)
    }

    fn log_initial_qh(&self) -> f64 {
        0.0
    }

    fn sample_twisted_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> M::State {
        self.model.sample_initial(rng)
    }
}

/// Tabulated twist for the finite-state model: `h_t(s) = table[t][s]`.
#[derive(Debug, Clone)]
pub struct TableTwist {
    params: DiscreteHmmParams,
    log_table: Vec<Vec<f64>>,
}

impl TableTwist {
    pub fn new(params: DiscreteHmmParams, table: Vec<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        let s = params.num_states();
        if table.iter().any(|row| row.len() != s || row.iter().any(|&h| !(h > 0.0 && h.is_finite()))) {
            return Err(Error::InvalidParameter("twist table must be positive with one entry per state".into()));
        }
        let log_table = table.iter().map(|row| row.iter().map(|h| h.ln()).collect()).collect();
        Ok(Self { params, log_table })
    }

    /// `h_t(s) = P(U_t accepted | K_t = s) P(later observations accepted | K_t = s)`,
    /// floored at `floor`. This is the twist that makes every step's
    /// estimate exact for the single twisted particle.
    pub fn oracle(params: DiscreteHmmParams, ys: &[usize], floor: f64) -> Result<Self> {
        let beta = params.backward_acceptance(ys);
        let table = ys
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                (0..params.num_states())
                    .map(|s| (params.acceptance_prob(s, y) * beta[t][s]).max(floor))
                    .collect()
            })
            .collect();
        Self::new(params, table)
    }

    fn twisted_row(&self, step: usize, prev: usize) -> Vec<f64> {
        self.params.transition[prev]
            .iter()
            .zip(&self.log_table[step])
            .map(|(p, lh)| p * lh.exp())
            .collect()
    }

    fn initial_weights(&self) -> Vec<f64> {
        self.params
            .initial
            .iter()
            .enumerate()
            .map(|(s, p)| p * self.log_qh(0, &s).exp())
            .collect()
    }
}

impl Twist<usize> for TableTwist {
    fn log_h(&self, step: usize, k: &usize) -> f64 {
        self.log_table[step][*k]
    }

    fn log_qh(&self, step: usize, prev: &usize) -> f64 {
        self.twisted_row(step, *prev).iter().sum::<f64>().ln()
    }

    fn sample_twisted<R: Rng + ?Sized>(&self, step: usize, prev: &usize, rng: &mut R) -> usize {
        categorical(rng, &self.twisted_row(step, *prev)).expect("transition row has positive mass")
    }

    fn log_initial_qh(&self) -> f64 {
        self.initial_weights().iter().sum::<f64>().ln()
    }

    fn sample_twisted_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        categorical(rng, &self.initial_weights()).expect("initial law has positive mass")
    }
}

/// Gaussian lookahead for an AR(1) latent chain
/// `K_0 ~ N(0, nu2)`, `K_n | k ~ N(phi k, nu2)` observed with additive
/// noise of variance `obs_var`:
/// `h(k) = N(y; phi^lag k, obs_var + nu2 sum_{j<lag} phi^{2j})`,
/// the density of the observation `lag` steps ahead. `lag = 0` means `h = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LookaheadKernel {
    pub phi: f64,
    pub nu2: f64,
    pub obs_var: f64,
}

impl LookaheadKernel {
    fn moments(&self, lag: usize) -> (f64, f64) {
        crate::models::lookahead_moments(self.phi, self.nu2, self.obs_var, lag)
    }

    pub fn log_h(&self, y: f64, k: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        let (a, v) = self.moments(lag);
        log_normal_pdf(y, a * k, v)
    }

    pub fn log_qh(&self, y: f64, prev: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        let (a, v) = self.moments(lag + 1);
        log_normal_pdf(y, a * prev, v)
    }

    /// Product of the prior `N(prior_mean, prior_var)` on `k` with the
    /// likelihood `N(y; a k, v)`, normalised.
    fn conjugate<R: Rng + ?Sized>(prior_mean: f64, prior_var: f64, y: f64, a: f64, v: f64, rng: &mut R) -> f64 {
        let precision = 1.0 / prior_var + a * a / v;
        let mean = (prior_mean / prior_var + a * y / v) / precision;
        gaussian(rng, mean, 1.0 / precision)
    }

    pub fn sample_twisted<R: Rng + ?Sized>(&self, y: f64, prev: f64, lag: usize, rng: &mut R) -> f64 {
        if lag == 0 {
            return gaussian(rng, self.phi * prev, self.nu2);
        }
        let (a, v) = self.moments(lag);
        Self::conjugate(self.phi * prev, self.nu2, y, a, v, rng)
    }

    pub fn log_initial_qh(&self, y: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        let (a, v) = self.moments(lag + 1);
        log_normal_pdf(y, 0.0, v + a * a * self.nu2)
    }

    pub fn sample_twisted_initial<R: Rng + ?Sized>(&self, y: f64, lag: usize, rng: &mut R) -> f64 {
        if lag == 0 {
            return gaussian(rng, 0.0, self.nu2);
        }
        let (a, v) = self.moments(lag + 1);
        Self::conjugate(0.0, self.nu2, y, a, v, rng)
    }
}

/// The observation law behind a lookahead twist: `log h` for observation
/// `y` at `lag` steps ahead, plus the integrals and draws the twisted
/// filters need. `lag = 0` always means `h = 1`.
pub trait LookaheadLaw: Send + Sync {
    fn log_h(&self, y: f64, k: f64, lag: usize) -> f64;
    fn log_qh(&self, y: f64, prev: f64, lag: usize) -> f64;
    fn sample_twisted<R: Rng + ?Sized>(&self, y: f64, prev: f64, lag: usize, rng: &mut R) -> f64;
    fn log_initial_qh(&self, y: f64, lag: usize) -> f64;
    fn sample_twisted_initial<R: Rng + ?Sized>(&self, y: f64, lag: usize, rng: &mut R) -> f64;
}

impl LookaheadLaw for LookaheadKernel {
    fn log_h(&self, y: f64, k: f64, lag: usize) -> f64 {
        LookaheadKernel::log_h(self, y, k, lag)
    }

    fn log_qh(&self, y: f64, prev: f64, lag: usize) -> f64 {
        LookaheadKernel::log_qh(self, y, prev, lag)
    }

    fn sample_twisted<R: Rng + ?Sized>(&self, y: f64, prev: f64, lag: usize, rng: &mut R) -> f64 {
        LookaheadKernel::sample_twisted(self, y, prev, lag, rng)
    }

    fn log_initial_qh(&self, y: f64, lag: usize) -> f64 {
        LookaheadKernel::log_initial_qh(self, y, lag)
    }

    fn sample_twisted_initial<R: Rng + ?Sized>(&self, y: f64, lag: usize, rng: &mut R) -> f64 {
        LookaheadKernel::sample_twisted_initial(self, y, lag, rng)
    }
}

const HERMITE_NODES: usize = 20;

fn hermite() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(NonZeroUsize::new(HERMITE_NODES).unwrap()))
}

/// `log h(k) = c - a k / 2 - b exp(-a k)`: the log density of
/// `y ~ N(0, s exp(a k))` with `b = y^2 / (2 s)`, stored as `log_b` so
/// `b exp(-a k)` does not overflow for tiny `b`.
#[derive(Debug, Clone, Copy)]
struct VolTilt {
    a: f64,
    log_b: f64,
    c: f64,
}

impl VolTilt {
    fn log_h(&self, k: f64) -> f64 {
        self.c - 0.5 * self.a * k - (self.log_b - self.a * k).exp()
    }

    /// `log N(k; m, v) + log h(k)` up to a constant, its derivative and
    /// second derivative.
    fn log_target(&self, m: f64, v: f64, k: f64) -> (f64, f64, f64) {
        let e = (self.log_b - self.a * k).exp();
        (
            -0.5 * (k - m) * (k - m) / v + self.c - 0.5 * self.a * k - e,
            -(k - m) / v - 0.5 * self.a + self.a * e,
            -1.0 / v - self.a * self.a * e,
        )
    }

    /// Root of a decreasing function given a bracket `f(lo) > 0 > f(hi)`,
    /// by Newton steps that fall back to bisection.
    fn decreasing_root(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
        let mut k = 0.5 * (lo + hi);
        for _ in 0..400 {
            let (val, deriv) = f(k);
            if val == 0.0 {
                return k;
            }
            if val > 0.0 {
                lo = k;
            } else {
                hi = k;
            }
            let newton = k - val / deriv;
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - k).abs() <= 1e-14 * (1.0 + k.abs()) || hi - lo <= 1e-14 * (1.0 + k.abs()) {
                return next;
            }
            k = next;
        }
        k
    }

    /// Step away from `start` by doubling `step` until `f` changes sign.
    fn bracket(f: impl Fn(f64) -> f64, start: f64, step: f64) -> f64 {
        let mut s = step;
        let mut x = start + s;
        while f(x) * step > 0.0 {
            s *= 2.0;
            x = start + s;
        }
        x
    }

    /// Maximiser of `N(k; m, v) h(k)`. Setting the derivative to zero gives
    /// `a z e^{a z} = a^2 b v e^{-a c0}` for `k = c0 + z`, `c0 = m - a v / 2`,
    /// so `a z` is the principal branch of Lambert W. Needs `a != 0`, `b > 0`.
    fn mode(&self, m: f64, v: f64) -> f64 {
        let c0 = m - 0.5 * self.a * v;
        let log_arg = 2.0 * self.a.abs().ln() + self.log_b + v.ln() - self.a * c0;
        let w = if log_arg < 700.0 {
            lambert_w0(log_arg.exp())
        } else {
            // W(e^L) solves w + ln w = L
            let mut w = log_arg - log_arg.ln();
            for _ in 0..6 {
                w -= (w + w.ln() - log_arg) / (1.0 + 1.0 / w);
            }
            w
        };
        let k = c0 + w / self.a;
        let (_, g1, g2) = self.log_target(m, v, k);
        k - g1 / g2
    }

    /// The log target around its mode: `g(mode)`, `g''(mode)` and
    /// `delta -> g(mode + delta) - g(mode)`, expanded so that no large
    /// terms cancel.
    fn centred(&self, m: f64, v: f64) -> (f64, f64, impl Fn(f64) -> f64 + '_) {
        let mode = self.mode(m, v);
        let (top, slope, curv) = self.log_target(m, v, mode);
        let e = (self.log_b - self.a * mode).exp();
        let a = self.a;
        let shift = move |d: f64| slope * d - 0.5 * d * d / v - e * ((-a * d).exp_m1() + a * d);
        (top, curv, shift)
    }

    /// `log int N(k; m, v) h(k) dk` by Gauss-Hermite quadrature around the
    /// mode of the integrand.
    fn log_mass(&self, m: f64, v: f64) -> f64 {
        if self.a == 0.0 {
            return self.c - self.log_b.exp();
        }
        if self.log_b == f64::NEG_INFINITY {
            return self.c - 0.5 * self.a * m + self.a * self.a * v / 8.0;
        }
        let (top, curv, shift) = self.centred(m, v);
        let scale = (-2.0 / curv).sqrt();
        let sum = hermite().integrate(|x| (shift(scale * x) + x * x).exp());
        top + sum.ln() + scale.ln() - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
    }

    /// Exact draw from `N(m, v) h / mass`. The log target is concave: with
    /// `lo < mode < hi` where it has dropped by one, it is bounded by its
    /// maximum in between and by its tangents at `lo`, `hi` outside.
    fn sample<R: Rng + ?Sized>(&self, m: f64, v: f64, rng: &mut R) -> f64 {
        if self.a == 0.0 {
            return gaussian(rng, m, v);
        }
        if self.log_b == f64::NEG_INFINITY {
            return gaussian(rng, m - 0.5 * self.a * v, v);
        }
        let mode = self.mode(m, v);
        let (_, curv, shift) = self.centred(m, v);
        let (slope0, e, a) = (self.log_target(m, v, mode).1, (self.log_b - self.a * mode).exp(), self.a);
        let shift_d = |d: f64| slope0 - d / v + a * e * ((-a * d).exp() - 1.0);
        let scale = (-1.0 / curv).sqrt();
        let edge = |dir: f64| {
            let far = Self::bracket(|d| dir * (shift(d) + 1.0), 0.0, dir * scale);
            let (lo, hi) = if dir < 0.0 { (far, 0.0) } else { (0.0, far) };
            Self::decreasing_root(|d| (dir * (shift(d) + 1.0), dir * shift_d(d)), lo, hi)
        };
        let (d_lo, d_hi) = (edge(-1.0), edge(1.0));
        let (s_lo, s_hi) = (shift_d(d_lo), shift_d(d_hi));
        let (e_lo, e_hi) = (shift(d_lo), shift(d_hi));
        let w_mid = d_hi - d_lo;
        let w_lo = e_lo.exp() / s_lo;
        let w_hi = e_hi.exp() / -s_hi;
        let total = w_mid + w_lo + w_hi;
        loop {
            let pick: f64 = rng.random::<f64>() * total;
            let u: f64 = 1.0 - rng.random::<f64>();
            let (d, env) = if pick < w_mid {
                (d_lo + pick, 0.0)
            } else if pick < w_mid + w_lo {
                let d = d_lo + u.ln() / s_lo;
                (d, e_lo + s_lo * (d - d_lo))
            } else {
                let d = d_hi + u.ln() / s_hi;
                (d, e_hi + s_hi * (d - d_hi))
            };
            let w: f64 = rng.random();
            if w.ln() < shift(d) - env {
                return mode + d;
            }
        }
    }
}

/// Lookahead for the stochastic-volatility chain `K_n | k ~ N(f k, nu2)`
/// under a Gaussian observation law: `Y | k ~ N(0, obs_scale exp(k))` with
/// `obs_scale = 2 gamma^2`, the alpha = 2 variance. The latent state `lag`
/// steps ahead is replaced by its propagated mean `f^lag k`, so
/// `h(k) = N(y; 0, obs_scale exp(f^lag k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolatilityKernel {
    pub f: f64,
    pub nu2: f64,
    pub obs_scale: f64,
}

impl VolatilityKernel {
    fn tilt(&self, y: f64, lag: usize) -> VolTilt {
        VolTilt {
            a: self.f.powi(lag as i32),
            log_b: 2.0 * y.abs().ln() - (2.0 * self.obs_scale).ln(),
            c: -0.5 * (2.0 * std::f64::consts::PI * self.obs_scale).ln(),
        }
    }
}

impl LookaheadLaw for VolatilityKernel {
    fn log_h(&self, y: f64, k: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        self.tilt(y, lag).log_h(k)
    }

    fn log_qh(&self, y: f64, prev: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        self.tilt(y, lag).log_mass(self.f * prev, self.nu2)
    }

    fn sample_twisted<R: Rng + ?Sized>(&self, y: f64, prev: f64, lag: usize, rng: &mut R) -> f64 {
        if lag == 0 {
            return gaussian(rng, self.f * prev, self.nu2);
        }
        self.tilt(y, lag).sample(self.f * prev, self.nu2, rng)
    }

    fn log_initial_qh(&self, y: f64, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        let f2 = self.f * self.f;
        self.tilt(y, lag).log_mass(0.0, self.nu2 * (1.0 + f2))
    }

    /// Draws `k_1` from its twisted marginal, then `k_0 | k_1`.
    fn sample_twisted_initial<R: Rng + ?Sized>(&self, y: f64, lag: usize, rng: &mut R) -> f64 {
        if lag == 0 {
            return gaussian(rng, 0.0, self.nu2);
        }
        let f2 = self.f * self.f;
        let k1 = self.tilt(y, lag).sample(0.0, self.nu2 * (1.0 + f2), rng);
        gaussian(rng, self.f * k1 / (1.0 + f2), self.nu2 / (1.0 + f2))
    }
}

/// A [`LookaheadLaw`] bound to an observation sequence. At step `t` the
/// effective lag is `min(lag, T - 1 - t)`, so the last step is untwisted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LookaheadTwist<K = LookaheadKernel> {
    pub kernel: K,
    pub lag: usize,
    /// Description of the Gaussian surrogate when the model's own
    /// observation law is not Gaussian.
    pub surrogate: Option<String>,
    #[serde(skip)]
    ys: Vec<f64>,
}

impl<K> LookaheadTwist<K> {
    fn bind(kernel: K, lag: usize, ys: &[f64]) -> Result<Self> {
        if lag == 0 {
            return Err(Error::InvalidParameter("lag must be at least 1".into()));
        }
        Ok(Self {
            kernel,
            lag,
            surrogate: None,
            ys: ys.to_vec(),
        })
    }

    pub fn effective_lag(&self, step: usize) -> usize {
        self.lag.min(self.ys.len() - 1 - step)
    }

    fn target(&self, step: usize) -> (f64, usize) {
        let l = self.effective_lag(step);
        (self.ys[step + l], l)
    }
}

impl LookaheadTwist {
    pub fn new(kernel: LookaheadKernel, lag: usize, ys: &[f64]) -> Result<Self> {
        if !(kernel.nu2 > 0.0 && kernel.obs_var > 0.0) {
            return Err(Error::InvalidParameter("lookahead variances must be positive".into()));
        }
        Self::bind(kernel, lag, ys)
    }
}

impl<K: LookaheadLaw> Twist<f64> for LookaheadTwist<K> {
    fn log_h(&self, step: usize, k: &f64) -> f64 {
        let (y, l) = self.target(step);
        self.kernel.log_h(y, *k, l)
    }

    fn log_qh(&self, step: usize, prev: &f64) -> f64 {
        let (y, l) = self.target(step);
        self.kernel.log_qh(y, *prev, l)
    }

    fn sample_twisted<R: Rng + ?Sized>(&self, step: usize, prev: &f64, rng: &mut R) -> f64 {
        let (y, l) = self.target(step);
        self.kernel.sample_twisted(y, *prev, l, rng)
    }

    fn log_initial_qh(&self) -> f64 {
        let (y, l) = self.target(0);
        self.kernel.log_initial_qh(y, l)
    }

    fn sample_twisted_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (y, l) = self.target(0);
        self.kernel.sample_twisted_initial(y, l, rng)
    }
}

/// Exact lookahead twist for the linear Gaussian model.
pub fn lg_twist(params: &LinearGaussianParams, lag: usize, ys: &[f64]) -> Result<LookaheadTwist> {
    params.validate()?;
    LookaheadTwist::new(
        LookaheadKernel {
            phi: params.phi,
            nu2: params.nu2,
            obs_var: params.tau2,
        },
        lag,
        ys,
    )
}

/// Lookahead twist for the stochastic-volatility model with the stable
/// noise replaced by its alpha = 2 Gaussian; see [`VolatilityKernel`].
pub fn sv_twist(params: &StochVolParams, lag: usize, ys: &[f64]) -> Result<LookaheadTwist<VolatilityKernel>> {
    params.validate()?;
    let obs_scale = 2.0 * params.gamma * params.gamma;
    let mut twist = LookaheadTwist::bind(
        VolatilityKernel {
            f: params.f,
            nu2: params.nu2,
            obs_scale,
        },
        lag,
        ys,
    )?;
    twist.surrogate = Some(format!(
        "gaussian observations N(0, 2*gamma^2*exp(F^lag*k)) at the propagated latent mean, 2*gamma^2 = {obs_scale}"
    ));
    Ok(twist)
}

/// Alive twisted particle filter.
///
/// Each generation holds one twisted particle, drawn before the alive loop
/// (ancestor proportional to `Q(h_t)` over the alive particles among the
/// previous generation's first `T - 1`, state from the twisted
/// transition). Its weight counts towards `N`. The untwisted alive loop
/// then runs until `N` particles are accepted, and the twisted particle is
/// placed at a uniform position among the first `T - 1`.
///
/// The step factor is
/// `sum_j Q(h_t)(k_j) / sum_{i<T} h_t(k_i)`
/// `= [(N - 1) / (T - 1)] Phi(h_t) / [(T - 1)^{-1} sum_{i<T} h_t(k_i)]`,
/// where `Phi(h_t)` is the average of `Q(h_t)` over the `N - 1` alive
/// ancestors. With `h` constant this is the alive filter's factor.
pub fn alive_twisted_filter<M, K, H, R>(
    model: &M,
    kernel: &K,
    twist: &H,
    ys: &[M::Obs],
    n: usize,
    cap: usize,
    rng: &mut R,
) -> Result<AliveRun<M::State, M::Obs>>
where
    M: HmmModel,
    K: Acceptance<M::Obs>,
    H: Twist<M::State>,
    R: Rng + ?Sized,
{
    check_n(n)?;
    check_data(ys)?;
    let mut generations: Vec<ParticleGeneration<M::State, M::Obs>> = Vec::with_capacity(ys.len());
    let mut estimate = NormConstEstimate::new();
    let log_nm1 = ((n - 1) as f64).ln();
    for (step, y) in ys.iter().enumerate() {
        let accept = |p: &(usize, M::State, M::Obs)| kernel.accepts(&p.2, y);
        let (twisted, log_qh_sum, (mut pool, mut weights)) = match generations.last() {
            None => {
                let k0 = twist.sample_twisted_initial(rng);
                let k = twist.sample_twisted(step, &k0, rng);
                let twisted = (0, k, model.sample_observation(&k, rng));
                let log_qh_sum = checked(step, "Q(h)", twist.log_initial_qh())? + log_nm1;
                let target = n - accept(&twisted) as usize;
                let rest = draw_until(
                    step,
                    target,
                    cap.saturating_sub(1),
                    rng,
                    |r: &mut R| {
                        let k0 = model.sample_initial(r);
                        let k = model.sample_transition(&k0, r);
                        (0, k, model.sample_observation(&k, r))
                    },
                    accept,
                )?;
                (twisted, log_qh_sum, rest)
            }
            Some(prev) => {
                let alive = prev.alive_indices();
                let log_qh = alive
                    .iter()
                    .map(|&j| checked(step, "Q(h)", twist.log_qh(step, &prev.states[j])))
                    .collect::<Result<Vec<f64>>>()?;
                let log_qh_sum = nonzero_sum(step, "Q(h)", &log_qh)?;
                let a = alive[categorical_log(rng, &log_qh)?];
                let k = twist.sample_twisted(step, &prev.states[a], rng);
                let twisted = (a, k, model.sample_observation(&k, rng));
                let target = n - accept(&twisted) as usize;
                let rest = draw_until(
                    step,
                    target,
                    cap.saturating_sub(1),
                    rng,
                    |r: &mut R| {
                        let a = alive[uniform_int(r, alive.len())];
                        let k = model.sample_transition(&prev.states[a], r);
                        (a, k, model.sample_observation(&k, r))
                    },
                    accept,
                )?;
                (twisted, log_qh_sum, rest)
            }
        };
        let t = pool.len() + 1;
        let c = uniform_int(rng, t - 1);
        let w = accept(&twisted);
        pool.insert(c, twisted);
        weights.insert(c, w);

        let log_h = pool[..t - 1]
            .iter()
            .map(|p| checked(step, "h", twist.log_h(step, &p.1)))
            .collect::<Result<Vec<f64>>>()?;
        let log_h_sum = nonzero_sum(step, "h", &log_h)?;
        estimate.push(log_qh_sum - log_h_sum);

        let first = generations.is_empty();
        let mut gen = ParticleGeneration {
            states: Vec::with_capacity(t),
            pseudo_obs: Vec::with_capacity(t),
            weights,
            stopping_time: t,
            ancestors: Vec::with_capacity(if first { 0 } else { t }),
            twisted_index: Some(c),
            twist: Some(TwistStats { log_qh_sum, log_h_sum }),
        };
        for (a, k, u) in pool {
            if !first {
                gen.ancestors.push(a);
            }
            gen.states.push(k);
            gen.pseudo_obs.push(u);
        }
        generations.push(gen);
    }
    Ok(AliveRun { generations, estimate })
}

/// The twisted alive factor written as the alive factor
/// `(T - 1)^{-1} sum_{i<T} W_i` times the change-of-measure correction
/// `Phi(h) / [(T - 1)^{-1} sum_{i<T} h(k_i)]`.
pub fn product_form_log_factor<S, O>(gen: &ParticleGeneration<S, O>, n: usize) -> Option<f64> {
    let stats = gen.twist?;
    let t1 = (gen.stopping_time - 1) as f64;
    let sum_w = gen.weights[..gen.stopping_time - 1].iter().filter(|&&w| w).count() as f64;
    let log_phi = stats.log_qh_sum - ((n - 1) as f64).ln();
    let log_mean_h = stats.log_h_sum - t1.ln();
    Some((sum_w / t1).ln() + log_phi - log_mean_h)
}

/// Twisted bootstrap filter.
///
/// A uniformly chosen slot `U` takes its ancestor with probability
/// proportional to `W Q(h_t)` and its state from the twisted transition;
/// the other `N - 1` slots are standard. The step factor is
/// `[N^{-1} sum_i W_i] Phi(h_t) / [N^{-1} sum_i h_t(k_i)]` with
/// `Phi(h_t) = sum_j W_j Q(h_t)(k_j) / sum_j W_j`.
pub fn twisted_bootstrap_filter<M, H, R>(
    model: &M,
    twist: &H,
    ys: &[M::Obs],
    n: usize,
    rng: &mut R,
) -> Result<BootstrapRun<M::State>>
where
    M: HmmModel,
    H: Twist<M::State>,
    R: Rng + ?Sized,
{
    check_n(n)?;
    check_data(ys)?;
    let mut generations: Vec<WeightedGeneration<M::State>> = Vec::with_capacity(ys.len());
    let mut estimate = NormConstEstimate::new();
    for (step, y) in ys.iter().enumerate() {
        let u = uniform_int(rng, n);
        let mut states = Vec::with_capacity(n);
        let mut ancestors = Vec::new();
        let log_phi = match generations.last() {
            None => {
                for i in 0..n {
                    let k = if i == u {
                        let k0 = twist.sample_twisted_initial(rng);
                        twist.sample_twisted(step, &k0, rng)
                    } else {
                        let k0 = model.sample_initial(rng);
                        model.sample_transition(&k0, rng)
                    };
                    states.push(k);
                }
                checked(step, "Q(h)", twist.log_initial_qh())?
            }
            Some(prev) => {
                let log_qh = prev
                    .states
                    .iter()
                    .map(|k| checked(step, "Q(h)", twist.log_qh(step, k)))
                    .collect::<Result<Vec<f64>>>()?;
                let twisted_lw: Vec<f64> = prev.log_weights.iter().zip(&log_qh).map(|(w, q)| w + q).collect();
                let log_twisted_total = nonzero_sum(step, "Q(h)", &twisted_lw)?;
                ancestors.reserve(n);
                let table = CategoricalTable::from_log_weights(&prev.log_weights)?;
                for i in 0..n {
                    if i == u {
                        let a = categorical_log(rng, &twisted_lw)?;
                        states.push(twist.sample_twisted(step, &prev.states[a], rng));
                        ancestors.push(a);
                    } else {
                        let a = table.sample(rng);
                        states.push(model.sample_transition(&prev.states[a], rng));
                        ancestors.push(a);
                    }
                }
                log_twisted_total - log_sum_exp(&prev.log_weights)
            }
        };
        let log_weights = observation_log_weights(model, y, &states, step)?;
        let log_h = states
            .iter()
            .map(|k| checked(step, "h", twist.log_h(step, k)))
            .collect::<Result<Vec<f64>>>()?;
        estimate.push(log_sum_exp(&log_weights) + log_phi - nonzero_sum(step, "h", &log_h)?);
        generations.push(WeightedGeneration {
            states,
            ancestors,
            log_weights,
            twisted_index: Some(u),
        });
    }
    Ok(BootstrapRun { generations, estimate })
}
