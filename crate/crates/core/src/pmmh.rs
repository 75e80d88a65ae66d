//! Particle marginal Metropolis-Hastings driven by the alive filters.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::abc::AbcKernel;
use crate::models::{discrete_abc_log_marginal, sv_model, DiscreteHmm, DiscreteHmmParams, StochVolParams};
use crate::rng::{gaussian, uniform_int};
use crate::smc::{alive_filter, AliveRun, DEFAULT_CAP};
use crate::stats::{log_normal_pdf, log_sum_exp};
use crate::twist::{alive_twisted_filter, sv_twist, TableTwist};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Alive,
    AliveTwisted,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Alive => "alive",
            FilterKind::AliveTwisted => "alive-twisted",
        }
    }
}

/// Estimate of the normalising constant together with one latent path
/// drawn from the filter's final generation.
#[derive(Debug, Clone)]
pub struct FilterOutput<S> {
    pub log_zhat: f64,
    pub path: Vec<S>,
}

impl<S: Copy, O> AliveRun<S, O> {
    pub fn into_output<R: Rng + ?Sized>(self, rng: &mut R) -> FilterOutput<S> {
        let path = self.sample_path(rng);
        FilterOutput {
            log_zhat: self.estimate.log_total,
            path,
        }
    }
}

/// Everything a chain needs to know about the posterior it targets.
pub trait PmmhTarget: Sync {
    type Param: Clone + Debug + Send + Sync;
    type State: Clone + Debug + Send;

    /// Log prior density; `-inf` outside the support.
    fn log_prior(&self, theta: &Self::Param) -> f64;

    /// Proposal and `log q(theta | theta*) - log q(theta* | theta)`.
    fn propose<R: Rng + ?Sized>(&self, theta: &Self::Param, rng: &mut R) -> (Self::Param, f64);

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Param;

    fn estimate<R: Rng + ?Sized>(&self, theta: &Self::Param, rng: &mut R) -> Result<FilterOutput<Self::State>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmmhState<P, S> {
    pub theta: P,
    pub log_prior: f64,
    pub log_zhat: f64,
    pub selected_path: Vec<S>,
    pub accept_count: usize,
    pub iteration: usize,
    pub cap_exceeded: usize,
    pub filter_failures: usize,
}

/// Metropolis-Hastings log acceptance ratio. Any `-inf` term or NaN gives
/// `-inf`.
pub fn log_acceptance_ratio(
    log_prior_new: f64,
    log_prior_old: f64,
    log_proposal_correction: f64,
    log_zhat_new: f64,
    log_zhat_old: f64,
) -> f64 {
    if log_prior_new == f64::NEG_INFINITY || log_zhat_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let r = (log_prior_new - log_prior_old) + log_proposal_correction + (log_zhat_new - log_zhat_old);
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

/// One iteration. The uniform is always drawn first so the stream layout
/// does not depend on the outcome.
pub fn pmmh_step<T, R>(target: &T, state: &mut PmmhState<T::Param, T::State>, rng: &mut R) -> bool
where
    T: PmmhTarget,
    R: Rng + ?Sized,
{
    state.iteration += 1;
    let log_u = rng.random::<f64>().ln();
    let (proposal, correction) = target.propose(&state.theta, rng);
    let log_prior = target.log_prior(&proposal);
    if log_prior == f64::NEG_INFINITY {
        return false;
    }
    let out = match target.estimate(&proposal, rng) {
        Ok(out) => out,
        Err(Error::CapExceeded { .. }) => {
            state.cap_exceeded += 1;
            return false;
        }
        Err(_) => {
            state.filter_failures += 1;
            return false;
        }
    };
    let log_alpha = log_acceptance_ratio(log_prior, state.log_prior, correction, out.log_zhat, state.log_zhat);
    if log_u < log_alpha {
        state.theta = proposal;
        state.log_prior = log_prior;
        state.log_zhat = out.log_zhat;
        state.selected_path = out.path;
        state.accept_count += 1;
        true
    } else {
        false
    }
}

/// Per-iteration record; iteration 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStep<P> {
    pub iteration: usize,
    pub theta: P,
    pub log_zhat: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ChainRecord<P, S> {
    pub steps: Vec<ChainStep<P>>,
    pub final_state: PmmhState<P, S>,
    /// Prior draws discarded at initialisation because the filter failed.
    pub init_redraws: usize,
}

impl<P, S> ChainRecord<P, S> {
    /// Accepted proposals over iterations; `None` when no iteration ran.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let m = self.final_state.iteration;
        (m > 0).then(|| self.final_state.accept_count as f64 / m as f64)
    }
}

const MAX_INIT_DRAWS: usize = 1000;

/// Initial parameter from the prior, then `iterations` PMMH steps.
pub fn run_chain<T, R>(target: &T, iterations: usize, rng: &mut R) -> Result<ChainRecord<T::Param, T::State>>
where
    T: PmmhTarget,
    R: Rng + ?Sized,
{
    let mut init_redraws = 0;
    let (theta, out) = loop {
        let theta = target.sample_prior(rng);
        match target.estimate(&theta, rng) {
            Ok(out) if out.log_zhat.is_finite() => break (theta, out),
            Ok(_) | Err(Error::CapExceeded { .. }) | Err(Error::ParticleDeath { .. }) => {
                init_redraws += 1;
                if init_redraws >= MAX_INIT_DRAWS {
                    return Err(Error::Config(format!(
                        "no prior draw gave a usable estimate in {MAX_INIT_DRAWS} attempts"
                    )));
                }
            }
            Err(e) => return Err(e),
        }
    };
    let mut state = PmmhState {
        log_prior: target.log_prior(&theta),
        theta,
        log_zhat: out.log_zhat,
        selected_path: out.path,
        accept_count: 0,
        iteration: 0,
        cap_exceeded: 0,
        filter_failures: 0,
    };
    let mut steps = Vec::with_capacity(iterations + 1);
    steps.push(ChainStep {
        iteration: 0,
        theta: state.theta.clone(),
        log_zhat: state.log_zhat,
        accepted: true,
    });
    for _ in 0..iterations {
        let accepted = pmmh_step(target, &mut state, rng);
        steps.push(ChainStep {
            iteration: state.iteration,
            theta: state.theta.clone(),
            log_zhat: state.log_zhat,
            accepted,
        });
    }
    Ok(ChainRecord {
        steps,
        final_state: state,
        init_redraws,
    })
}

/// Sample autocorrelations at lags `0..=max_lag`, centred at the overall
/// mean, with the biased `1/n` covariance estimator.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::InvalidParameter(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    let m = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>();
    if !(c0 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| centred[..n - k].iter().zip(&centred[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Parameters inferred for the stochastic-volatility model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvTheta {
    #[serde(rename = "F")]
    pub f: f64,
    pub nu2: f64,
    pub gamma: f64,
}

/// Hyperparameters of the stable noise that stay fixed during inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvFixed {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl Default for SvFixed {
    fn default() -> Self {
        Self {
            alpha: 1.95,
            beta: 0.05,
            delta: 0.0,
        }
    }
}

impl SvFixed {
    pub fn params(&self, theta: &SvTheta) -> StochVolParams {
        StochVolParams {
            f: theta.f,
            nu2: theta.nu2,
            alpha: self.alpha,
            beta: self.beta,
            gamma: theta.gamma,
            delta: self.delta,
        }
    }
}

/// `F ~ N(f_mean, f_var)`, `1/nu2 ~ Gamma(shape, scale)`,
/// `1/gamma ~ Gamma(shape, scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub f_mean: f64,
    pub f_var: f64,
    pub nu2_inv_shape: f64,
    pub nu2_inv_scale: f64,
    pub gamma_inv_shape: f64,
    pub gamma_inv_scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            f_mean: 0.0,
            f_var: 0.15,
            nu2_inv_shape: 2.0,
            nu2_inv_scale: 100.0,
            gamma_inv_shape: 2.0,
            gamma_inv_scale: 1.0,
        }
    }
}

fn gamma_log_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    -ln_gamma(shape) - shape * scale.ln() + (shape - 1.0) * x.ln() - x / scale
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.f_var,
            self.nu2_inv_shape,
            self.nu2_inv_scale,
            self.gamma_inv_shape,
            self.gamma_inv_scale,
        ];
        if all.iter().any(|&v| !(v > 0.0 && v.is_finite())) || !self.f_mean.is_finite() {
            return Err(Error::Config("prior variances, shapes and scales must be positive".into()));
        }
        Ok(())
    }

    /// Log density of `(F, nu2, gamma)`; the Gamma priors live on the
    /// reciprocals, so each carries the Jacobian `-2 log x`.
    pub fn log_prior(&self, theta: &SvTheta) -> f64 {
        if !(theta.nu2 > 0.0 && theta.gamma > 0.0) || !theta.f.is_finite() {
            return f64::NEG_INFINITY;
        }
        log_normal_pdf(theta.f, self.f_mean, self.f_var)
            + gamma_log_pdf(1.0 / theta.nu2, self.nu2_inv_shape, self.nu2_inv_scale)
            - 2.0 * theta.nu2.ln()
            + gamma_log_pdf(1.0 / theta.gamma, self.gamma_inv_shape, self.gamma_inv_scale)
            - 2.0 * theta.gamma.ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SvTheta {
        let nu2_inv = Gamma::new(self.nu2_inv_shape, self.nu2_inv_scale).expect("validated prior");
        let gamma_inv = Gamma::new(self.gamma_inv_shape, self.gamma_inv_scale).expect("validated prior");
        SvTheta {
            f: gaussian(rng, self.f_mean, self.f_var),
            nu2: 1.0 / nu2_inv.sample(rng),
            gamma: 1.0 / gamma_inv.sample(rng),
        }
    }
}

/// Normal walk on `F`, log-normal walks on `nu2` and `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalSpec {
    pub f_var: f64,
    pub log_nu2_var: f64,
    pub log_gamma_var: f64,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            f_var: 1.0,
            log_nu2_var: 0.5,
            log_gamma_var: 0.5,
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.f_var, self.log_nu2_var, self.log_gamma_var]
            .iter()
            .any(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Config("proposal variances must be nonnegative".into()));
        }
        Ok(())
    }

    /// Returns the proposal and `log q(theta | theta*) - log q(theta* | theta)`,
    /// which is `log(nu2*/nu2) + log(gamma*/gamma)` for the log-normal walks.
    pub fn propose<R: Rng + ?Sized>(&self, theta: &SvTheta, rng: &mut R) -> (SvTheta, f64) {
        let f = gaussian(rng, theta.f, self.f_var);
        let d_nu2 = gaussian(rng, 0.0, self.log_nu2_var);
        let d_gamma = gaussian(rng, 0.0, self.log_gamma_var);
        let proposal = SvTheta {
            f,
            nu2: theta.nu2 * d_nu2.exp(),
            gamma: theta.gamma * d_gamma.exp(),
        };
        (proposal, d_nu2 + d_gamma)
    }
}

/// Filter settings shared by the PMMH targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub kind: FilterKind,
    pub n: usize,
    pub lag: usize,
    pub cap: usize,
}

impl FilterSettings {
    pub fn new(kind: FilterKind, n: usize, lag: usize) -> Self {
        Self {
            kind,
            n,
            lag,
            cap: DEFAULT_CAP,
        }
    }
}

/// Stochastic-volatility posterior over `(F, nu2, gamma)` given returns.
#[derive(Debug, Clone)]
pub struct SvTarget {
    pub ys: Vec<f64>,
    pub fixed: SvFixed,
    pub prior: PriorSpec,
    pub proposal: ProposalSpec,
    pub kernel: AbcKernel,
    pub filter: FilterSettings,
}

impl PmmhTarget for SvTarget {
    type Param = SvTheta;
    type State = f64;

    fn log_prior(&self, theta: &SvTheta) -> f64 {
        self.prior.log_prior(theta)
    }

    fn propose<R: Rng + ?Sized>(&self, theta: &SvTheta, rng: &mut R) -> (SvTheta, f64) {
        self.proposal.propose(theta, rng)
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> SvTheta {
        self.prior.sample(rng)
    }

    fn estimate<R: Rng + ?Sized>(&self, theta: &SvTheta, rng: &mut R) -> Result<FilterOutput<f64>> {
        let params = self.fixed.params(theta);
        let model = sv_model(params)?;
        let FilterSettings { kind, n, lag, cap } = self.filter;
        let run = match kind {
            FilterKind::Alive => alive_filter(&model, &self.kernel, &self.ys, n, cap, rng)?,
            FilterKind::AliveTwisted => {
                let twist = sv_twist(&params, lag, &self.ys)?;
                alive_twisted_filter(&model, &self.kernel, &twist, &self.ys, n, cap, rng)?
            }
        };
        Ok(run.into_output(rng))
    }
}

/// Posterior over a finite set of discrete models, with the symmetric
/// proposal that picks one of the other grid points uniformly. The twisted
/// variant uses each model's oracle twist table.
#[derive(Debug, Clone)]
pub struct GridTarget {
    models: Vec<DiscreteHmm>,
    twists: Vec<TableTwist>,
    log_prior: Vec<f64>,
    ys: Vec<usize>,
    filter: FilterSettings,
}

impl GridTarget {
    pub fn new(grid: Vec<DiscreteHmmParams>, prior: &[f64], ys: &[usize], filter: FilterSettings) -> Result<Self> {
        if grid.len() < 2 || grid.len() != prior.len() {
            return Err(Error::Config("grid needs at least two points and one prior mass per point".into()));
        }
        if prior.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("grid prior masses must be positive".into()));
        }
        let models = grid.iter().cloned().map(DiscreteHmm::new).collect::<Result<Vec<_>>>()?;
        let twists = grid
            .into_iter()
            .map(|p| TableTwist::oracle(p, ys, 1e-3))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            twists,
            log_prior: prior.iter().map(|p| p.ln()).collect(),
            ys: ys.to_vec(),
            filter,
        })
    }

    /// Exact posterior masses from the forward recursion.
    pub fn exact_posterior(&self) -> Vec<f64> {
        let logs: Vec<f64> = self
            .models
            .iter()
            .zip(&self.log_prior)
            .map(|(m, lp)| lp + discrete_abc_log_marginal(m.params(), &self.ys))
            .collect();
        let z = log_sum_exp(&logs);
        logs.iter().map(|l| (l - z).exp()).collect()
    }
}

impl PmmhTarget for GridTarget {
    type Param = usize;
    type State = usize;

    fn log_prior(&self, theta: &usize) -> f64 {
        self.log_prior.get(*theta).copied().unwrap_or(f64::NEG_INFINITY)
    }

    fn propose<R: Rng + ?Sized>(&self, theta: &usize, rng: &mut R) -> (usize, f64) {
        let j = uniform_int(rng, self.models.len() - 1);
        (if j >= *theta { j + 1 } else { j }, 0.0)
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let w: Vec<f64> = self.log_prior.iter().map(|l| l.exp()).collect();
        crate::rng::categorical(rng, &w).expect("positive prior masses")
    }

    fn estimate<R: Rng + ?Sized>(&self, theta: &usize, rng: &mut R) -> Result<FilterOutput<usize>> {
        let model = &self.models[*theta];
        let ball = model.params().ball();
        let FilterSettings { kind, n, cap, .. } = self.filter;
        let run = match kind {
            FilterKind::Alive => alive_filter(model, &ball, &self.ys, n, cap, rng)?,
            FilterKind::AliveTwisted => alive_twisted_filter(model, &ball, &self.twists[*theta], &self.ys, n, cap, rng)?,
        };
        Ok(run.into_output(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, SeedSpec};
    use statrs::distribution::{Continuous, Gamma as GammaDist, Normal};

    #[test]
    fn prior_gaussian_term_at_zero() {
        let p = PriorSpec::default();
        let t = SvTheta {
            f: 0.0,
            nu2: 0.01,
            gamma: 0.5,
        };
        let other = p.log_prior(&t) - log_normal_pdf(0.0, 0.0, 0.15);
        let t2 = SvTheta { f: 0.3, ..t };
        let other2 = p.log_prior(&t2) - log_normal_pdf(0.3, 0.0, 0.15);
        assert!((other - other2).abs() < 1e-12);
        assert!((log_normal_pdf(0.0, 0.0, 0.15) + 0.5 * (2.0 * std::f64::consts::PI * 0.15).ln()).abs() < 1e-14);
    }

    #[test]
    fn prior_support() {
        let p = PriorSpec::default();
        assert_eq!(p.log_prior(&SvTheta { f: 0.1, nu2: 0.0, gamma: 1.0 }), f64::NEG_INFINITY);
        assert_eq!(p.log_prior(&SvTheta { f: 0.1, nu2: -1.0, gamma: 1.0 }), f64::NEG_INFINITY);
        assert_eq!(p.log_prior(&SvTheta { f: 0.1, nu2: 0.1, gamma: 0.0 }), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_matches_textbook_densities() {
        let p = PriorSpec::default();
        let t = SvTheta {
            f: 0.42,
            nu2: 0.013,
            gamma: 0.7,
        };
        // statrs parameterises the Gamma by rate
        let f = Normal::new(0.0, 0.15f64.sqrt()).unwrap().ln_pdf(0.42);
        let nu = GammaDist::new(2.0, 1.0 / 100.0).unwrap().ln_pdf(1.0 / 0.013) + (1.0 / (0.013f64 * 0.013)).ln();
        let ga = GammaDist::new(2.0, 1.0).unwrap().ln_pdf(1.0 / 0.7) + (1.0 / (0.7f64 * 0.7)).ln();
        assert!((p.log_prior(&t) - (f + nu + ga)).abs() < 1e-10);
    }

    #[test]
    fn lognormal_correction_matches_density_ratio() {
        let spec = ProposalSpec::default();
        let theta = SvTheta {
            f: 0.2,
            nu2: 0.02,
            gamma: 0.9,
        };
        let mut s = derive_stream(SeedSpec::new(70, 0));
        let (prop, corr) = spec.propose(&theta, &mut s);
        // log-normal transition density on the natural scale
        let q = |from: f64, to: f64, var: f64| log_normal_pdf(to.ln(), from.ln(), var) - to.ln();
        let forward = q(theta.nu2, prop.nu2, 0.5) + q(theta.gamma, prop.gamma, 0.5);
        let backward = q(prop.nu2, theta.nu2, 0.5) + q(prop.gamma, theta.gamma, 0.5);
        assert!((corr - (backward - forward)).abs() < 1e-12);
        assert!((corr - ((prop.nu2 / theta.nu2).ln() + (prop.gamma / theta.gamma).ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_walk_stays_put() {
        let spec = ProposalSpec {
            f_var: 0.0,
            log_nu2_var: 0.0,
            log_gamma_var: 0.0,
        };
        let theta = SvTheta {
            f: 0.2,
            nu2: 0.02,
            gamma: 0.9,
        };
        let (prop, corr) = spec.propose(&theta, &mut derive_stream(SeedSpec::new(71, 0)));
        assert_eq!(prop, theta);
        assert_eq!(corr, 0.0);
    }

    #[test]
    fn acceptance_ratio_edge_cases() {
        assert_eq!(log_acceptance_ratio(-1.0, -1.0, 0.0, 5.0, 5.0), 0.0);
        assert_eq!(log_acceptance_ratio(-1.0, -1.0, 0.0, f64::NEG_INFINITY, 5.0), f64::NEG_INFINITY);
        assert_eq!(log_acceptance_ratio(f64::NEG_INFINITY, -1.0, 0.0, 1.0, 5.0), f64::NEG_INFINITY);
        let r = log_acceptance_ratio(-2.0, -1.0, 0.5, 1e4, -1e4);
        assert!(r.is_finite() && r > 0.0);
    }

    /// Stub target with a prescribed estimate, to exercise the acceptance
    /// logic independently of any filter.
    struct Stub {
        log_z: fn(&f64) -> f64,
    }

    impl PmmhTarget for Stub {
        type Param = f64;
        type State = f64;
        fn log_prior(&self, _: &f64) -> f64 {
            0.0
        }
        fn propose<R: Rng + ?Sized>(&self, theta: &f64, _: &mut R) -> (f64, f64) {
            (*theta, 0.0)
        }
        fn sample_prior<R: Rng + ?Sized>(&self, _: &mut R) -> f64 {
            1.0
        }
        fn estimate<R: Rng + ?Sized>(&self, theta: &f64, _: &mut R) -> Result<FilterOutput<f64>> {
            Ok(FilterOutput {
                log_zhat: (self.log_z)(theta),
                path: vec![*theta],
            })
        }
    }

    #[test]
    fn identical_estimate_always_accepts() {
        let target = Stub { log_z: |_| -3.0 };
        let rec = run_chain(&target, 500, &mut derive_stream(SeedSpec::new(72, 0))).unwrap();
        assert_eq!(rec.final_state.accept_count, 500);
        assert_eq!(rec.acceptance_rate(), Some(1.0));
    }

    #[test]
    fn failed_estimate_rejects() {
        let target = Stub { log_z: |_| 0.0 };
        let mut state = PmmhState {
            theta: 1.0,
            log_prior: 0.0,
            log_zhat: 0.0,
            selected_path: vec![1.0],
            accept_count: 0,
            iteration: 0,
            cap_exceeded: 0,
            filter_failures: 0,
        };
        let dead = Stub {
            log_z: |_| f64::NEG_INFINITY,
        };
        let mut s = derive_stream(SeedSpec::new(73, 0));
        assert!(!pmmh_step(&dead, &mut state, &mut s));
        assert!(pmmh_step(&target, &mut state, &mut s));
    }

    #[test]
    fn zero_iterations_keep_initial_state() {
        let target = Stub { log_z: |_| -3.0 };
        let rec = run_chain(&target, 0, &mut derive_stream(SeedSpec::new(74, 0))).unwrap();
        assert_eq!(rec.steps.len(), 1);
        assert_eq!(rec.acceptance_rate(), None);
    }

    #[test]
    fn acf_examples() {
        let mut s = derive_stream(SeedSpec::new(75, 0));
        let xs: Vec<f64> = (0..100_000).map(|_| gaussian(&mut s, 0.0, 1.0)).collect();
        let r = acf(&xs, 20).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[1..].iter().all(|v| v.abs() < 4.0 / (1e5f64).sqrt()));

        let mut x = 0.0;
        let ar: Vec<f64> = (0..100_000)
            .map(|_| {
                x = 0.8 * x + gaussian(&mut s, 0.0, 1.0);
                x
            })
            .collect();
        assert!((acf(&ar, 5).unwrap()[1] - 0.8).abs() < 0.02);
        assert!(matches!(acf(&[2.0; 10], 3), Err(Error::ZeroVariance)));
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn grid_proposal_is_a_flip() {
        let p = crate::models::DiscreteHmmParams {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            emission: vec![vec![0.5, 0.5]],
            accept: vec![vec![true, false], vec![false, true]],
        };
        let target = GridTarget::new(vec![p.clone(), p], &[0.5, 0.5], &[0, 1], FilterSettings::new(FilterKind::Alive, 5, 1))
            .unwrap();
        let mut s = derive_stream(SeedSpec::new(76, 0));
        for _ in 0..20 {
            assert_eq!(target.propose(&0, &mut s), (1, 0.0));
            assert_eq!(target.propose(&1, &mut s), (0, 0.0));
        }
        let post = target.exact_posterior();
        assert!((post[0] - 0.5).abs() < 1e-12);
    }
}
