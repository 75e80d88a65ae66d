//! Untwisted filters: the bootstrap filter and the alive filter, plus the
//! stopping-time sampler they share with the twisted variants.

use rand::Rng;

use crate::abc::Acceptance;
use crate::models::HmmModel;
use crate::rng::{uniform_int, CategoricalTable};
use crate::stats::log_sum_exp;
use crate::{Error, Result};

/// Default per-step cap on the number of draws in the alive loop.
pub const DEFAULT_CAP: usize = 1_000_000;

/// Log-domain running estimate of the normalising constant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormConstEstimate {
    pub log_factors: Vec<f64>,
    pub log_total: f64,
}

impl NormConstEstimate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, log_factor: f64) {
        self.log_factors.push(log_factor);
        self.log_total += log_factor;
    }

    /// Running totals after each step.
    pub fn cumulative(&self) -> Vec<f64> {
        self.log_factors
            .iter()
            .scan(0.0, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect()
    }
}

/// Log sums entering the twisted estimator at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistStats {
    /// `log sum_j Q(h)(k_j)` over the alive ancestors among the previous
    /// generation's first `T - 1` particles (at the first step,
    /// `log((N - 1) mu(Q(h)))`).
    pub log_qh_sum: f64,
    /// `log sum_{i < T} h(k_i)` over this generation's first `T - 1` draws.
    pub log_h_sum: f64,
}

/// One time step of an alive filter.
///
/// Indices are zero-based. `ancestors[i]` points into the previous
/// generation and is empty for the first generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleGeneration<S, O> {
    pub states: Vec<S>,
    pub pseudo_obs: Vec<O>,
    pub weights: Vec<bool>,
    pub stopping_time: usize,
    pub ancestors: Vec<usize>,
    pub twisted_index: Option<usize>,
    pub twist: Option<TwistStats>,
}

impl<S, O> ParticleGeneration<S, O> {
    /// Indices of the unit-weight particles among the first `T - 1`; these
    /// are the only candidates for resampling.
    pub fn alive_indices(&self) -> Vec<usize> {
        (0..self.stopping_time - 1).filter(|&i| self.weights[i]).collect()
    }

    pub fn accepted(&self) -> usize {
        self.weights.iter().filter(|&&w| w).count()
    }
}

/// Output of an alive filter run.
#[derive(Debug, Clone)]
pub struct AliveRun<S, O> {
    pub generations: Vec<ParticleGeneration<S, O>>,
    pub estimate: NormConstEstimate,
}

impl<S: Copy, O> AliveRun<S, O> {
    /// Latent path `k_1..k_T` ending at particle `index` of the final
    /// generation.
    pub fn trace_path(&self, index: usize) -> Vec<S> {
        let mut path = Vec::with_capacity(self.generations.len());
        let mut i = index;
        for gen in self.generations.iter().rev() {
            path.push(gen.states[i]);
            if !gen.ancestors.is_empty() {
                i = gen.ancestors[i];
            }
        }
        path.reverse();
        path
    }

    /// Path through a uniformly chosen alive particle among the final
    /// generation's first `T - 1`.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        let last = self.generations.last().expect("filter ran at least one step");
        let alive = last.alive_indices();
        self.trace_path(alive[uniform_int(rng, alive.len())])
    }
}

/// Draw particles one at a time until `target` of them are accepted.
/// The final draw is always an accepted one.
pub(crate) fn draw_until<P, R, F, A>(
    step: usize,
    target: usize,
    cap: usize,
    rng: &mut R,
    mut propose: F,
    mut accept: A,
) -> Result<(Vec<P>, Vec<bool>)>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> P,
    A: FnMut(&P) -> bool,
{
    let mut particles = Vec::new();
    let mut weights = Vec::new();
    let mut accepted = 0;
    while accepted < target {
        if particles.len() >= cap {
            return Err(Error::CapExceeded {
                step,
                draws: particles.len(),
                accepted,
                target,
            });
        }
        let p = propose(rng);
        let w = accept(&p);
        accepted += w as usize;
        particles.push(p);
        weights.push(w);
    }
    Ok((particles, weights))
}

/// Sample until `n` accepted particles have been drawn; returns every draw
/// with its weight. The stopping time is the length of the returned pool.
pub fn sample_until_alive<P, R, F, A>(
    propose: F,
    accept: A,
    n: usize,
    cap: usize,
    rng: &mut R,
) -> Result<(Vec<P>, Vec<bool>)>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> P,
    A: FnMut(&P) -> bool,
{
    check_n(n)?;
    if cap < n {
        return Err(Error::InvalidParameter(format!("cap {cap} is below N = {n}")));
    }
    draw_until(0, n, cap, rng, propose, accept)
}

/// `count` i.i.d. categorical draws from nonnegative weights.
pub fn multinomial_resample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], count: usize) -> Result<Vec<usize>> {
    let table = CategoricalTable::new(weights)?;
    Ok((0..count).map(|_| table.sample(rng)).collect())
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("N must be at least 2, got {n}")));
    }
    Ok(())
}

pub(crate) fn check_data<T>(ys: &[T]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    Ok(())
}

/// Alive particle filter with binary ABC weights.
///
/// At each step particles are drawn (ancestor uniformly among the alive
/// particles of the previous generation's first `T - 1`, then one
/// transition and one simulated observation) until `N` are accepted. The
/// step contributes `(N - 1) / (T - 1)` to the estimate.
pub fn alive_filter<M, K, R>(
    model: &M,
    kernel: &K,
    ys: &[M::Obs],
    n: usize,
    cap: usize,
    rng: &mut R,
) -> Result<AliveRun<M::State, M::Obs>>
where
    M: HmmModel,
    K: Acceptance<M::Obs>,
    R: Rng + ?Sized,
{
    check_n(n)?;
    check_data(ys)?;
    let mut generations: Vec<ParticleGeneration<M::State, M::Obs>> = Vec::with_capacity(ys.len());
    let mut estimate = NormConstEstimate::new();
    for (step, y) in ys.iter().enumerate() {
        let accept = |p: &(usize, M::State, M::Obs)| kernel.accepts(&p.2, y);
        let (pool, weights) = match generations.last() {
            None => draw_until(
                step,
                n,
                cap,
                rng,
                |r: &mut R| {
                    let k0 = model.sample_initial(r);
                    let k = model.sample_transition(&k0, r);
                    (0, k, model.sample_observation(&k, r))
                },
                accept,
            )?,
            Some(prev) => {
                let alive = prev.alive_indices();
                draw_until(
                    step,
                    n,
                    cap,
                    rng,
                    |r: &mut R| {
                        let a = alive[uniform_int(r, alive.len())];
                        let k = model.sample_transition(&prev.states[a], r);
                        (a, k, model.sample_observation(&k, r))
                    },
                    accept,
                )?
            }
        };
        let t = pool.len();
        estimate.push(((n - 1) as f64).ln() - ((t - 1) as f64).ln());
        let first = generations.is_empty();
        let mut gen = ParticleGeneration {
            states: Vec::with_capacity(t),
            pseudo_obs: Vec::with_capacity(t),
            weights,
            stopping_time: t,
            ancestors: Vec::with_capacity(if first { 0 } else { t }),
            twisted_index: None,
            twist: None,
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

/// One step of a weighted (bootstrap-type) filter.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGeneration<S> {
    pub states: Vec<S>,
    pub ancestors: Vec<usize>,
    pub log_weights: Vec<f64>,
    pub twisted_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BootstrapRun<S> {
    pub generations: Vec<WeightedGeneration<S>>,
    pub estimate: NormConstEstimate,
}

pub(crate) fn observation_log_weights<M: HmmModel>(
    model: &M,
    y: &M::Obs,
    states: &[M::State],
    step: usize,
) -> Result<Vec<f64>> {
    let lw = states
        .iter()
        .map(|k| model.observation_log_density(y, k).ok_or(Error::MissingDensity))
        .collect::<Result<Vec<f64>>>()?;
    if lw.iter().all(|&w| w == f64::NEG_INFINITY) {
        return Err(Error::ParticleDeath { step });
    }
    Ok(lw)
}

/// Bootstrap particle filter with multinomial resampling. Needs the
/// observation density.
pub fn bootstrap_filter<M, R>(model: &M, ys: &[M::Obs], n: usize, rng: &mut R) -> Result<BootstrapRun<M::State>>
where
    M: HmmModel,
    R: Rng + ?Sized,
{
    check_n(n)?;
    check_data(ys)?;
    let mut generations: Vec<WeightedGeneration<M::State>> = Vec::with_capacity(ys.len());
    let mut estimate = NormConstEstimate::new();
    let log_n = (n as f64).ln();
    for (step, y) in ys.iter().enumerate() {
        let (states, ancestors) = match generations.last() {
            None => {
                let states = (0..n)
                    .map(|_| {
                        let k0 = model.sample_initial(rng);
                        model.sample_transition(&k0, rng)
                    })
                    .collect();
                (states, Vec::new())
            }
            Some(prev) => {
                let mut states = Vec::with_capacity(n);
                let mut ancestors = Vec::with_capacity(n);
                let table = CategoricalTable::from_log_weights(&prev.log_weights)?;
                for _ in 0..n {
                    let a = table.sample(rng);
                    states.push(model.sample_transition(&prev.states[a], rng));
                    ancestors.push(a);
                }
                (states, ancestors)
            }
        };
        let log_weights = observation_log_weights(model, y, &states, step)?;
        estimate.push(log_sum_exp(&log_weights) - log_n);
        generations.push(WeightedGeneration {
            states,
            ancestors,
            log_weights,
            twisted_index: None,
        });
    }
    Ok(BootstrapRun { generations, estimate })
}
