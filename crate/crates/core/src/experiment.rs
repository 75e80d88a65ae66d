//! Experiment configuration, runners and file formats behind the CLI.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{AbcKernel, BallMode, DEFAULT_RELATIVE_FLOOR};
use crate::models::{lg_model, simulate, sv_model, HmmModel, LinearGaussianParams, StochVolParams};
use crate::pmmh::{acf, run_chain, ChainRecord, FilterKind, FilterSettings, PriorSpec, ProposalSpec, SvFixed, SvTarget, SvTheta};
use crate::rng::{derive_stream, SeedSpec, Stream};
use crate::smc::{alive_filter, bootstrap_filter, NormConstEstimate, DEFAULT_CAP};
use crate::stats::log_sample_variance_of_exp;
use crate::twist::{alive_twisted_filter, lg_twist, sv_twist, twisted_bootstrap_filter, Twist};
use crate::{Error, Result};

fn default_lag() -> usize {
    5
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_floor() -> f64 {
    DEFAULT_RELATIVE_FLOOR
}

/// Model section of a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    LinearGaussian(LinearGaussianParams),
    StochasticVolatility(StochVolParams),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::LinearGaussian(p) => p.validate(),
            ModelConfig::StochasticVolatility(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub ball_mode: BallMode,
    #[serde(default = "default_floor")]
    pub relative_floor: f64,
}

impl AbcConfig {
    pub fn kernel(&self) -> Result<AbcKernel> {
        AbcKernel::new(self.epsilon, self.ball_mode, self.relative_floor)
    }
}

/// Config for `simulate` and `filter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub model: ModelConfig,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(flatten)]
    pub abc: AbcConfig,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.abc.kernel()?;
        if self.steps == 0 {
            return Err(Error::Config("T must be positive".into()));
        }
        if self.particles < 2 {
            return Err(Error::Config("N must be at least 2".into()));
        }
        if self.lag == 0 {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        if self.cap < self.particles {
            return Err(Error::Config("cap must be at least N".into()));
        }
        Ok(())
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Stream ids used by `simulate` and `filter`.
pub const DATA_STREAM: u64 = 0;
pub const FILTER_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedRow {
    pub step: usize,
    pub latent: f64,
    pub observation: f64,
}

pub fn simulate_dataset(model: &ModelConfig, steps: usize, seed: u64) -> Result<Vec<SimulatedRow>> {
    model.validate()?;
    if steps == 0 {
        return Err(Error::Config("T must be positive".into()));
    }
    let mut rng = derive_stream(SeedSpec::new(seed, DATA_STREAM));
    let sim = match model {
        ModelConfig::LinearGaussian(p) => simulate(&lg_model(*p)?, steps, &mut rng),
        ModelConfig::StochasticVolatility(p) => simulate(&sv_model(*p)?, steps, &mut rng),
    };
    Ok(sim
        .latent
        .iter()
        .zip(&sim.observations)
        .enumerate()
        .map(|(step, (&latent, &observation))| SimulatedRow {
            step,
            latent,
            observation,
        })
        .collect())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Observations from a CSV with an `observation` column (the layout
/// written by `simulate`).
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "observation")
        .ok_or_else(|| Error::Data(format!("{}: no `observation` column", path.display())))?;
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: unparsable observation", path.display())))?;
        ys.push(v);
    }
    if ys.is_empty() {
        return Err(Error::Data(format!("{}: no observations", path.display())));
    }
    Ok(ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FilterAlgo {
    Alive,
    Bootstrap,
    AliveTwisted,
    TwistedBootstrap,
}

impl FilterAlgo {
    pub fn is_twisted(self) -> bool {
        matches!(self, FilterAlgo::AliveTwisted | FilterAlgo::TwistedBootstrap)
    }
}

/// One line of the `filter` output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterRow {
    pub step: usize,
    pub stopping_time: usize,
    pub log_factor: f64,
    pub cumulative_log_z: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub twisted_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_qh_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_h_sum: Option<f64>,
}

fn rows_from(estimate: &NormConstEstimate, per_step: impl Iterator<Item = (usize, Option<usize>, Option<(f64, f64)>)>) -> Vec<FilterRow> {
    estimate
        .log_factors
        .iter()
        .zip(estimate.cumulative())
        .zip(per_step)
        .enumerate()
        .map(|(step, ((&log_factor, cumulative_log_z), (t, idx, sums)))| FilterRow {
            step,
            stopping_time: t,
            log_factor,
            cumulative_log_z,
            twisted_index: idx,
            log_qh_sum: sums.map(|s| s.0),
            log_h_sum: sums.map(|s| s.1),
        })
        .collect()
}

fn filter_generic<M: HmmModel<State = f64, Obs = f64>, Tw: Twist<f64>>(
    model: &M,
    twist: &Tw,
    cfg: &FilterConfig,
    algo: FilterAlgo,
    ys: &[f64],
    rng: &mut Stream,
) -> Result<Vec<FilterRow>> {
    let kernel = cfg.abc.kernel()?;
    let n = cfg.particles;
    Ok(match algo {
        FilterAlgo::Alive | FilterAlgo::AliveTwisted => {
            let run = if algo == FilterAlgo::Alive {
                alive_filter(model, &kernel, ys, n, cfg.cap, rng)?
            } else {
                alive_twisted_filter(model, &kernel, twist, ys, n, cfg.cap, rng)?
            };
            rows_from(
                &run.estimate,
                run.generations
                    .iter()
                    .map(|g| (g.stopping_time, g.twisted_index, g.twist.map(|s| (s.log_qh_sum, s.log_h_sum)))),
            )
        }
        FilterAlgo::Bootstrap | FilterAlgo::TwistedBootstrap => {
            let run = if algo == FilterAlgo::Bootstrap {
                bootstrap_filter(model, ys, n, rng)?
            } else {
                twisted_bootstrap_filter(model, twist, ys, n, rng)?
            };
            rows_from(&run.estimate, run.generations.iter().map(|g| (n, g.twisted_index, None)))
        }
    })
}

/// Run one filter over `ys` on stream `FILTER_STREAM`.
pub fn run_filter(cfg: &FilterConfig, algo: FilterAlgo, ys: &[f64], seed: u64) -> Result<Vec<FilterRow>> {
    cfg.validate()?;
    let mut rng = derive_stream(SeedSpec::new(seed, FILTER_STREAM));
    match cfg.model {
        ModelConfig::LinearGaussian(p) => filter_generic(&lg_model(p)?, &lg_twist(&p, cfg.lag, ys)?, cfg, algo, ys, &mut rng),
        ModelConfig::StochasticVolatility(p) => {
            if matches!(algo, FilterAlgo::Bootstrap | FilterAlgo::TwistedBootstrap) {
                return Err(Error::Config(
                    "the bootstrap filters need an observation density, which the stochastic-volatility model lacks".into(),
                ));
            }
            filter_generic(&sv_model(p)?, &sv_twist(&p, cfg.lag, ys)?, cfg, algo, ys, &mut rng)
        }
    }
}

/// Config for `variance-grid`. Grid axes are standard deviations; the
/// model uses `nu2 = nu^2` and `tau2 = tau^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_phi")]
    pub phi: f64,
    pub nu_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub replicates: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(flatten)]
    pub abc: AbcConfig,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_phi() -> f64 {
    0.9
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu_values.is_empty() || self.tau_values.is_empty() {
            return Err(Error::Config("grid axes must be nonempty".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config("at least two replicates are needed for a variance".into()));
        }
        for &nu in &self.nu_values {
            for &tau in &self.tau_values {
                LinearGaussianParams::new(self.phi, nu * nu, tau * tau).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        FilterConfig {
            model: ModelConfig::LinearGaussian(LinearGaussianParams::new(self.phi, 1.0, 1.0)?),
            steps: self.steps,
            particles: self.particles,
            abc: self.abc,
            lag: self.lag,
            cap: self.cap,
        }
        .validate()
    }

    /// Stream ids of one cell: the dataset, then `R` alive replicates,
    /// then `R` twisted replicates.
    pub fn streams(&self, cell: usize) -> (u64, impl Fn(usize) -> u64, impl Fn(usize) -> u64) {
        let r = self.replicates as u64;
        let base = cell as u64 * (2 * r + 1);
        (base, move |i| base + 1 + i as u64, move |i| base + 1 + r + i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub nu: f64,
    pub tau: f64,
    pub log_var_alive: Option<f64>,
    pub log_var_twisted: Option<f64>,
    pub log_var_diff: Option<f64>,
    pub status: String,
}

/// Combine replicate log-estimates into a cell; failed replicates or a zero
/// variance leave the difference missing.
pub fn grid_cell(nu: f64, tau: f64, alive: &[Result<f64>], twisted: &[Result<f64>]) -> GridCell {
    let collect = |xs: &[Result<f64>]| -> std::result::Result<Vec<f64>, String> {
        xs.iter()
            .map(|r| r.as_ref().map(|v| *v).map_err(|e| e.to_string()))
            .collect()
    };
    let mut cell = GridCell {
        nu,
        tau,
        log_var_alive: None,
        log_var_twisted: None,
        log_var_diff: None,
        status: "ok".into(),
    };
    match (collect(alive), collect(twisted)) {
        (Ok(a), Ok(t)) => {
            cell.log_var_alive = log_sample_variance_of_exp(&a);
            cell.log_var_twisted = log_sample_variance_of_exp(&t);
            match (cell.log_var_alive, cell.log_var_twisted) {
                (Some(a), Some(t)) => cell.log_var_diff = Some(a - t),
                _ => cell.status = "missing: zero variance".into(),
            }
        }
        (Err(e), _) | (_, Err(e)) => cell.status = format!("missing: {e}"),
    }
    cell
}

/// Log variance of the alive and alive-twisted estimates on one simulated
/// dataset per `(nu, tau)` pair. Replicates run in parallel; each owns a
/// fixed stream id, so results do not depend on scheduling.
pub fn variance_grid(cfg: &GridConfig, seed: u64) -> Result<Vec<GridCell>> {
    cfg.validate()?;
    let pairs: Vec<(f64, f64)> = cfg
        .nu_values
        .iter()
        .flat_map(|&nu| cfg.tau_values.iter().map(move |&tau| (nu, tau)))
        .collect();
    let kernel = cfg.abc.kernel()?;
    let r = cfg.replicates;
    pairs
        .iter()
        .enumerate()
        .map(|(cell, &(nu, tau))| {
            let params = LinearGaussianParams::new(cfg.phi, nu * nu, tau * tau)?;
            let model = lg_model(params)?;
            let (data_stream, alive_stream, twisted_stream) = cfg.streams(cell);
            let ys = simulate(&model, cfg.steps, &mut derive_stream(SeedSpec::new(seed, data_stream))).observations;
            let twist = lg_twist(&params, cfg.lag, &ys)?;
            let jobs: Vec<Result<f64>> = (0..2 * r)
                .into_par_iter()
                .map(|j| {
                    if j < r {
                        let mut rng = derive_stream(SeedSpec::new(seed, alive_stream(j)));
                        alive_filter(&model, &kernel, &ys, cfg.particles, cfg.cap, &mut rng).map(|run| run.estimate.log_total)
                    } else {
                        let mut rng = derive_stream(SeedSpec::new(seed, twisted_stream(j - r)));
                        alive_twisted_filter(&model, &kernel, &twist, &ys, cfg.particles, cfg.cap, &mut rng)
                            .map(|run| run.estimate.log_total)
                    }
                })
                .collect();
            Ok(grid_cell(nu, tau, &jobs[..r], &jobs[r..]))
        })
        .collect()
}

/// Config for `pmmh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhConfig {
    #[serde(default)]
    pub fixed: SvFixed,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub proposal: ProposalSpec,
    pub iterations: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(flatten)]
    pub abc: AbcConfig,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Use only the first `T` returns.
    #[serde(rename = "T", default)]
    pub steps: Option<usize>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn default_chains() -> usize {
    1
}

fn default_burn_in() -> f64 {
    0.1
}

fn default_max_lag() -> usize {
    50
}

impl PmmhConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.proposal.validate()?;
        self.abc.kernel()?;
        self.fixed
            .params(&SvTheta {
                f: 0.0,
                nu2: 1.0,
                gamma: 1.0,
            })
            .validate()?;
        if self.particles < 2 || self.lag == 0 || self.chains == 0 || self.cap < self.particles {
            return Err(Error::Config("need N >= 2, lag >= 1, chains >= 1 and cap >= N".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn_in_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn target(&self, kind: FilterKind, ys: &[f64]) -> Result<SvTarget> {
        self.validate()?;
        let ys = match self.steps {
            Some(t) if t > ys.len() => {
                return Err(Error::Config(format!("T = {t} exceeds the {} available observations", ys.len())))
            }
            Some(t) => ys[..t].to_vec(),
            None => ys.to_vec(),
        };
        Ok(SvTarget {
            ys,
            fixed: self.fixed,
            prior: self.prior,
            proposal: self.proposal,
            kernel: self.abc.kernel()?,
            filter: FilterSettings {
                kind,
                n: self.particles,
                lag: self.lag,
                cap: self.cap,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRow {
    pub chain: usize,
    pub iteration: usize,
    #[serde(rename = "F")]
    pub f: f64,
    pub nu2: f64,
    pub gamma: f64,
    pub log_zhat: f64,
    pub accepted: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfRow {
    pub chain: usize,
    pub lag: usize,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    pub nu2: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub stream_id: u64,
    pub iterations: usize,
    pub accepted: usize,
    pub acceptance_rate: Option<f64>,
    pub cap_exceeded: usize,
    pub filter_failures: usize,
    pub init_redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmmhSummary {
    pub algo: FilterKind,
    pub seed: u64,
    pub observations: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub acceptance_rate: Option<f64>,
    pub cap_exceeded: usize,
    pub chains: Vec<ChainSummary>,
    pub twist: Option<String>,
}

pub struct PmmhOutput {
    pub records: Vec<ChainRecord<SvTheta, f64>>,
    pub summary: PmmhSummary,
}

impl PmmhOutput {
    pub fn chain_rows(&self) -> Vec<ChainRow> {
        self.records
            .iter()
            .enumerate()
            .flat_map(|(chain, rec)| {
                rec.steps.iter().map(move |s| ChainRow {
                    chain,
                    iteration: s.iteration,
                    f: s.theta.f,
                    nu2: s.theta.nu2,
                    gamma: s.theta.gamma,
                    log_zhat: s.log_zhat,
                    accepted: s.accepted as u8,
                })
            })
            .collect()
    }

    /// Post-burn-in series of one parameter for one chain.
    pub fn series(&self, chain: usize, pick: impl Fn(&SvTheta) -> f64) -> Vec<f64> {
        self.records[chain].steps[self.summary.burn_in..]
            .iter()
            .map(|s| pick(&s.theta))
            .collect()
    }

    /// Per-chain autocorrelations after burn-in; a parameter that never
    /// moved has no ACF and is left empty.
    pub fn acf_rows(&self, max_lag: usize) -> Vec<AcfRow> {
        let mut rows = Vec::new();
        for chain in 0..self.records.len() {
            let get = |pick: fn(&SvTheta) -> f64| acf(&self.series(chain, pick), max_lag).ok();
            let (f, nu2, gamma) = (get(|t| t.f), get(|t| t.nu2), get(|t| t.gamma));
            for lag in 0..=max_lag {
                rows.push(AcfRow {
                    chain,
                    lag,
                    f: f.as_ref().map(|v| v[lag]),
                    nu2: nu2.as_ref().map(|v| v[lag]),
                    gamma: gamma.as_ref().map(|v| v[lag]),
                });
            }
        }
        rows
    }
}

/// Independent chains in parallel; chain `c` uses stream id `c`.
pub fn run_pmmh(cfg: &PmmhConfig, kind: FilterKind, ys: &[f64], seed: u64) -> Result<PmmhOutput> {
    let target = cfg.target(kind, ys)?;
    let max_lag = cfg.max_lag;
    let burn_in = (cfg.burn_in_fraction * cfg.iterations as f64).floor() as usize;
    if cfg.iterations + 1 - burn_in <= max_lag {
        return Err(Error::Config(format!(
            "{} post-burn-in draws are too few for ACF lag {max_lag}",
            cfg.iterations + 1 - burn_in
        )));
    }
    let records = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, cfg.iterations, &mut derive_stream(SeedSpec::new(seed, c as u64))))
        .collect::<Result<Vec<_>>>()?;
    let chains: Vec<ChainSummary> = records
        .iter()
        .enumerate()
        .map(|(c, r)| ChainSummary {
            chain: c,
            stream_id: c as u64,
            iterations: r.final_state.iteration,
            accepted: r.final_state.accept_count,
            acceptance_rate: r.acceptance_rate(),
            cap_exceeded: r.final_state.cap_exceeded,
            filter_failures: r.final_state.filter_failures,
            init_redraws: r.init_redraws,
        })
        .collect();
    let total_iter: usize = chains.iter().map(|c| c.iterations).sum();
    let total_acc: usize = chains.iter().map(|c| c.accepted).sum();
    let twist = match kind {
        FilterKind::Alive => None,
        FilterKind::AliveTwisted => sv_twist(
            &cfg.fixed.params(&SvTheta {
                f: 0.0,
                nu2: 1.0,
                gamma: 1.0,
            }),
            cfg.lag,
            &target.ys,
        )?
        .surrogate
        .map(|s| format!("lag {}; {s}", cfg.lag)),
    };
    Ok(PmmhOutput {
        records,
        summary: PmmhSummary {
            algo: kind,
            seed,
            observations: target.ys.len(),
            iterations: cfg.iterations,
            burn_in,
            acceptance_rate: (total_iter > 0).then(|| total_acc as f64 / total_iter as f64),
            cap_exceeded: chains.iter().map(|c| c.cap_exceeded).sum(),
            chains,
            twist,
        },
    })
}

/// `r_n = log(p_n / p_{n-1})`.
pub fn returns_from_prices(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = prices.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Data(format!("non-positive price {p}")));
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Log returns from a `date,close` CSV with strictly ascending ISO dates,
/// optionally truncated to the first `steps` returns.
pub fn load_returns(path: &Path, steps: Option<usize>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut prev: Option<NaiveDate> = None;
    let mut prices = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let (d, p) = match (rec.get(0), rec.get(1)) {
            (Some(d), Some(p)) => (d.trim(), p.trim()),
            _ => return Err(Error::Data(format!("row {}: expected date and price", line + 1))),
        };
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("row {}: bad date {d:?}: {e}", line + 1)))?;
        if prev.is_some_and(|q| date <= q) {
            return Err(Error::Data(format!("row {}: dates are not strictly ascending", line + 1)));
        }
        prev = Some(date);
        let price: f64 = p
            .parse()
            .map_err(|_| Error::Data(format!("row {}: bad price {p:?}", line + 1)))?;
        prices.push(price);
    }
    if prices.len() < 2 {
        return Err(Error::Data("need at least two prices".into()));
    }
    let returns = returns_from_prices(&prices)?;
    match steps {
        Some(t) if t > returns.len() => Err(Error::Data(format!(
            "asked for {t} returns but only {} are available",
            returns.len()
        ))),
        Some(t) => Ok(returns[..t].to_vec()),
        None => Ok(returns),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_prices(rows: &[(&str, f64)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,close").unwrap();
        for (d, p) in rows {
            writeln!(f, "{d},{p}").unwrap();
        }
        f
    }

    #[test]
    fn returns_examples() {
        assert_eq!(returns_from_prices(&[100.0, 100.0]).unwrap(), vec![0.0]);
        assert!((returns_from_prices(&[100.0, 110.0]).unwrap()[0] - 1.1f64.ln()).abs() < 1e-15);
        assert!(returns_from_prices(&[100.0, 0.0]).is_err());
        assert!(returns_from_prices(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn load_checks_order_and_truncates() {
        let f = write_prices(&[("2009-12-10", 100.0), ("2009-12-11", 101.0), ("2009-12-14", 99.5)]);
        assert_eq!(load_returns(f.path(), None).unwrap().len(), 2);
        assert_eq!(load_returns(f.path(), Some(1)).unwrap().len(), 1);
        assert!(load_returns(f.path(), Some(3)).is_err());
        let bad = write_prices(&[("2009-12-11", 100.0), ("2009-12-10", 101.0)]);
        assert!(load_returns(bad.path(), None).is_err());
        let dup = write_prices(&[("2009-12-11", 100.0), ("2009-12-11", 101.0)]);
        assert!(load_returns(dup.path(), None).is_err());
        let neg = write_prices(&[("2009-12-10", 100.0), ("2009-12-11", 0.0)]);
        assert!(load_returns(neg.path(), None).is_err());
    }

    #[test]
    fn zero_variance_cell_is_missing() {
        let same: Vec<Result<f64>> = vec![Ok(-3.0), Ok(-3.0)];
        let cell = grid_cell(1.0, 1.0, &same, &same);
        assert_eq!(cell.log_var_diff, None);
        assert!(cell.status.starts_with("missing"));
        let failed: Vec<Result<f64>> = vec![
            Ok(-3.0),
            Err(Error::CapExceeded {
                step: 2,
                draws: 10,
                accepted: 1,
                target: 5,
            }),
        ];
        let cell = grid_cell(1.0, 1.0, &failed, &same);
        assert!(cell.status.contains("cap exceeded"));
    }

    #[test]
    fn grid_stream_layout_is_disjoint() {
        let cfg: GridConfig = serde_json::from_str(
            r#"{"nu_values":[1.0,2.0],"tau_values":[1.0],"replicates":3,"T":5,"N":10,"epsilon":1.5}"#,
        )
        .unwrap();
        let mut ids = Vec::new();
        for cell in 0..2 {
            let (d, a, t) = cfg.streams(cell);
            ids.push(d);
            ids.extend((0..3).map(&a));
            ids.extend((0..3).map(&t));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
    }

    #[test]
    fn config_parsing() {
        let cfg: FilterConfig = serde_json::from_str(
            r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":10,"N":50,"epsilon":1.5}"#,
        )
        .unwrap();
        assert_eq!(cfg.lag, 5);
        assert_eq!(cfg.abc.ball_mode, BallMode::Relative);
        cfg.validate().unwrap();
        let sv: FilterConfig = serde_json::from_str(
            r#"{"model":{"kind":"stochastic_volatility","F":0.9,"nu2":0.01,"alpha":1.95,"beta":0.05,"gamma":0.5,"delta":0},
                "T":10,"N":50,"epsilon":3.5,"ball_mode":"absolute","lag":3}"#,
        )
        .unwrap();
        sv.validate().unwrap();
        assert!(serde_json::from_str::<FilterConfig>(r#"{"model":{"kind":"other"},"T":1,"N":2,"epsilon":1}"#).is_err());
        let bad = FilterConfig { particles: 1, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn filter_runner_is_deterministic() {
        let cfg: FilterConfig = serde_json::from_str(
            r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":12,"N":30,"epsilon":1.5}"#,
        )
        .unwrap();
        let ys: Vec<f64> = simulate_dataset(&cfg.model, 12, 3).unwrap().iter().map(|r| r.observation).collect();
        for algo in [FilterAlgo::Alive, FilterAlgo::AliveTwisted, FilterAlgo::Bootstrap, FilterAlgo::TwistedBootstrap] {
            let a = run_filter(&cfg, algo, &ys, 9).unwrap();
            let b = run_filter(&cfg, algo, &ys, 9).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 12);
            assert_eq!(a[0].twisted_index.is_some(), algo.is_twisted());
        }
    }
}
