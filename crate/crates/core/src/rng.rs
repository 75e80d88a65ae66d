//! Deterministic, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and
//! positioned on its own 64-bit stream id, so replicate `r` of an
//! experiment draws the same numbers whether it runs first, last, or on
//! another thread.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Same master seed, different stream.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

/// A stateful uniform-variate generator owned by one execution context.
#[derive(Debug, Clone)]
pub struct Stream(ChaCha8Rng);

pub fn derive_stream(seed: SeedSpec) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
    rng.set_stream(seed.stream_id);
    Stream(rng)
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Draw from `N(mean, variance)`. Ziggurat via `rand_distr::StandardNormal`.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64) -> f64 {
    debug_assert!(variance >= 0.0);
    if variance == 0.0 {
        return mean;
    }
    let z: f64 = StandardNormal.sample(rng);
    mean + variance.sqrt() * z
}

/// Uniform index in `0..n` (zero-based).
pub fn uniform_int<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "uniform_int needs a nonempty range");
    rng.random_range(0..n)
}

/// Cumulative weights for repeated categorical draws, `O(log n)` each.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CategoricalTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        checked_total(weights)?;
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Ok(Self {
            cumulative,
            last_positive,
        })
    }

    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidCategoricalWeights);
        }
        let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        Self::new(&weights)
    }

    /// Zero-based index; consumes one uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty table");
        let target = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        // Rounding can leave `target` a hair above the running sum.
        if i < self.cumulative.len() {
            i
        } else {
            self.last_positive
        }
    }
}

/// Zero-based index drawn with probability proportional to `weights[i]`.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<usize> {
    Ok(CategoricalTable::new(weights)?.sample(rng))
}

/// Categorical draw from unnormalised log-weights.
pub fn categorical_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Result<usize> {
    Ok(CategoricalTable::from_log_weights(log_weights)?.sample(rng))
}

pub(crate) fn checked_total(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidCategoricalWeights);
        }
        total += w;
    }
    if total > 0.0 && total.is_finite() {
        Ok(total)
    } else {
        Err(Error::InvalidCategoricalWeights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_uniforms(seed: SeedSpec) -> Vec<f64> {
        let mut s = derive_stream(seed);
        (0..100).map(|_| s.random::<f64>()).collect()
    }

    #[test]
    fn equal_seeds_repeat() {
        let a = first_uniforms(SeedSpec::new(42, 0));
        let b = first_uniforms(SeedSpec::new(42, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn streams_and_seeds_differ() {
        let base = first_uniforms(SeedSpec::new(42, 0));
        let other_stream = first_uniforms(SeedSpec::new(42, 1));
        let other_seed = first_uniforms(SeedSpec::new(43, 0));
        assert!(base.iter().zip(&other_stream).all(|(a, b)| a != b));
        assert!(base.iter().zip(&other_seed).all(|(a, b)| a != b));
    }

    #[test]
    fn single_support_point() {
        let mut s = derive_stream(SeedSpec::new(1, 0));
        for _ in 0..1000 {
            assert_eq!(categorical(&mut s, &[0.0, 0.0, 5.0]).unwrap(), 2);
        }
    }

    #[test]
    fn degenerate_gaussian() {
        let mut s = derive_stream(SeedSpec::new(1, 0));
        assert_eq!(gaussian(&mut s, 3.0, 0.0), 3.0);
    }

    #[test]
    fn rejects_bad_weights() {
        let mut s = derive_stream(SeedSpec::new(1, 0));
        assert!(matches!(
            categorical(&mut s, &[0.0, 0.0]),
            Err(Error::InvalidCategoricalWeights)
        ));
        assert!(categorical(&mut s, &[1.0, -0.5]).is_err());
        assert!(categorical(&mut s, &[]).is_err());
        assert!(categorical(&mut s, &[f64::NAN, 1.0]).is_err());
        assert!(categorical_log(&mut s, &[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn fair_coin_frequency() {
        let mut s = derive_stream(SeedSpec::new(7, 3));
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| categorical(&mut s, &[1.0, 1.0]).unwrap() == 0)
            .count();
        let freq = ones as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn log_weights_match_linear() {
        let mut a = derive_stream(SeedSpec::new(9, 0));
        let mut b = derive_stream(SeedSpec::new(9, 0));
        let w = [0.2, 0.5, 0.3];
        let lw: Vec<f64> = w.iter().map(|x: &f64| x.ln() - 700.0).collect();
        for _ in 0..200 {
            assert_eq!(
                categorical(&mut a, &w).unwrap(),
                categorical_log(&mut b, &lw).unwrap()
            );
        }
    }

    #[test]
    fn table_matches_linear_scan() {
        let weights = [0.0, 0.3, 0.0, 1.2, 0.5, 0.0];
        let table = CategoricalTable::new(&weights).unwrap();
        let mut a = derive_stream(SeedSpec::new(5, 0));
        let mut b = derive_stream(SeedSpec::new(5, 0));
        let total: f64 = weights.iter().sum();
        for _ in 0..10_000 {
            let target = b.random::<f64>() * total;
            let mut acc = 0.0;
            let expected = weights
                .iter()
                .position(|&w| {
                    acc += w;
                    target < acc
                })
                .unwrap_or(4);
            assert_eq!(table.sample(&mut a), expected);
        }
    }
}
