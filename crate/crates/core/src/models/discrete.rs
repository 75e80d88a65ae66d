//! Finite-state HMM with finite observation alphabet. Its ABC normalising
//! constant is computable exactly, which makes it the reference model for
//! unbiasedness checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HmmModel;
use crate::abc::Acceptance;
use crate::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// `initial` is the law of `K_0`; `accept[y][u]` says whether a simulated
/// symbol `u` lies in the ball around the observed symbol `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHmmParams {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub accept: Vec<Vec<bool>>,
}

fn check_prob_row(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidParameter(format!(
            "{what} row has length {}, expected {len}",
            row.len()
        )));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidParameter(format!("{what} row sums to {sum}")));
    }
    Ok(())
}

impl DiscreteHmmParams {
    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.accept.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_states();
        let o = self.num_symbols();
        if s == 0 || o == 0 {
            return Err(Error::InvalidParameter("empty state or symbol set".into()));
        }
        check_prob_row(&self.initial, s, "initial")?;
        if self.transition.len() != s || self.emission.len() != s {
            return Err(Error::InvalidParameter("matrix shapes do not match the state count".into()));
        }
        for row in &self.transition {
            check_prob_row(row, s, "transition")?;
        }
        for row in &self.emission {
            check_prob_row(row, o, "emission")?;
        }
        for row in &self.accept {
            if row.len() != o {
                return Err(Error::InvalidParameter("acceptance matrix must be square".into()));
            }
            if !row.iter().any(|&a| a) {
                return Err(Error::InvalidParameter("empty acceptance set".into()));
            }
        }
        Ok(())
    }

    /// `P(U in ball(y) | K = state)`.
    pub fn acceptance_prob(&self, state: usize, y: usize) -> f64 {
        self.emission[state]
            .iter()
            .zip(&self.accept[y])
            .filter(|(_, &a)| a)
            .map(|(p, _)| p)
            .sum()
    }

    /// `beta[t][s] = P(U_{t+1..T-1} all accepted | K_t = s)` with zero-based
    /// `t`, so `beta[T-1]` is all ones.
    pub fn backward_acceptance(&self, ys: &[usize]) -> Vec<Vec<f64>> {
        let s = self.num_states();
        let mut beta = vec![vec![1.0; s]; ys.len()];
        for t in (0..ys.len().saturating_sub(1)).rev() {
            for from in 0..s {
                beta[t][from] = (0..s)
                    .map(|to| self.transition[from][to] * self.acceptance_prob(to, ys[t + 1]) * beta[t + 1][to])
                    .sum();
            }
        }
        beta
    }

    pub fn ball(&self) -> SymbolBall {
        SymbolBall {
            accept: self.accept.clone(),
        }
    }
}

/// Exact log probability that every simulated observation lands in its
/// acceptance set, by the forward recursion.
pub fn discrete_abc_log_marginal(params: &DiscreteHmmParams, ys: &[usize]) -> f64 {
    let s = params.num_states();
    let mut alpha = params.initial.clone();
    let mut log_z = 0.0;
    let mut next = vec![0.0; s];
    for &y in ys {
        for (to, slot) in next.iter_mut().enumerate() {
            let pred: f64 = (0..s).map(|from| alpha[from] * params.transition[from][to]).sum();
            *slot = pred * params.acceptance_prob(to, y);
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_z += c.ln();
        for (a, n) in alpha.iter_mut().zip(&next) {
            *a = n / c;
        }
    }
    log_z
}

/// Sum over every latent path `k_0..k_T` of its probability times the
/// probability that each emission lands in its acceptance set. Exponential
/// in `T`; an independent check on the forward recursion for tiny models.
pub fn enumerate_abc_log_marginal(params: &DiscreteHmmParams, ys: &[usize]) -> f64 {
    let s = params.num_states();
    let t = ys.len();
    let paths = s.pow(t as u32 + 1);
    let mut total = 0.0;
    for code in 0..paths {
        let mut c = code;
        let mut path = Vec::with_capacity(t + 1);
        for _ in 0..=t {
            path.push(c % s);
            c /= s;
        }
        let mut p = params.initial[path[0]];
        for n in 0..t {
            p *= params.transition[path[n]][path[n + 1]];
            let hit: f64 = (0..params.num_symbols())
                .filter(|&u| params.accept[ys[n]][u])
                .map(|u| params.emission[path[n + 1]][u])
                .sum();
            p *= hit;
        }
        total += p;
    }
    total.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBall {
    accept: Vec<Vec<bool>>,
}

impl Acceptance<usize> for SymbolBall {
    fn accepts(&self, simulated: &usize, observed: &usize) -> bool {
        self.accept[*observed][*simulated]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    params: DiscreteHmmParams,
}

impl DiscreteHmm {
    pub fn new(params: DiscreteHmmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &DiscreteHmmParams {
        &self.params
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl HmmModel for DiscreteHmm {
    type State = usize;
    type Obs = usize;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_row(&self.params.initial, rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, prev: &usize, rng: &mut R) -> usize {
        sample_row(&self.params.transition[*prev], rng)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, state: &usize, rng: &mut R) -> usize {
        sample_row(&self.params.emission[*state], rng)
    }

    fn observation_log_density(&self, y: &usize, state: &usize) -> Option<f64> {
        Some(self.params.emission[*state][*y].ln())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn brute_force(params: &DiscreteHmmParams, ys: &[usize]) -> f64 {
        enumerate_abc_log_marginal(params, ys)
    }

    pub(crate) fn two_state() -> DiscreteHmmParams {
        DiscreteHmmParams {
            initial: vec![0.6, 0.4],
            transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            emission: vec![vec![0.9, 0.1], vec![0.25, 0.75]],
            accept: vec![vec![true, false], vec![false, true]],
        }
    }

    fn normalise(row: Vec<f64>) -> Vec<f64> {
        let s: f64 = row.iter().sum();
        let mut out: Vec<f64> = row.iter().map(|x| x / s).collect();
        // push rounding into the largest entry so the row sums to one
        let err = 1.0 - out.iter().sum::<f64>();
        let imax = (0..out.len()).max_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap()).unwrap();
        out[imax] += err;
        out
    }

    fn arb_params() -> impl Strategy<Value = DiscreteHmmParams> {
        (1usize..=3, 1usize..=3)
            .prop_filter("S*O <= 9", |(s, o)| s * o <= 9)
            .prop_flat_map(|(s, o)| {
                let row = move |n: usize| proptest::collection::vec(0.05..1.0f64, n).prop_map(normalise);
                (
                    row(s),
                    proptest::collection::vec(row(s), s),
                    proptest::collection::vec(row(o), s),
                    proptest::collection::vec(
                        proptest::collection::vec(any::<bool>(), o).prop_map(|mut r| {
                            if !r.iter().any(|&a| a) {
                                r[0] = true;
                            }
                            r
                        }),
                        o,
                    ),
                )
            })
            .prop_map(|(initial, transition, emission, accept)| DiscreteHmmParams {
                initial,
                transition,
                emission,
                accept,
            })
    }

    #[test]
    fn accept_everything_has_unit_constant() {
        let mut p = two_state();
        p.accept = vec![vec![true, true], vec![true, true]];
        let ys = [0, 1, 1, 0, 1];
        assert!(discrete_abc_log_marginal(&p, &ys).abs() < 1e-15);
    }

    #[test]
    fn single_state_is_product_of_hit_masses() {
        let p = DiscreteHmmParams {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            emission: vec![vec![0.2, 0.5, 0.3]],
            accept: vec![
                vec![true, false, false],
                vec![true, true, false],
                vec![false, false, true],
            ],
        };
        let ys = [0, 1, 2, 1];
        let expected = 0.2f64.ln() + 0.7f64.ln() + 0.3f64.ln() + 0.7f64.ln();
        assert!((discrete_abc_log_marginal(&p, &ys) - expected).abs() < 1e-14);
    }

    #[test]
    fn two_state_matches_enumeration_at_six_steps() {
        let p = two_state();
        let ys = [0, 1, 1, 0, 0, 1];
        let fwd = discrete_abc_log_marginal(&p, &ys);
        let brute = brute_force(&p, &ys);
        assert!((fwd - brute).abs() < 1e-10, "{fwd} vs {brute}");
    }

    #[test]
    fn backward_consistent_with_forward() {
        let p = two_state();
        let ys = [0, 1, 1, 0, 1];
        let beta = p.backward_acceptance(&ys);
        // Z = sum_{k0} init(k0) sum_{k1} P(k0,k1) a(k1, y0) beta_0(k1)
        let z: f64 = (0..2)
            .map(|k0| {
                p.initial[k0]
                    * (0..2)
                        .map(|k1| p.transition[k0][k1] * p.acceptance_prob(k1, ys[0]) * beta[0][k1])
                        .sum::<f64>()
            })
            .sum();
        assert!((z.ln() - discrete_abc_log_marginal(&p, &ys)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut p = two_state();
        p.transition[0] = vec![0.5, 0.6];
        assert!(DiscreteHmm::new(p).is_err());
        let mut p = two_state();
        p.accept[1] = vec![false, false];
        assert!(DiscreteHmm::new(p).is_err());
        assert!(DiscreteHmm::new(two_state()).is_ok());
    }

    proptest! {
        #[test]
        fn forward_matches_enumeration(p in arb_params(), ys_seed in proptest::collection::vec(0usize..3, 1..=6)) {
            let o = p.num_symbols();
            let ys: Vec<usize> = ys_seed.iter().map(|y| y % o).collect();
            let fwd = discrete_abc_log_marginal(&p, &ys);
            let brute = brute_force(&p, &ys);
            if brute == f64::NEG_INFINITY {
                prop_assert_eq!(fwd, f64::NEG_INFINITY);
            } else {
                prop_assert!((fwd - brute).abs() < 1e-10);
            }
        }
    }
}
