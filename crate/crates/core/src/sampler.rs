//! One simulated round of testing: which individuals of each stratum get
//! tested.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PopulationSpec;

/// Largest population [`enumerate_outcomes`] accepts.
pub const ENUMERATION_LIMIT: u64 = 30;

/// Realised tested counts `N_Tsi` for a population of size `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestingOutcome {
    n: u64,
    counts: Vec<[u64; 2]>,
}

impl TestingOutcome {
    pub fn new(n: u64, counts: Vec<[u64; 2]>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidOutcome("at least one symptom class is required".into()));
        }
        let tested: u64 = counts.iter().map(|r| r[0] + r[1]).sum();
        if tested > n {
            return Err(Error::InvalidOutcome(format!(
                "{tested} tested individuals exceed the population of {n}"
            )));
        }
        Ok(Self { n, counts })
    }

    /// Checks `N_Tsi <= N_si` against the population the outcome came from.
    pub fn check_against(&self, spec: &PopulationSpec) -> Result<()> {
        if spec.n() != self.n || spec.strata() != self.strata() {
            return Err(Error::InvalidOutcome("outcome does not match population shape".into()));
        }
        for (s, (c, size)) in self.counts.iter().zip(spec.sizes()).enumerate() {
            for i in 0..2 {
                if c[i] > size[i] {
                    return Err(Error::InvalidOutcome(format!(
                        "N_T[{s}][{i}] = {} exceeds stratum size {}",
                        c[i], size[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn strata(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[[u64; 2]] {
        &self.counts
    }

    /// `N_Ts = N_Ts0 + N_Ts1`.
    pub fn class_tested(&self, s: usize) -> u64 {
        self.counts[s][0] + self.counts[s][1]
    }

    /// `N_Ts1`.
    pub fn class_positive(&self, s: usize) -> u64 {
        self.counts[s][1]
    }

    /// `N_T`.
    pub fn tested(&self) -> u64 {
        self.counts.iter().map(|r| r[0] + r[1]).sum()
    }

    /// `N_T.1`.
    pub fn positive(&self) -> u64 {
        self.counts.iter().map(|r| r[1]).sum()
    }

    /// `rho_Ts = N_Ts / N_T`.
    pub fn tested_class_fractions(&self) -> Result<Vec<f64>> {
        let total = self.tested();
        if total == 0 {
            return Err(Error::EmptySample);
        }
        Ok((0..self.strata())
            .map(|s| self.class_tested(s) as f64 / total as f64)
            .collect())
    }
}

/// Seed plus stream id of a ChaCha8 generator. Equal pairs produce equal
/// draws regardless of which thread runs them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for replicate `replicate` of experiment `experiment`.
    pub fn for_replicate(seed: u64, experiment: u64, replicate: u64) -> Self {
        Self::new(seed, splitmix64(splitmix64(experiment) ^ replicate))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `N_Tsi ~ Bin(N_si, pi_si)` independently for every stratum.
///
/// Equivalent in law to testing every individual with an independent
/// Bernoulli coin, at O(S) cost.
pub fn draw_outcome<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> TestingOutcome {
    let counts = spec
        .sizes()
        .iter()
        .zip(spec.testing())
        .map(|(size, pi)| [binomial(rng, size[0], pi[0]), binomial(rng, size[1], pi[1])])
        .collect();
    TestingOutcome { n: spec.n(), counts }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability checked in (0, 1)").sample(rng)
    }
}

/// Every possible outcome of `spec` with its exact probability.
pub fn enumerate_outcomes(spec: &PopulationSpec) -> Result<Vec<(TestingOutcome, f64)>> {
    if spec.n() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(spec.n()));
    }
    // flattened strata (s, i) with their binomial pmfs
    let pmfs: Vec<Vec<f64>> = spec
        .sizes()
        .iter()
        .zip(spec.testing())
        .flat_map(|(size, pi)| [binomial_pmf(size[0], pi[0]), binomial_pmf(size[1], pi[1])])
        .collect();

    let mut out = Vec::new();
    let mut index = vec![0usize; pmfs.len()];
    loop {
        let prob: f64 = index.iter().zip(&pmfs).map(|(&k, pmf)| pmf[k]).product();
        let counts = index.chunks(2).map(|c| [c[0] as u64, c[1] as u64]).collect();
        out.push((TestingOutcome { n: spec.n(), counts }, prob));

        let mut d = 0;
        loop {
            if d == index.len() {
                return Ok(out);
            }
            index[d] += 1;
            if index[d] < pmfs[d].len() {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n as usize + 1);
    let mut coef = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coef = coef * (n - k + 1) as f64 / k as f64;
        }
        pmf.push(coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
    }
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pi: f64) -> PopulationSpec {
        PopulationSpec::new(20, &[[0.4, 0.1], [0.3, 0.2]], vec![[pi; 2]; 2]).unwrap()
    }

    #[test]
    fn certain_testing() {
        let s = spec(1.0);
        let out = draw_outcome(&s, &mut RngStream::new(0, 0).rng());
        assert_eq!(out.counts(), s.sizes());
    }

    #[test]
    fn no_testing() {
        let out = draw_outcome(&spec(0.0), &mut RngStream::new(0, 0).rng());
        assert_eq!(out.tested(), 0);
        assert_eq!(out.tested_class_fractions(), Err(Error::EmptySample));
    }

    #[test]
    fn fixed_stream_is_reproducible() {
        let s = spec(0.5);
        let stream = RngStream::for_replicate(42, 3, 17);
        let a = draw_outcome(&s, &mut stream.rng());
        let b = draw_outcome(&s, &mut stream.rng());
        assert_eq!(a, b);
        assert_ne!(stream, RngStream::for_replicate(42, 3, 18));
    }

    #[test]
    fn two_fair_coins() {
        let s = PopulationSpec::from_sizes(vec![[2, 0]], vec![[0.5, 0.5]]).unwrap();
        let all = enumerate_outcomes(&s).unwrap();
        let probs: Vec<(u64, f64)> = all.iter().map(|(o, p)| (o.tested(), *p)).collect();
        assert_eq!(probs, vec![(0, 0.25), (1, 0.5), (2, 0.25)]);
    }

    #[test]
    fn enumeration_limit() {
        let s = PopulationSpec::from_sizes(vec![[31, 0]], vec![[0.5; 2]]).unwrap();
        assert_eq!(enumerate_outcomes(&s).unwrap_err(), Error::TooLarge(31));
    }

    #[test]
    fn outcome_validation() {
        assert!(TestingOutcome::new(10, vec![[6, 5]]).is_err());
        let s = spec(0.5);
        let too_many = TestingOutcome::new(20, vec![[9, 0], [0, 0]]).unwrap();
        assert!(too_many.check_against(&s).is_err());
    }
}
