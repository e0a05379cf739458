//! Maximum-entropy estimates of unknown symptom-class shares.
//!
//! The share vector is taken to be uniformly distributed on the slab
//! `{rho : a_s <= rho_s <= b_s, sum_s rho_s = 1}` and each share is estimated
//! by its mean under that density.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RngStream;

const BOUND_TOL: f64 = 1e-12;

/// Below this acceptance rate the sampler gives up.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-6;

/// Attempts made before the acceptance rate is judged.
const STARVATION_WINDOW: u64 = 10_000_000;

/// Box-constrained slice of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSlab {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SimplexSlab {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let slab = Self { lower, upper };
        slab.validate()?;
        Ok(slab)
    }

    /// A slab pinned to a single share vector.
    pub fn point(shares: Vec<f64>) -> Result<Self> {
        Self::new(shares.clone(), shares)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument(format!(
                "slab bounds have lengths {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (s, (&a, &b)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "slab bounds for class {s} violate 0 <= a <= b <= 1 (a = {a}, b = {b})"
                )));
            }
        }
        let low: f64 = self.lower.iter().sum();
        let high: f64 = self.upper.iter().sum();
        if low > 1.0 + BOUND_TOL || high < 1.0 - BOUND_TOL {
            return Err(Error::EmptyRegion);
        }
        Ok(())
    }

    pub fn strata(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    /// Mass left after every class receives its lower bound.
    fn slack(&self) -> f64 {
        (1.0 - self.lower.iter().sum::<f64>()).max(0.0)
    }
}

/// Monte Carlo estimate of the slab mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub accepted: u64,
    pub attempts: u64,
}

impl ShareEstimate {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }
}

/// `E(rho_s)` under the uniform density on `slab`, by rejection sampling.
///
/// Candidates are drawn uniformly from the sub-simplex `{rho >= a}` (an
/// affine image of the standard simplex, sampled through normalised
/// exponentials) and rejected when they break an upper bound. A degenerate
/// slab returns its lower bounds exactly with zero standard error.
pub fn expected_shares(slab: &SimplexSlab, rng: RngStream, n_samples: u64) -> Result<ShareEstimate> {
    slab.validate()?;
    let strata = slab.strata();
    if slab.is_degenerate() {
        return Ok(ShareEstimate {
            mean: slab.lower.clone(),
            std_error: vec![0.0; strata],
            accepted: 0,
            attempts: 0,
        });
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let slack = slab.slack();
    let mut rng = rng.rng();
    let mut sum = vec![0.0; strata];
    let mut sum_sq = vec![0.0; strata];
    let mut draw = vec![0.0; strata];
    let mut accepted = 0u64;
    let mut attempts = 0u64;

    while accepted < n_samples {
        attempts += 1;
        sample_subsimplex(&mut rng, &slab.lower, slack, &mut draw);
        if draw.iter().zip(&slab.upper).all(|(r, b)| *r <= *b) {
            accepted += 1;
            for s in 0..strata {
                sum[s] += draw[s];
                sum_sq[s] += draw[s] * draw[s];
            }
        }
        if attempts.is_multiple_of(STARVATION_WINDOW) {
            let rate = accepted as f64 / attempts as f64;
            if rate < MIN_ACCEPTANCE_RATE {
                return Err(Error::RejectionStarvation { rate, attempts });
            }
        }
    }

    let n = accepted as f64;
    let raw: Vec<f64> = sum.iter().map(|x| x / n).collect();
    let total: f64 = raw.iter().sum();
    let mean = raw.iter().map(|m| m / total).collect();
    let std_error = (0..strata)
        .map(|s| {
            if accepted < 2 {
                return f64::INFINITY;
            }
            let var = (sum_sq[s] - n * raw[s] * raw[s]) / (n - 1.0);
            (var.max(0.0) / n).sqrt()
        })
        .collect();
    Ok(ShareEstimate { mean, std_error, accepted, attempts })
}

fn sample_subsimplex<R: Rng + ?Sized>(rng: &mut R, lower: &[f64], slack: f64, out: &mut [f64]) {
    let mut total = 0.0;
    for x in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *x = e;
        total += e;
    }
    for (x, a) in out.iter_mut().zip(lower) {
        *x = a + slack * (*x / total);
    }
}

/// Slab mean using the closed form where one exists (degenerate slab, one or
/// two classes) and Monte Carlo otherwise.
pub fn slab_mean(slab: &SimplexSlab, samples: u64, seed: u64) -> Result<Vec<f64>> {
    slab.validate()?;
    if slab.is_degenerate() {
        return Ok(slab.lower.clone());
    }
    match slab.strata() {
        1 => Ok(vec![1.0]),
        2 => {
            // rho_1 is uniform on the intersection of [a_1, b_1] and [1 - b_0, 1 - a_0]
            let lo = slab.lower[1].max(1.0 - slab.upper[0]);
            let hi = slab.upper[1].min(1.0 - slab.lower[0]);
            let rho1 = 0.5 * (lo + hi);
            Ok(vec![1.0 - rho1, rho1])
        }
        _ => Ok(expected_shares(slab, RngStream::new(seed, 0), samples)?.mean),
    }
}

/// Two-class share estimate with `rho_1` uniform on `(N_T1 / N, N_T1 / N_T)`:
/// `rho_1 = N_T1 / (2 N_T) * (N_T / N + 1)`, `rho_0 = 1 - rho_1`.
pub fn covid_shares(n: u64, n_tested: u64, n_tested_symptomatic: u64) -> Result<(f64, f64)> {
    if n_tested == 0 || n_tested > n {
        return Err(Error::InvalidArgument(format!(
            "need 0 < N_T <= N (N_T = {n_tested}, N = {n})"
        )));
    }
    if n_tested_symptomatic > n_tested {
        return Err(Error::InvalidArgument(format!(
            "N_T1 = {n_tested_symptomatic} exceeds N_T = {n_tested}"
        )));
    }
    let rho1 = n_tested_symptomatic as f64 / (2.0 * n_tested as f64)
        * (n_tested as f64 / n as f64 + 1.0);
    Ok((1.0 - rho1, rho1))
}

/// The slab whose mean [`covid_shares`] evaluates in closed form.
pub fn covid_slab(n: u64, n_tested: u64, n_tested_symptomatic: u64) -> Result<SimplexSlab> {
    if n_tested == 0 || n_tested > n || n_tested_symptomatic > n_tested {
        return Err(Error::InvalidArgument("need 0 < N_T <= N and N_T1 <= N_T".into()));
    }
    let a1 = n_tested_symptomatic as f64 / n as f64;
    let b1 = n_tested_symptomatic as f64 / n_tested as f64;
    SimplexSlab::new(vec![1.0 - b1, a1], vec![1.0 - a1, b1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_mass() {
        let slab = SimplexSlab::point(vec![0.8, 0.2]).unwrap();
        let est = expected_shares(&slab, RngStream::new(1, 0), 10).unwrap();
        assert_eq!(est.mean, vec![0.8, 0.2]);
        assert_eq!(est.std_error, vec![0.0, 0.0]);
    }

    #[test]
    fn two_class_interval() {
        let slab = SimplexSlab::new(vec![0.8, 0.1], vec![0.9, 0.2]).unwrap();
        let est = expected_shares(&slab, RngStream::new(7, 3), 20_000).unwrap();
        for (m, (want, se)) in est.mean.iter().zip([0.85, 0.15].iter().zip(&est.std_error)) {
            assert!((m - want).abs() <= 3.0 * se, "{m} vs {want} (se {se})");
        }
        assert_eq!(est.acceptance_rate(), 1.0);
        let exact = slab_mean(&slab, 0, 0).unwrap();
        assert_abs_diff_eq!(exact[0], 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(exact[1], 0.15, epsilon = 1e-15);
    }

    #[test]
    fn full_simplex_is_symmetric() {
        let slab = SimplexSlab::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let est = expected_shares(&slab, RngStream::new(11, 0), 30_000).unwrap();
        for (m, se) in est.mean.iter().zip(&est.std_error) {
            assert!((m - 1.0 / 3.0).abs() <= 3.0 * se);
        }
        assert_abs_diff_eq!(est.mean.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_region_rejected() {
        assert_eq!(
            SimplexSlab::new(vec![0.6, 0.6], vec![0.7, 0.7]).unwrap_err(),
            Error::EmptyRegion
        );
        assert_eq!(
            SimplexSlab::new(vec![0.1, 0.1], vec![0.2, 0.3]).unwrap_err(),
            Error::EmptyRegion
        );
        assert!(SimplexSlab::new(vec![0.5, 0.2], vec![0.4, 0.9]).is_err());
    }

    #[test]
    fn starvation_is_reported() {
        // a corner of a 12-class simplex: each share must stay tiny except one
        let mut upper = vec![0.002; 12];
        upper[0] = 1.0;
        let slab = SimplexSlab::new(vec![0.0; 12], upper).unwrap();
        let err = expected_shares(&slab, RngStream::new(1, 1), 10).unwrap_err();
        assert!(matches!(err, Error::RejectionStarvation { .. }));
    }

    #[test]
    fn covid_examples() {
        let (r0, r1) = covid_shares(1000, 500, 100).unwrap();
        assert_abs_diff_eq!(r1, 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(r0, 0.85, epsilon = 1e-15);
        let (_, census) = covid_shares(1000, 1000, 230).unwrap();
        assert_abs_diff_eq!(census, 0.23, epsilon = 1e-15);
        assert_eq!(covid_shares(1000, 400, 0).unwrap().1, 0.0);
        assert!(covid_shares(1000, 0, 0).is_err());
        assert!(covid_shares(1000, 1001, 0).is_err());
        assert!(covid_shares(1000, 10, 11).is_err());
    }

    #[test]
    fn covid_slab_bounds() {
        let slab = covid_slab(1000, 500, 100).unwrap();
        assert_eq!(slab.lower(), &[0.8, 0.1]);
        assert_eq!(slab.upper(), &[0.9, 0.2]);
    }
}
