//! Exact stratified population and the closed-form, population-level
//! quantities derived from it.
//!
//! A population of `N` individuals is split into `S` symptom classes `s` and
//! two infection states `i` (0 = not infected, 1 = infected). Stratum
//! `(s, i)` holds `N_si = N * rho_si` individuals, each tested independently
//! with probability `pi_si`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxent::{self, SimplexSlab};

/// Tolerance on share sums and share consistency checks.
pub const SHARE_TOL: f64 = 1e-12;

/// Relative tolerance used when deciding whether `N * rho_si` is a whole number.
const INTEGER_TOL: f64 = 1e-9;

/// Exact stratified population with per-stratum testing probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    n: u64,
    sizes: Vec<[u64; 2]>,
    testing: Vec<[f64; 2]>,
}

impl PopulationSpec {
    /// Builds a population from whole stratum sizes `N_si`.
    pub fn from_sizes(sizes: Vec<[u64; 2]>, testing: Vec<[f64; 2]>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPopulation("at least one symptom class is required".into()));
        }
        if sizes.len() != testing.len() {
            return Err(Error::InvalidPopulation(format!(
                "{} symptom classes in sizes but {} in testing probabilities",
                sizes.len(),
                testing.len()
            )));
        }
        for (s, row) in testing.iter().enumerate() {
            for (i, &pi) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&pi) {
                    return Err(Error::InvalidPopulation(format!(
                        "testing probability pi[{s}][{i}] = {pi} outside [0, 1]"
                    )));
                }
            }
        }
        let n: u64 = sizes.iter().map(|r| r[0] + r[1]).sum();
        if n == 0 {
            return Err(Error::InvalidPopulation("population size must be positive".into()));
        }
        Ok(Self { n, sizes, testing })
    }

    /// Builds a population of size `n` from stratum shares `rho_si`.
    ///
    /// Shares must sum to one and every `n * rho_si` must be a whole number;
    /// nothing is rounded silently.
    pub fn new(n: u64, shares: &[[f64; 2]], testing: Vec<[f64; 2]>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPopulation("population size must be positive".into()));
        }
        let total: f64 = shares.iter().map(|r| r[0] + r[1]).sum();
        if (total - 1.0).abs() > SHARE_TOL {
            return Err(Error::InvalidPopulation(format!("stratum shares sum to {total}, not 1")));
        }
        let mut sizes = Vec::with_capacity(shares.len());
        for (s, row) in shares.iter().enumerate() {
            let mut out = [0u64; 2];
            for (i, &rho) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(Error::InvalidPopulation(format!(
                        "share rho[{s}][{i}] = {rho} outside [0, 1]"
                    )));
                }
                let size = n as f64 * rho;
                let rounded = size.round();
                if (size - rounded).abs() > INTEGER_TOL * rounded.max(1.0) {
                    return Err(Error::NonIntegerStratum { stratum: s, status: i, size });
                }
                out[i] = rounded as u64;
            }
            sizes.push(out);
        }
        let spec = Self::from_sizes(sizes, testing)?;
        if spec.n != n {
            return Err(Error::InvalidPopulation(format!(
                "stratum sizes add up to {} instead of {n}",
                spec.n
            )));
        }
        Ok(spec)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of symptom classes `S`.
    pub fn strata(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[[u64; 2]] {
        &self.sizes
    }

    pub fn testing(&self) -> &[[f64; 2]] {
        &self.testing
    }

    pub fn share(&self, s: usize, i: usize) -> f64 {
        self.sizes[s][i] as f64 / self.n as f64
    }

    pub fn shares(&self) -> Vec<[f64; 2]> {
        (0..self.strata()).map(|s| [self.share(s, 0), self.share(s, 1)]).collect()
    }

    /// `rho_s = rho_s0 + rho_s1`.
    pub fn stratum_shares(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .map(|r| (r[0] + r[1]) as f64 / self.n as f64)
            .collect()
    }

    /// `p_0s = rho_s1 / rho_s`; `None` for an empty symptom class.
    pub fn stratum_prevalences(&self) -> Vec<Option<f64>> {
        self.sizes
            .iter()
            .map(|r| {
                let total = r[0] + r[1];
                (total > 0).then(|| r[1] as f64 / total as f64)
            })
            .collect()
    }

    /// Per-class testing probabilities `pi_s`, defined only when
    /// `pi_s0 == pi_s1` in every class.
    pub fn stratum_testing_probs(&self) -> Result<Vec<f64>> {
        self.testing
            .iter()
            .enumerate()
            .map(|(s, r)| {
                if r[0] == r[1] {
                    Ok(r[0])
                } else {
                    Err(Error::MechanismMismatch(s))
                }
            })
            .collect()
    }

    /// True when every stratum is tested with the same probability.
    pub fn is_mcar(&self) -> bool {
        let first = self.testing[0][0];
        self.testing.iter().all(|r| r[0] == first && r[1] == first)
    }
}

/// How the bias-corrected estimator learns the symptom-class shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mechanism {
    /// Uniform testing; the corrected estimate is the raw positive rate.
    Mcar,
    /// Testing depends on the symptom class only, class shares `rho_s` known.
    Mar { stratum_shares: Vec<f64> },
    /// Class shares unknown; use the mean of the uniform density on the
    /// feasible share region.
    #[serde(rename = "maxent")]
    MaxEnt(MaxEntPrior),
}

/// Feasible region for [`Mechanism::MaxEnt`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "lowercase")]
pub enum MaxEntPrior {
    /// Two symptom classes, symptomatic share bounded by the data:
    /// `N_T1 / N <= rho_1 <= N_T1 / N_T`.
    Interval,
    /// Fixed box bounds on each share. The mean is integrated by Monte Carlo
    /// when it has no closed form, using `samples` draws seeded with `seed`.
    Slab {
        slab: SimplexSlab,
        samples: u64,
        seed: u64,
    },
}

impl Mechanism {
    /// MAR tag carrying the class shares of `spec`.
    pub fn mar_for(spec: &PopulationSpec) -> Self {
        Mechanism::Mar { stratum_shares: spec.stratum_shares() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Mcar => "mcar",
            Mechanism::Mar { .. } => "mar",
            Mechanism::MaxEnt(_) => "maxent",
        }
    }

    /// Checks the tag on its own: shares sum to one, bounds are ordered.
    pub fn validate(&self) -> Result<()> {
        match self {
            Mechanism::Mcar => Ok(()),
            Mechanism::Mar { stratum_shares } => {
                if stratum_shares.is_empty() {
                    return Err(Error::InvalidMechanism("MAR needs at least one share".into()));
                }
                if stratum_shares.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(Error::InvalidMechanism("MAR shares must lie in [0, 1]".into()));
                }
                let total: f64 = stratum_shares.iter().sum();
                if (total - 1.0).abs() > SHARE_TOL {
                    return Err(Error::InvalidMechanism(format!("MAR shares sum to {total}, not 1")));
                }
                Ok(())
            }
            Mechanism::MaxEnt(MaxEntPrior::Interval) => Ok(()),
            Mechanism::MaxEnt(MaxEntPrior::Slab { slab, samples, .. }) => {
                slab.validate()?;
                if *samples == 0 && !slab.is_degenerate() {
                    return Err(Error::InvalidMechanism("slab prior needs at least one sample".into()));
                }
                Ok(())
            }
        }
    }

    /// Checks the tag against a population: number of classes, and for MAR,
    /// that the known shares agree with the population.
    pub fn validate_for(&self, spec: &PopulationSpec) -> Result<()> {
        self.validate()?;
        match self {
            Mechanism::Mcar => Ok(()),
            Mechanism::Mar { stratum_shares } => {
                if stratum_shares.len() != spec.strata() {
                    return Err(Error::InvalidMechanism(format!(
                        "MAR carries {} shares for {} symptom classes",
                        stratum_shares.len(),
                        spec.strata()
                    )));
                }
                for (s, (a, b)) in stratum_shares.iter().zip(spec.stratum_shares()).enumerate() {
                    if (a - b).abs() > SHARE_TOL {
                        return Err(Error::InvalidMechanism(format!(
                            "MAR share for class {s} is {a} but the population has {b}"
                        )));
                    }
                }
                Ok(())
            }
            Mechanism::MaxEnt(MaxEntPrior::Interval) => {
                if spec.strata() != 2 {
                    return Err(Error::InvalidMechanism(
                        "interval prior needs exactly two symptom classes".into(),
                    ));
                }
                Ok(())
            }
            Mechanism::MaxEnt(MaxEntPrior::Slab { slab, .. }) => {
                if slab.strata() != spec.strata() {
                    return Err(Error::InvalidMechanism(format!(
                        "slab has {} classes, population has {}",
                        slab.strata(),
                        spec.strata()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Population-level targets and asymptotic variance components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticQuantities {
    pub p0: f64,
    pub p: f64,
    pub p0s: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub p_tilde0: f64,
    pub rho_bar: Vec<f64>,
    pub p_bar0: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// `ln(p / p0)` in nats; `None` when either prevalence is zero.
    pub i_plus_t: Option<f64>,
}

/// The four variance/covariance components of the scaled estimation errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
}

/// Closed-form `V1..V4` for class shares `rho`, limiting estimator weights
/// `rho_bar`, testing probabilities `pi` and class prevalences `p0s`.
///
/// Classes with `rho_s == 0` contribute nothing. Returns the components and
/// the testing-weighted prevalence `p~0`.
pub fn variance_components(
    rho: &[f64],
    rho_bar: &[f64],
    pi: &[f64],
    p0s: &[f64],
) -> (VarianceComponents, f64) {
    let active = |s: &usize| rho[*s] > 0.0;
    let strata = || (0..rho.len()).filter(active);
    let mass: f64 = strata().map(|s| rho[s] * pi[s]).sum();
    let p_tilde0 = strata().map(|s| rho[s] * pi[s] * p0s[s]).sum::<f64>() / mass;
    let bernoulli = |s: usize| p0s[s] * (1.0 - p0s[s]);

    let v1 = strata()
        .map(|s| rho[s] * pi[s] * (1.0 - pi[s]) * bernoulli(s))
        .sum::<f64>()
        / (mass * mass);
    let v2 = strata()
        .map(|s| {
            let d = p0s[s] - p_tilde0;
            rho[s] * pi[s] * (1.0 - pi[s]) * d * d
        })
        .sum::<f64>()
        / (mass * mass);
    let v3 = strata()
        .map(|s| rho_bar[s] * rho_bar[s] / rho[s] * (1.0 - pi[s]) / pi[s] * bernoulli(s))
        .sum::<f64>();
    let v4 = strata()
        .map(|s| rho_bar[s] * (1.0 - pi[s]) * bernoulli(s))
        .sum::<f64>()
        / mass;
    (VarianceComponents { v1, v2, v3, v4 }, p_tilde0)
}

/// Population prevalence `p0 = sum_s rho_s1`.
pub fn population_prevalence(spec: &PopulationSpec) -> f64 {
    let infected: u64 = spec.sizes().iter().map(|r| r[1]).sum();
    infected as f64 / spec.n() as f64
}

/// Expected prevalence among the tested,
/// `p = sum_s rho_s1 pi_s1 / sum_{s,i} rho_si pi_si`.
pub fn testing_prevalence(spec: &PopulationSpec) -> Result<f64> {
    let mut infected = 0.0;
    let mut total = 0.0;
    for s in 0..spec.strata() {
        for i in 0..2 {
            let w = spec.share(s, i) * spec.testing()[s][i];
            total += w;
            if i == 1 {
                infected += w;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::ZeroTestingMass);
    }
    Ok(infected / total)
}

/// Active information due to testing bias, `ln(p / p0)` in nats.
pub fn active_info_testing(spec: &PopulationSpec) -> Result<f64> {
    let p0 = population_prevalence(spec);
    let p = testing_prevalence(spec)?;
    if p0 <= 0.0 || p <= 0.0 {
        return Err(Error::UndefinedActiveInfo);
    }
    Ok((p / p0).ln())
}

/// All population-level quantities for a spec with `pi_si = pi_s`, using the
/// limiting estimator weights implied by `mech`.
///
/// MCAR and MAR estimators converge to the true shares. A slab prior
/// converges to the mean of its region. The data-driven interval prior
/// converges to the midpoint of `(rho_1 pi_1, rho~_1)`.
pub fn exact_quantities(spec: &PopulationSpec, mech: &Mechanism) -> Result<AsymptoticQuantities> {
    mech.validate_for(spec)?;
    let pi = spec.stratum_testing_probs()?;
    let rho = spec.stratum_shares();
    let rho_bar = match mech {
        Mechanism::Mcar | Mechanism::Mar { .. } => rho.clone(),
        Mechanism::MaxEnt(MaxEntPrior::Slab { slab, samples, seed }) => {
            maxent::slab_mean(slab, *samples, *seed)?
        }
        Mechanism::MaxEnt(MaxEntPrior::Interval) => {
            let mass: f64 = rho.iter().zip(&pi).map(|(r, p)| r * p).sum();
            if mass <= 0.0 {
                return Err(Error::ZeroTestingMass);
            }
            let lower = rho[1] * pi[1];
            let upper = rho[1] * pi[1] / mass;
            let symptomatic = 0.5 * (lower + upper);
            vec![1.0 - symptomatic, symptomatic]
        }
    };
    exact_quantities_with_limit(spec, &rho_bar)
}

/// As [`exact_quantities`] with explicit limiting weights `rho_bar`.
pub fn exact_quantities_with_limit(
    spec: &PopulationSpec,
    rho_bar: &[f64],
) -> Result<AsymptoticQuantities> {
    let pi = spec.stratum_testing_probs()?;
    let rho = spec.stratum_shares();
    if rho_bar.len() != rho.len() {
        return Err(Error::InvalidArgument(format!(
            "{} limiting weights for {} classes",
            rho_bar.len(),
            rho.len()
        )));
    }
    for s in 0..rho.len() {
        if rho[s] <= 0.0 || pi[s] <= 0.0 {
            return Err(Error::InvalidPopulation(format!(
                "class {s} needs positive share and testing probability (rho = {}, pi = {})",
                rho[s], pi[s]
            )));
        }
    }
    let p0s: Vec<f64> = spec
        .stratum_prevalences()
        .into_iter()
        .map(|p| p.expect("class share checked positive"))
        .collect();
    let mass: f64 = rho.iter().zip(&pi).map(|(r, p)| r * p).sum();
    let rho_tilde: Vec<f64> = rho.iter().zip(&pi).map(|(r, p)| r * p / mass).collect();
    let (v, p_tilde0) = variance_components(&rho, rho_bar, &pi, &p0s);
    let p0 = population_prevalence(spec);
    let p = testing_prevalence(spec)?;
    let p_bar0 = rho_bar.iter().zip(&p0s).map(|(r, q)| r * q).sum();
    let i_plus_t = (p > 0.0 && p0 > 0.0).then(|| (p / p0).ln());
    Ok(AsymptoticQuantities {
        p0,
        p,
        p0s,
        rho_tilde,
        p_tilde0,
        rho_bar: rho_bar.to_vec(),
        p_bar0,
        v1: v.v1,
        v2: v.v2,
        v3: v.v3,
        v4: v.v4,
        i_plus_t,
    })
}

/// Prevalence among the tested members of each class,
/// `rho_s1 pi_s1 / (rho_s0 pi_s0 + rho_s1 pi_s1)`; `None` where nobody in the
/// class can be tested. Equals the class prevalence when `pi_s0 == pi_s1`.
pub fn tested_class_prevalences(spec: &PopulationSpec) -> Vec<Option<f64>> {
    (0..spec.strata())
        .map(|s| {
            let pi = spec.testing()[s];
            let neg = spec.share(s, 0) * pi[0];
            let pos = spec.share(s, 1) * pi[1];
            (neg + pos > 0.0).then(|| pos / (neg + pos))
        })
        .collect()
}

/// Large-`N` limit of the share-weighted estimate `sum_s w_s N_Ts1 / N_Ts`
/// for weights `w`, valid for any testing probabilities. When testing
/// depends on infection status this differs from `p0`, and the difference
/// is the floor the estimation error cannot go below.
pub fn weighted_estimate_limit(spec: &PopulationSpec, weights: &[f64]) -> Result<f64> {
    if weights.len() != spec.strata() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} classes",
            weights.len(),
            spec.strata()
        )));
    }
    let mut acc = 0.0;
    for (s, (w, q)) in weights.iter().zip(tested_class_prevalences(spec)).enumerate() {
        if *w == 0.0 {
            continue;
        }
        acc += w * q.ok_or(Error::EmptyStratum(s))?;
    }
    Ok(acc)
}

/// The two-class population used throughout the simulation study, scaled to
/// `n` individuals: shares `rho_00 = 0.75`, `rho_01 = 0.05`, `rho_10 = 0.05`,
/// `rho_11 = 0.15`.
pub fn reference_shares() -> [[f64; 2]; 2] {
    [[0.75, 0.05], [0.05, 0.15]]
}
