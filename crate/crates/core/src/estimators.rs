//! Biased and bias-corrected prevalence estimates from one testing outcome.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxent;
use crate::model::{population_prevalence, MaxEntPrior, Mechanism, PopulationSpec};
use crate::sampler::TestingOutcome;

/// Everything estimated from a single outcome under one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBundle {
    pub p_hat: f64,
    pub p0_hat: f64,
    /// Estimated class shares `rho^_s`.
    pub rho_hat: Vec<f64>,
    /// `N_Ts1 / N_Ts`, `None` where no one in the class was tested.
    pub p0s_hat: Vec<Option<f64>>,
    /// Overall tested fraction `N_T / N`.
    pub pi_hat: f64,
    /// `ln(p^ / p^0)`; `None` when either estimate is zero.
    pub i_t_hat: Option<f64>,
    /// Always `-i_t_hat`.
    pub i_c_hat: Option<f64>,
    pub mech: Mechanism,
}

/// Positive rate among the tested, `N_T.1 / N_T`.
pub fn p_hat(outcome: &TestingOutcome) -> Result<f64> {
    let tested = outcome.tested();
    if tested == 0 {
        return Err(Error::EmptySample);
    }
    Ok(outcome.positive() as f64 / tested as f64)
}

/// Inverse-probability weighted prevalence with per-stratum sampling
/// fraction estimates `pi_hat[s][i]`.
pub fn p0_hat_general(outcome: &TestingOutcome, pi_hat: &[[f64; 2]]) -> Result<f64> {
    if pi_hat.len() != outcome.strata() {
        return Err(Error::InvalidArgument(format!(
            "{} weight rows for {} classes",
            pi_hat.len(),
            outcome.strata()
        )));
    }
    if outcome.tested() == 0 {
        return Err(Error::EmptySample);
    }
    let mut infected = 0.0;
    let mut total = 0.0;
    for (c, w) in outcome.counts().iter().zip(pi_hat) {
        for i in 0..2 {
            if c[i] == 0 {
                continue;
            }
            if !(w[i] > 0.0) {
                return Err(Error::DivisionByZeroWeight);
            }
            let term = c[i] as f64 / w[i];
            total += term;
            if i == 1 {
                infected += term;
            }
        }
    }
    Ok(infected / total)
}

/// Under uniform testing the correction cancels and the estimate is `p^`.
pub fn p0_hat_mcar(outcome: &TestingOutcome) -> Result<f64> {
    p_hat(outcome)
}

/// `N_Ts1 / N_Ts` per class.
pub fn class_prevalences(outcome: &TestingOutcome) -> Vec<Option<f64>> {
    (0..outcome.strata())
        .map(|s| {
            let tested = outcome.class_tested(s);
            (tested > 0).then(|| outcome.class_positive(s) as f64 / tested as f64)
        })
        .collect()
}

/// Share-weighted class prevalence `sum_s rho^_s N_Ts1 / N_Ts`.
///
/// Classes with zero weight are skipped; a weighted class with nobody tested
/// is an [`Error::EmptyStratum`].
pub fn p0_hat_weighted(outcome: &TestingOutcome, rho_hat: &[f64]) -> Result<f64> {
    if rho_hat.len() != outcome.strata() {
        return Err(Error::InvalidArgument(format!(
            "{} shares for {} classes",
            rho_hat.len(),
            outcome.strata()
        )));
    }
    if outcome.tested() == 0 {
        return Err(Error::EmptySample);
    }
    let mut acc = 0.0;
    for (s, &w) in rho_hat.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let tested = outcome.class_tested(s);
        if tested == 0 {
            return Err(Error::EmptyStratum(s));
        }
        acc += w * (outcome.class_positive(s) as f64 / tested as f64);
    }
    Ok(acc)
}

/// Post-stratified estimate with known class shares `rho_s`.
pub fn p0_hat_mar(outcome: &TestingOutcome, rho_s: &[f64]) -> Result<f64> {
    p0_hat_weighted(outcome, rho_s)
}

/// Class shares implied by a maximum-entropy prior for this outcome.
pub fn maxent_shares(outcome: &TestingOutcome, prior: &MaxEntPrior) -> Result<Vec<f64>> {
    match prior {
        MaxEntPrior::Interval => {
            if outcome.strata() != 2 {
                return Err(Error::InvalidMechanism(
                    "interval prior needs exactly two symptom classes".into(),
                ));
            }
            let tested = outcome.tested();
            if tested == 0 {
                return Err(Error::EmptySample);
            }
            let (r0, r1) = maxent::covid_shares(outcome.n(), tested, outcome.class_tested(1))?;
            Ok(vec![r0, r1])
        }
        MaxEntPrior::Slab { slab, samples, seed } => {
            if slab.strata() != outcome.strata() {
                return Err(Error::InvalidMechanism("slab does not match outcome classes".into()));
            }
            maxent::slab_mean(slab, *samples, *seed)
        }
    }
}

/// Maximum-entropy corrected prevalence.
pub fn p0_hat_maxent(outcome: &TestingOutcome, prior: &MaxEntPrior) -> Result<f64> {
    let shares = maxent_shares(outcome, prior)?;
    p0_hat_weighted(outcome, &shares)
}

/// `(I^+_T, I^+_C) = (ln(p^ / p^0), -ln(p^ / p^0))`.
pub fn active_info_estimates(p_hat: f64, p0_hat: f64) -> Result<(f64, f64)> {
    if !(p_hat > 0.0) || !(p0_hat > 0.0) {
        return Err(Error::UndefinedActiveInfo);
    }
    let it = (p_hat / p0_hat).ln();
    Ok((it, -it))
}

/// Targets conditional on the tested class sizes: `p- = sum_s rho_Ts p_0s`
/// and `ln(p- / p0)`.
pub fn conditional_targets(spec: &PopulationSpec, outcome: &TestingOutcome) -> Result<(f64, f64)> {
    spec.stratum_testing_probs()?;
    if spec.strata() != outcome.strata() {
        return Err(Error::InvalidOutcome("outcome does not match population shape".into()));
    }
    let fractions = outcome.tested_class_fractions()?;
    let p_bar = conditional_prevalence(&fractions, &spec.stratum_prevalences());
    let p0 = population_prevalence(spec);
    if !(p_bar > 0.0) || !(p0 > 0.0) {
        return Err(Error::UndefinedActiveInfo);
    }
    Ok((p_bar, (p_bar / p0).ln()))
}

/// `sum_s w_s p_0s`, treating classes without members as contributing 0.
pub fn conditional_prevalence(weights: &[f64], p0s: &[Option<f64>]) -> f64 {
    weights
        .iter()
        .zip(p0s)
        .map(|(w, p)| w * p.unwrap_or(0.0))
        .sum()
}

/// Estimated class shares under `mech`. Under MCAR they are the tested class
/// fractions `rho_Ts`.
pub fn class_shares(outcome: &TestingOutcome, mech: &Mechanism) -> Result<Vec<f64>> {
    match mech {
        Mechanism::Mcar => outcome.tested_class_fractions(),
        Mechanism::Mar { stratum_shares } => {
            if stratum_shares.len() != outcome.strata() {
                return Err(Error::InvalidMechanism(format!(
                    "MAR carries {} shares for {} classes",
                    stratum_shares.len(),
                    outcome.strata()
                )));
            }
            Ok(stratum_shares.clone())
        }
        Mechanism::MaxEnt(prior) => maxent_shares(outcome, prior),
    }
}

/// Per-class sampling probability estimates `pi^_s = N_Ts / (N rho^_s)`;
/// `N_T / N` for every class under MCAR.
pub fn class_sampling_estimates(
    outcome: &TestingOutcome,
    mech: &Mechanism,
    rho_hat: &[f64],
) -> Vec<f64> {
    let n = outcome.n() as f64;
    match mech {
        Mechanism::Mcar => vec![outcome.tested() as f64 / n; outcome.strata()],
        _ => (0..outcome.strata())
            .map(|s| {
                if rho_hat[s] > 0.0 {
                    outcome.class_tested(s) as f64 / (n * rho_hat[s])
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Full estimate bundle for `outcome` under `mech`.
pub fn estimate(outcome: &TestingOutcome, mech: &Mechanism) -> Result<EstimateBundle> {
    mech.validate()?;
    let p_hat = p_hat(outcome)?;
    let rho_hat = class_shares(outcome, mech)?;
    let p0_hat = match mech {
        Mechanism::Mcar => p0_hat_mcar(outcome)?,
        _ => p0_hat_weighted(outcome, &rho_hat)?,
    };
    let (i_t_hat, i_c_hat) = match active_info_estimates(p_hat, p0_hat) {
        Ok((t, c)) => (Some(t), Some(c)),
        Err(_) => (None, None),
    };
    Ok(EstimateBundle {
        p_hat,
        p0_hat,
        rho_hat,
        p0s_hat: class_prevalences(outcome),
        pi_hat: outcome.tested() as f64 / outcome.n() as f64,
        i_t_hat,
        i_c_hat,
        mech: mech.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::SimplexSlab;
    use approx::assert_abs_diff_eq;

    // N_T00 = 380, N_T01 = 20, N_T10 = 40, N_T11 = 60
    fn outcome() -> TestingOutcome {
        TestingOutcome::new(10_000, vec![[380, 20], [40, 60]]).unwrap()
    }

    #[test]
    fn biased_rate() {
        assert_abs_diff_eq!(p_hat(&outcome()).unwrap(), 0.16, epsilon = 1e-15);
        let all_pos = TestingOutcome::new(10, vec![[0, 3], [0, 2]]).unwrap();
        assert_eq!(p_hat(&all_pos).unwrap(), 1.0);
        let none_pos = TestingOutcome::new(10, vec![[3, 0], [2, 0]]).unwrap();
        assert_eq!(p_hat(&none_pos).unwrap(), 0.0);
        assert_eq!(p0_hat_mcar(&none_pos).unwrap(), 0.0);
        let empty = TestingOutcome::new(10, vec![[0, 0]]).unwrap();
        assert_eq!(p_hat(&empty), Err(Error::EmptySample));
    }

    #[test]
    fn general_weights() {
        let o = outcome();
        let w = [[0.8, 0.8], [0.2, 0.2]];
        assert_abs_diff_eq!(p0_hat_general(&o, &w).unwrap(), 0.325, epsilon = 1e-15);
        assert_eq!(p0_hat_general(&o, &[[0.3; 2]; 2]).unwrap(), 80.0 / 0.3 / (500.0 / 0.3));
        assert_abs_diff_eq!(p0_hat_general(&o, &[[0.3; 2]; 2]).unwrap(), 0.16, epsilon = 1e-15);
        assert_eq!(
            p0_hat_general(&o, &[[0.3, 0.0], [0.3, 0.3]]),
            Err(Error::DivisionByZeroWeight)
        );
    }

    #[test]
    fn post_stratified() {
        let o = TestingOutcome::new(10_000, vec![[380, 20], [25, 75]]).unwrap();
        assert_abs_diff_eq!(p0_hat_mar(&o, &[0.8, 0.2]).unwrap(), 0.19, epsilon = 1e-15);
        let single = TestingOutcome::new(100, vec![[30, 12]]).unwrap();
        assert_eq!(p0_hat_mar(&single, &[1.0]).unwrap(), p_hat(&single).unwrap());
        let hole = TestingOutcome::new(100, vec![[30, 12], [0, 0]]).unwrap();
        assert_eq!(p0_hat_mar(&hole, &[0.8, 0.2]), Err(Error::EmptyStratum(1)));
    }

    #[test]
    fn maxent_interval() {
        let o = TestingOutcome::new(1000, vec![[380, 20], [40, 60]]).unwrap();
        let est = p0_hat_maxent(&o, &MaxEntPrior::Interval).unwrap();
        assert_abs_diff_eq!(est, 0.05 * 0.85 + 0.6 * 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(est, 0.1325, epsilon = 1e-15);
    }

    #[test]
    fn maxent_census_is_raw_rate() {
        let o = TestingOutcome::new(500, vec![[380, 20], [40, 60]]).unwrap();
        let est = p0_hat_maxent(&o, &MaxEntPrior::Interval).unwrap();
        assert_abs_diff_eq!(est, p_hat(&o).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn maxent_point_slab_is_mar() {
        let o = outcome();
        let prior = MaxEntPrior::Slab {
            slab: SimplexSlab::point(vec![0.8, 0.2]).unwrap(),
            samples: 0,
            seed: 0,
        };
        assert_eq!(p0_hat_maxent(&o, &prior).unwrap(), p0_hat_mar(&o, &[0.8, 0.2]).unwrap());
    }

    #[test]
    fn active_info_pairs() {
        assert_eq!(active_info_estimates(0.3, 0.3).unwrap(), (0.0, -0.0));
        let (t, c) = active_info_estimates(0.538462, 0.2).unwrap();
        assert_abs_diff_eq!(t, 0.99040, epsilon = 1e-5);
        assert_eq!(c, -t);
        let (t, _) = active_info_estimates(0.4219, 0.2276).unwrap();
        assert_abs_diff_eq!(t, 0.617_178_617, epsilon = 1e-8);
        assert_eq!(active_info_estimates(0.0, 0.2), Err(Error::UndefinedActiveInfo));
        assert_eq!(active_info_estimates(0.2, 0.0), Err(Error::UndefinedActiveInfo));
    }

    #[test]
    fn conditional_prevalence_example() {
        let p = conditional_prevalence(&[0.5, 0.5], &[Some(0.0625), Some(0.75)]);
        assert_abs_diff_eq!(p, 0.40625, epsilon = 1e-15);
    }

    #[test]
    fn conditional_targets_at_expected_fractions() {
        // rho~ = (0.08, 0.18) / 0.26 = (4/13, 9/13); a tested sample of 13k
        // with those class sizes reproduces p exactly
        let spec =
            PopulationSpec::new(1000, &crate::model::reference_shares(), vec![[0.1; 2], [0.9; 2]])
                .unwrap();
        let o = TestingOutcome::new(1000, vec![[36, 4], [23, 67]]).unwrap();
        let (p_bar, i_bar) = conditional_targets(&spec, &o).unwrap();
        assert_abs_diff_eq!(p_bar, 0.14 / 0.26, epsilon = 1e-12);
        assert_abs_diff_eq!(i_bar, (0.14 / 0.26 / 0.2f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn conditional_target_at_p0() {
        // rho_Ts = rho_s gives p- = p0
        let spec =
            PopulationSpec::new(1000, &crate::model::reference_shares(), vec![[0.5; 2]; 2]).unwrap();
        let o = TestingOutcome::new(1000, vec![[70, 10], [10, 10]]).unwrap();
        let (p_bar, i_bar) = conditional_targets(&spec, &o).unwrap();
        assert_abs_diff_eq!(p_bar, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(i_bar, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bundle_under_each_mechanism() {
        let o = outcome();
        let mcar = estimate(&o, &Mechanism::Mcar).unwrap();
        assert_eq!(mcar.p0_hat, mcar.p_hat);
        assert_eq!(mcar.i_t_hat, Some(0.0));
        let mar = estimate(&o, &Mechanism::Mar { stratum_shares: vec![0.8, 0.2] }).unwrap();
        assert_abs_diff_eq!(mar.p0_hat, 0.16, epsilon = 1e-15);
        assert_eq!(mar.i_c_hat.unwrap(), -mar.i_t_hat.unwrap());
        assert_abs_diff_eq!(mar.rho_hat.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mar.pi_hat, 0.05, epsilon = 1e-15);
    }
}
