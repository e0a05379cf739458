//! Plug-in standard errors and confidence intervals for the prevalence
//! estimates and the active information due to testing bias.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{self, EstimateBundle};
use crate::model::{variance_components, Mechanism, VarianceComponents};
use crate::sampler::TestingOutcome;

/// Brackets above this negative value are treated as rounding noise.
pub const NEGATIVE_BRACKET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiTarget {
    P,
    P0,
    IPlusT,
    PBar,
    IBarT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub target: CiTarget,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

/// `lambda_{alpha/2}`, the `1 - alpha/2` standard normal quantile.
pub fn critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
    }
    Ok(normal_quantile(1.0 - alpha / 2.0))
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn inv_logit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Plug-in variance components with a flag for classes whose estimated
/// prevalence sits at 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginVariances {
    pub components: VarianceComponents,
    pub degenerate: bool,
}

/// `V1..V4` evaluated at the estimated class prevalences, class shares and
/// class sampling probabilities `pi_hat_s`.
///
/// The estimated shares stand in for both the true shares and their limit;
/// under MAR those are the known shares.
pub fn plugin_variances(
    outcome: &TestingOutcome,
    mech: &Mechanism,
    pi_hat_s: &[f64],
) -> Result<PluginVariances> {
    let rho = estimators::class_shares(outcome, mech)?;
    if pi_hat_s.len() != rho.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sampling estimates for {} classes",
            pi_hat_s.len(),
            rho.len()
        )));
    }
    let p0s_hat = estimators::class_prevalences(outcome);
    let mut p0s = vec![0.0; rho.len()];
    let mut degenerate = false;
    for s in 0..rho.len() {
        if rho[s] <= 0.0 {
            continue;
        }
        let Some(p) = p0s_hat[s] else {
            return Err(Error::EmptyStratum(s));
        };
        if !(pi_hat_s[s] > 0.0) {
            return Err(Error::DivisionByZeroWeight);
        }
        degenerate |= p == 0.0 || p == 1.0;
        p0s[s] = p;
    }
    let (components, _) = variance_components(&rho, &rho, pi_hat_s, &p0s);
    Ok(PluginVariances { components, degenerate })
}

/// Delta-method interval on the logit scale, mapped back to `(0, 1)`.
pub fn ci_logit_prevalence(
    est: f64,
    sigma: f64,
    alpha: f64,
    target: CiTarget,
) -> Result<ConfidenceInterval> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} is negative")));
    }
    if !(est > 0.0 && est < 1.0) {
        return Err(Error::BoundaryEstimate(est));
    }
    let lambda = critical_value(alpha)?;
    let half = lambda * sigma / (est * (1.0 - est));
    let (lo, hi) = if half == 0.0 {
        (est, est)
    } else {
        let centre = logit(est);
        (inv_logit(centre - half), inv_logit(centre + half))
    };
    Ok(ConfidenceInterval { lo, hi, level: 1.0 - alpha, target })
}

/// Untransformed normal interval for an active information estimate.
pub fn ci_active_info(i_hat: f64, sigma_i: f64, alpha: f64) -> Result<ConfidenceInterval> {
    if !(sigma_i >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma_i} is negative")));
    }
    let half = critical_value(alpha)? * sigma_i;
    Ok(ConfidenceInterval {
        lo: i_hat - half,
        hi: i_hat + half,
        level: 1.0 - alpha,
        target: CiTarget::IPlusT,
    })
}

/// Standard error of `I^+_T`:
/// `sqrt(((V1 + V2) / p^2 + V3 / p0^2 - 2 V4 / (p p0)) / N)`, with `V2`
/// dropped in the conditional version.
pub fn sigma_it(
    v: &VarianceComponents,
    p: f64,
    p_bar0: f64,
    n: u64,
    conditional: bool,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(p_bar0 > 0.0 && p_bar0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prevalences must lie in (0, 1) (p = {p}, p0 = {p_bar0})"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be positive".into()));
    }
    let b = it_bracket(v, p, p_bar0, conditional);
    if b < -NEGATIVE_BRACKET_TOL {
        return Err(Error::NegativeVarianceCombination(b));
    }
    Ok((b.max(0.0) / n as f64).sqrt())
}

/// Asymptotic variance of `sqrt(N) I^+_T`.
pub fn it_bracket(v: &VarianceComponents, p: f64, p_bar0: f64, conditional: bool) -> f64 {
    let sampling = if conditional { v.v1 } else { v.v1 + v.v2 };
    sampling / (p * p) + v.v3 / (p_bar0 * p_bar0) - 2.0 * v.v4 / (p * p_bar0)
}

/// `sqrt((V1 + V2) / N)`, or `sqrt(V1 / N)` conditionally on the class sizes.
pub fn sigma_p(v: &VarianceComponents, n: u64, conditional: bool) -> f64 {
    let var = if conditional { v.v1 } else { v.v1 + v.v2 };
    (var / n as f64).sqrt()
}

/// `sqrt(V3 / N)`.
pub fn sigma_p0(v: &VarianceComponents, n: u64) -> f64 {
    (v.v3 / n as f64).sqrt()
}

/// Standard errors and intervals attached to one estimate bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub estimate: EstimateBundle,
    pub variances: VarianceComponents,
    pub sigma_p: f64,
    pub sigma_p0: f64,
    pub sigma_i_t: Option<f64>,
    pub ci_p: Option<ConfidenceInterval>,
    pub ci_p0: Option<ConfidenceInterval>,
    pub ci_i_t: Option<ConfidenceInterval>,
    pub warnings: Vec<String>,
}

/// Estimates, plug-in standard errors and `1 - alpha` intervals for one
/// outcome.
///
/// Under MCAR the corrected estimate is `p^` itself and shares its standard
/// error. Intervals that cannot be formed are `None` with a warning.
pub fn estimate_with_intervals(
    outcome: &TestingOutcome,
    mech: &Mechanism,
    alpha: f64,
) -> Result<IntervalReport> {
    critical_value(alpha)?;
    let estimate = estimators::estimate(outcome, mech)?;
    let pi_hat_s = estimators::class_sampling_estimates(outcome, mech, &estimate.rho_hat);
    let plug = plugin_variances(outcome, mech, &pi_hat_s)?;
    let v = plug.components;
    let n = outcome.n();
    let mut warnings = Vec::new();
    if plug.degenerate {
        warnings.push("a class prevalence estimate is 0 or 1; its variance contribution is 0".into());
    }

    let sigma_p = sigma_p(&v, n, false);
    let sigma_p0 = match mech {
        Mechanism::Mcar => sigma_p,
        _ => sigma_p0(&v, n),
    };

    let ci_p = interval_or_warn(estimate.p_hat, sigma_p, alpha, CiTarget::P, &mut warnings);
    let ci_p0 = interval_or_warn(estimate.p0_hat, sigma_p0, alpha, CiTarget::P0, &mut warnings);

    let sigma_i_t = match mech {
        Mechanism::Mcar => Some(0.0),
        _ => match sigma_it(&v, estimate.p_hat, estimate.p0_hat, n, false) {
            Ok(s) => Some(s),
            Err(e) => {
                warnings.push(format!("no standard error for I+_T: {e}"));
                None
            }
        },
    };
    let ci_i_t = match (estimate.i_t_hat, sigma_i_t) {
        (Some(i), Some(s)) => Some(ci_active_info(i, s, alpha)?),
        (None, _) => {
            warnings.push("active information undefined: a prevalence estimate is zero".into());
            None
        }
        _ => None,
    };

    Ok(IntervalReport {
        estimate,
        variances: v,
        sigma_p,
        sigma_p0,
        sigma_i_t,
        ci_p,
        ci_p0,
        ci_i_t,
        warnings,
    })
}

fn interval_or_warn(
    est: f64,
    sigma: f64,
    alpha: f64,
    target: CiTarget,
    warnings: &mut Vec<String>,
) -> Option<ConfidenceInterval> {
    match ci_logit_prevalence(est, sigma, alpha, target) {
        Ok(ci) => Some(ci),
        Err(e) => {
            warnings.push(format!("no {target:?} interval: {e}"));
            None
        }
    }
}
