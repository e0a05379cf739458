//! Monte Carlo study over a grid of population sizes: active information
//! tables, RMSE, confidence interval coverage and per-replicate intervals.
//!
//! Replicate `r` at population size `N` always draws from
//! `RngStream::for_replicate(seed, N, r)`. Replicates run in parallel, and
//! every reduction walks them in replicate order, so reports do not depend on
//! the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, CiTarget, ConfidenceInterval};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::estimators;
use crate::model::{self, Mechanism, PopulationSpec};
use crate::sampler::{draw_outcome, RngStream};

/// Estimates kept from one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEstimate {
    pub p_hat: f64,
    pub p0_hat: f64,
    /// Post-stratified estimate with the true class shares; `None` when a
    /// class had nobody tested.
    pub p0_poststrat: Option<f64>,
    /// Interval for `p0`; `None` for boundary estimates.
    pub ci_p0: Option<ConfidenceInterval>,
}

/// All replicates at one population size. Discarded replicates are `None`.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub n: u64,
    pub spec: PopulationSpec,
    pub replicates: Vec<Option<ReplicateEstimate>>,
}

/// One row of the report, per population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: u64,
    pub replicates: u64,
    /// Replicates dropped because a weighted class had nobody tested.
    pub discarded: u64,
    pub mean_p_hat: f64,
    pub mean_p0_hat: f64,
    /// `ln(mean p^ / p0)`.
    pub i_t: Option<f64>,
    /// `ln(mean p^0 / mean p^)`.
    pub i_c: Option<f64>,
    /// `ln(mean p^0 / p0)`, equal to `i_t + i_c` up to rounding.
    pub i_plus: Option<f64>,
    pub p0: f64,
    /// Expected prevalence among the tested.
    pub p_testing: f64,
    /// `ln(p_testing / p0)`.
    pub i_t_exact: Option<f64>,
    pub rmse_p0_hat: f64,
    /// Standard deviation of `|p^0 - p0|` across replicates.
    pub sd_p0_hat: f64,
    pub rmse_poststrat: Option<f64>,
    pub sd_poststrat: Option<f64>,
    /// Kept replicates whose corrected estimate hit 0 or 1.
    pub boundary: u64,
    pub covered: u64,
    /// `covered / replicates`; discarded and boundary replicates are misses.
    pub coverage: f64,
}

/// Interval record of one replicate for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub replicate: u64,
    pub n: u64,
    pub p0_hat: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub mechanism: String,
    pub seed: u64,
    pub replicates: u64,
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
    pub ci_fan: Vec<CiRecord>,
}

/// Runs one replicate. `Ok(None)` means the replicate is discarded.
pub fn run_replicate(
    spec: &PopulationSpec,
    mech: &Mechanism,
    alpha: f64,
    stream: RngStream,
) -> Result<Option<ReplicateEstimate>> {
    let outcome = draw_outcome(spec, &mut stream.rng());
    let est = match estimators::estimate(&outcome, mech) {
        Ok(e) => e,
        Err(Error::EmptySample | Error::EmptyStratum(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let p0_poststrat = estimators::p0_hat_mar(&outcome, &spec.stratum_shares()).ok();

    let pi_hat_s = estimators::class_sampling_estimates(&outcome, mech, &est.rho_hat);
    let plug = asymptotics::plugin_variances(&outcome, mech, &pi_hat_s)?;
    let sigma = match mech {
        Mechanism::Mcar => asymptotics::sigma_p(&plug.components, spec.n(), false),
        _ => asymptotics::sigma_p0(&plug.components, spec.n()),
    };
    let ci_p0 = match asymptotics::ci_logit_prevalence(est.p0_hat, sigma, alpha, CiTarget::P0) {
        Ok(ci) => Some(ci),
        Err(Error::BoundaryEstimate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Some(ReplicateEstimate { p_hat: est.p_hat, p0_hat: est.p0_hat, p0_poststrat, ci_p0 }))
}

/// Simulates every replicate at population size `n`.
pub fn simulate_point(cfg: &ScenarioConfig, n: u64) -> Result<GridPoint> {
    let spec = cfg.spec_at(n)?;
    let mech = cfg.mechanism()?;
    mech.validate_for(&spec)?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(&spec, &mech, cfg.alpha, RngStream::for_replicate(cfg.seed, n, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridPoint { n, spec, replicates })
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Vec<GridPoint>> {
    cfg.validate()?;
    cfg.n_grid.iter().map(|&n| simulate_point(cfg, n)).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Root mean squared error and the sample standard deviation of the
/// absolute errors.
fn rmse_and_sd(estimates: &[f64], truth: f64) -> (f64, f64) {
    let abs: Vec<f64> = estimates.iter().map(|e| (e - truth).abs()).collect();
    let rmse = (abs.iter().map(|a| a * a).sum::<f64>() / abs.len() as f64).sqrt();
    let sd = if abs.len() < 2 {
        0.0
    } else {
        let m = mean(&abs);
        (abs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (abs.len() - 1) as f64).sqrt()
    };
    (rmse, sd)
}

fn log_ratio(a: f64, b: f64) -> Option<f64> {
    (a > 0.0 && b > 0.0).then(|| (a / b).ln())
}

/// Aggregates one grid point into a report row.
pub fn summarize(point: &GridPoint) -> ReportRow {
    let kept: Vec<&ReplicateEstimate> = point.replicates.iter().flatten().collect();
    let total = point.replicates.len() as u64;
    let p0 = model::population_prevalence(&point.spec);
    let p_testing = model::testing_prevalence(&point.spec).unwrap_or(f64::NAN);

    let p_hats: Vec<f64> = kept.iter().map(|r| r.p_hat).collect();
    let p0_hats: Vec<f64> = kept.iter().map(|r| r.p0_hat).collect();
    let strat: Vec<f64> = kept.iter().filter_map(|r| r.p0_poststrat).collect();
    let (mean_p_hat, mean_p0_hat) = if kept.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean(&p_hats), mean(&p0_hats))
    };
    let (rmse_p0_hat, sd_p0_hat) = if kept.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        rmse_and_sd(&p0_hats, p0)
    };
    let (rmse_poststrat, sd_poststrat) = if strat.is_empty() {
        (None, None)
    } else {
        let (r, s) = rmse_and_sd(&strat, p0);
        (Some(r), Some(s))
    };
    let boundary = kept.iter().filter(|r| r.ci_p0.is_none()).count() as u64;
    let covered = kept
        .iter()
        .filter(|r| r.ci_p0.is_some_and(|ci| ci.contains(p0)))
        .count() as u64;

    ReportRow {
        n: point.n,
        replicates: total,
        discarded: total - kept.len() as u64,
        mean_p_hat,
        mean_p0_hat,
        i_t: log_ratio(mean_p_hat, p0),
        i_c: log_ratio(mean_p0_hat, mean_p_hat),
        i_plus: log_ratio(mean_p0_hat, p0),
        p0,
        p_testing,
        i_t_exact: log_ratio(p_testing, p0),
        rmse_p0_hat,
        sd_p0_hat,
        rmse_poststrat,
        sd_poststrat,
        boundary,
        covered,
        coverage: covered as f64 / total as f64,
    }
}

/// Per-replicate interval records, replicate-major within each `N`.
pub fn ci_records(point: &GridPoint) -> Vec<CiRecord> {
    let p0 = model::population_prevalence(&point.spec);
    point
        .replicates
        .iter()
        .enumerate()
        .map(|(r, rep)| {
            let ci = rep.as_ref().and_then(|e| e.ci_p0);
            CiRecord {
                replicate: r as u64,
                n: point.n,
                p0_hat: rep.as_ref().map(|e| e.p0_hat),
                lo: ci.map(|c| c.lo),
                hi: ci.map(|c| c.hi),
                hit: ci.is_some_and(|c| c.contains(p0)),
            }
        })
        .collect()
}

/// Runs the whole scenario and builds every table.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    let points = simulate(cfg)?;
    Ok(ExperimentReport {
        label: cfg.label.clone(),
        mechanism: cfg.mechanism()?.name().to_string(),
        seed: cfg.seed,
        replicates: cfg.replicates,
        alpha: cfg.alpha,
        rows: points.iter().map(summarize).collect(),
        ci_fan: points.iter().flat_map(ci_records).collect(),
    })
}

/// Active information table. Probabilities are averaged over replicates
/// before logs are taken.
pub fn run_active_info_table(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    let mut report = run_experiment(cfg)?;
    report.ci_fan.clear();
    Ok(report)
}

/// RMSE of the corrected estimate against `p0` at each `N`.
pub fn run_rmse_table(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run_active_info_table(cfg)
}

/// Coverage of the logit interval for `p0`. Only defined for MAR scenarios.
pub fn run_coverage_table(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    match cfg.mechanism()? {
        Mechanism::Mar { .. } => run_active_info_table(cfg),
        other => Err(Error::UnsupportedMechanism(format!(
            "coverage needs a MAR scenario, got {}",
            other.name()
        ))),
    }
}

/// Interval records of every replicate at every `N`.
pub fn emit_ci_fan(cfg: &ScenarioConfig) -> Result<Vec<CiRecord>> {
    Ok(simulate(cfg)?.iter().flat_map(ci_records).collect())
}

/// Built-in scenarios reproducing the simulation study.
pub mod scenarios {
    use super::*;
    use crate::config::{Decimal, MechanismConfig, PopulationDesign};

    pub const DEFAULT_SEED: u64 = 20_230_601;

    pub fn study_grid() -> Vec<u64> {
        vec![1_000, 10_000, 100_000, 1_000_000]
    }

    fn dec(s: &str) -> Decimal {
        s.parse().expect("literal decimal")
    }

    fn design(shares: [[&str; 2]; 2], testing: [[&str; 2]; 2]) -> PopulationDesign {
        PopulationDesign {
            shares: shares.iter().map(|r| [dec(r[0]), dec(r[1])]).collect(),
            testing: testing.iter().map(|r| [dec(r[0]), dec(r[1])]).collect(),
        }
    }

    fn scenario(label: &str, population: PopulationDesign, mechanism: MechanismConfig) -> ScenarioConfig {
        ScenarioConfig {
            label: label.into(),
            population,
            mechanism,
            n_grid: study_grid(),
            replicates: 500,
            alpha: 0.05,
            seed: DEFAULT_SEED,
        }
    }

    const BASE_SHARES: [[&str; 2]; 2] = [["0.75", "0.05"], ["0.05", "0.15"]];

    /// Everyone tested with probability 0.6.
    pub fn mcar() -> ScenarioConfig {
        scenario("mcar", design(BASE_SHARES, [["0.6", "0.6"], ["0.6", "0.6"]]), MechanismConfig::Mcar)
    }

    /// Symptomatic class tested with probability 0.9, asymptomatic with 0.1.
    pub fn mar() -> ScenarioConfig {
        scenario(
            "mar",
            design(BASE_SHARES, [["0.1", "0.1"], ["0.9", "0.9"]]),
            MechanismConfig::Mar { stratum_shares: None },
        )
    }

    /// Testing depends on infection status; corrected with the MAR estimator.
    pub fn mnar() -> ScenarioConfig {
        scenario(
            "mnar",
            design(BASE_SHARES, [["0.2", "0.3"], ["0.7", "0.8"]]),
            MechanismConfig::Mar { stratum_shares: None },
        )
    }

    /// Coverage scenario with `rho_1 = 0.1`, `p0 = 0.05`.
    pub fn coverage_small() -> ScenarioConfig {
        scenario(
            "coverage_small",
            design([["0.89", "0.01"], ["0.06", "0.04"]], [["0.1", "0.1"], ["0.9", "0.9"]]),
            MechanismConfig::Mar { stratum_shares: None },
        )
    }

    /// Coverage scenario with `rho_1 = 0.2`, `p0 = 0.15`.
    pub fn coverage_large() -> ScenarioConfig {
        scenario(
            "coverage_large",
            design([["0.77", "0.03"], ["0.08", "0.12"]], [["0.1", "0.1"], ["0.9", "0.9"]]),
            MechanismConfig::Mar { stratum_shares: None },
        )
    }

    pub fn all() -> Vec<ScenarioConfig> {
        vec![mcar(), mar(), mnar(), coverage_small(), coverage_large()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mut cfg: ScenarioConfig) -> ScenarioConfig {
        cfg.n_grid = vec![1_000, 10_000];
        cfg.replicates = 50;
        cfg
    }

    #[test]
    fn row_and_record_counts() {
        let cfg = small(scenarios::mar());
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.ci_fan.len(), 100);
        for row in &report.rows {
            assert!((0.0..=1.0).contains(&row.coverage));
            assert!(row.rmse_p0_hat >= 0.0);
            assert_eq!(row.discarded, 0);
        }
    }

    #[test]
    fn fan_hits_match_coverage() {
        let cfg = small(scenarios::coverage_large());
        let report = run_experiment(&cfg).unwrap();
        for row in &report.rows {
            let hits = report.ci_fan.iter().filter(|r| r.n == row.n && r.hit).count() as u64;
            assert_eq!(hits, row.covered);
        }
    }

    #[test]
    fn coverage_requires_mar() {
        let cfg = small(scenarios::mcar());
        assert!(matches!(run_coverage_table(&cfg), Err(Error::UnsupportedMechanism(_))));
    }

    #[test]
    fn mcar_correction_is_exactly_zero() {
        let report = run_active_info_table(&small(scenarios::mcar())).unwrap();
        for row in &report.rows {
            assert_eq!(row.i_c, Some(0.0));
            assert_eq!(row.i_plus, row.i_t);
        }
    }

    #[test]
    fn alpha_one_never_covers() {
        let mut cfg = small(scenarios::coverage_large());
        cfg.alpha = 1.0;
        cfg.n_grid = vec![100_000];
        let report = run_coverage_table(&cfg).unwrap();
        assert_eq!(report.rows[0].coverage, 0.0);
    }

    #[test]
    fn empty_classes_are_discarded() {
        let mut cfg = small(scenarios::mar());
        cfg.n_grid = vec![20];
        cfg.replicates = 200;
        let report = run_experiment(&cfg).unwrap();
        // 16 asymptomatic people each tested with probability 0.1
        assert!(report.rows[0].discarded > 0);
        assert_eq!(report.rows[0].replicates, 200);
    }
}
