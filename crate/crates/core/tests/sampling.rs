//! Monte Carlo checks of the sampler and of the asymptotic normal laws.

use prevalence_core::model::{self, exact_quantities};
use prevalence_core::sampler::draw_outcome;
use prevalence_core::{estimators, Mechanism, PopulationSpec, RngStream};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn tested_fractions_converge_to_testing_rates() {
    // N = 20 with class shares 0.4, 0.1, 0.3, 0.2 over (s, i)
    let spec = PopulationSpec::new(20, &[[0.4, 0.1], [0.3, 0.2]], vec![[0.5, 0.5], [0.5, 0.5]]).unwrap();
    assert_eq!(spec.sizes(), &[[8, 2], [6, 4]]);
    let draws = 200_000;
    let mut sums = [[0u64; 2]; 2];
    let mut rng = RngStream::new(17, 0).rng();
    for _ in 0..draws {
        let o = draw_outcome(&spec, &mut rng);
        for (acc, c) in sums.iter_mut().zip(o.counts()) {
            acc[0] += c[0];
            acc[1] += c[1];
        }
    }
    for (acc, size) in sums.iter().zip(spec.sizes()) {
        for i in 0..2 {
            let fraction = acc[i] as f64 / (draws as f64 * size[i] as f64);
            assert!((fraction - 0.5).abs() < 0.01, "fraction {fraction}");
        }
    }
}

#[test]
fn replicate_streams_are_distinct_and_stable() {
    let spec = PopulationSpec::new(100_000, &model::reference_shares(), vec![[0.1, 0.1], [0.9, 0.9]]).unwrap();
    let a = draw_outcome(&spec, &mut RngStream::for_replicate(5, 100_000, 0).rng());
    let b = draw_outcome(&spec, &mut RngStream::for_replicate(5, 100_000, 1).rng());
    let again = draw_outcome(&spec, &mut RngStream::for_replicate(5, 100_000, 0).rng());
    assert_ne!(a, b);
    assert_eq!(a, again);
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Anderson-Darling statistic against the standard normal.
fn anderson_darling(mut z: Vec<f64>) -> f64 {
    let normal = Normal::standard();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let s: f64 = (0..n)
        .map(|i| {
            let lo = normal.cdf(z[i]).max(1e-300).ln();
            let hi = (1.0 - normal.cdf(z[n - 1 - i])).max(1e-300).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    -(n as f64) - s / n as f64
}

struct Scaled {
    p_hat: Vec<f64>,
    p0_hat: Vec<f64>,
    p_hat_conditional: Vec<f64>,
}

fn scaled_errors(spec: &PopulationSpec, reps: u64, seed: u64) -> Scaled {
    let mech = Mechanism::mar_for(spec);
    let q = exact_quantities(spec, &mech).unwrap();
    let root_n = (spec.n() as f64).sqrt();
    let mut out = Scaled { p_hat: vec![], p0_hat: vec![], p_hat_conditional: vec![] };
    for r in 0..reps {
        let o = draw_outcome(spec, &mut RngStream::for_replicate(seed, spec.n(), r).rng());
        let b = estimators::estimate(&o, &mech).unwrap();
        let (p_bar, _) = estimators::conditional_targets(spec, &o).unwrap();
        out.p_hat.push(root_n * (b.p_hat - q.p));
        out.p0_hat.push(root_n * (b.p0_hat - q.p0));
        out.p_hat_conditional.push(root_n * (b.p_hat - p_bar));
    }
    out
}

#[test]
fn scaled_errors_have_the_closed_form_variances() {
    let spec = PopulationSpec::new(100_000, &model::reference_shares(), vec![[0.1, 0.1], [0.9, 0.9]]).unwrap();
    let q = exact_quantities(&spec, &Mechanism::mar_for(&spec)).unwrap();
    let e = scaled_errors(&spec, 4_000, 99);
    // relative standard error of a sample variance from 4000 normal draws is ~2.2%
    let checks = [
        ("p", sample_variance(&e.p_hat), q.v1 + q.v2),
        ("p conditional", sample_variance(&e.p_hat_conditional), q.v1),
        ("p0", sample_variance(&e.p0_hat), q.v3),
    ];
    for (name, got, want) in checks {
        assert!((got / want - 1.0).abs() < 0.1, "{name}: {got} vs {want}");
    }
}

#[test]
fn corrected_estimate_is_asymptotically_normal() {
    let spec = PopulationSpec::new(100_000, &model::reference_shares(), vec![[0.1, 0.1], [0.9, 0.9]]).unwrap();
    let q = exact_quantities(&spec, &Mechanism::mar_for(&spec)).unwrap();
    let e = scaled_errors(&spec, 2_000, 7);
    let z: Vec<f64> = e.p0_hat.iter().map(|x| x / q.v3.sqrt()).collect();
    // 1% critical value for a fully specified null
    let a2 = anderson_darling(z);
    assert!(a2 < 3.857, "A^2 = {a2}");
}

#[test]
fn anderson_darling_flags_a_shifted_sample() {
    let z: Vec<f64> = (1..=1000).map(|i| Normal::standard().inverse_cdf(i as f64 / 1001.0) + 0.3).collect();
    assert!(anderson_darling(z) > 3.857);
}
