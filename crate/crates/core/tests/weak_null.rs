mod common;

use dosebounds::gamma::schedule_from_gamma_bar;
use dosebounds::pairs::{DoseLink, MatchedSample};
use dosebounds::weak_null::{
    bounding_tail, weak_null_ci, worst_case_zscore, ObjectiveForm, SolveStatus, SolverConfig,
    WeakNullProblem,
};
use rand::Rng;

fn random_instance(seed: u64, n: usize, unit_gamma: bool) -> (Vec<f64>, Vec<f64>) {
    let mut rng = common::rng(seed);
    let tau: Vec<f64> = (0..n).map(|_| 0.4 + common::normal(&mut rng)).collect();
    let gamma: Vec<f64> = (0..n)
        .map(|_| {
            if unit_gamma {
                1.0
            } else {
                1.0 + 2.0 * rng.random::<f64>()
            }
        })
        .collect();
    (tau, gamma)
}

fn cfg(form: ObjectiveForm) -> SolverConfig {
    SolverConfig {
        form,
        ..SolverConfig::default()
    }
}

#[test]
fn branch_and_bound_matches_enumeration() {
    for seed in 0..30u64 {
        let n = 2 + (seed as usize % 7);
        let (tau, gamma) = random_instance(seed, n, false);
        let p = WeakNullProblem::new(0.0, tau.clone(), gamma.clone()).unwrap();
        for (form, expect) in [
            (ObjectiveForm::Expectation, true),
            (ObjectiveForm::AsPrinted, false),
        ] {
            let s = worst_case_zscore(&p, &cfg(form)).unwrap();
            let oracle = common::weak_null_brute_force(&tau, &gamma, expect);
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!(s.certified);
            assert!(
                (s.optimum - oracle).abs() <= 1e-6,
                "seed {seed} {form:?}: bnb {} vs oracle {oracle}",
                s.optimum
            );
            let f = p.feasibility(&s.w, &s.tau2);
            let scale = tau.iter().map(|t| t.abs()).fold(0.0, f64::max);
            assert!(f.equality_residual.abs() <= 1e-8 * scale);
            assert!(f.quadratic_slack >= -1e-8 * scale * scale);
            assert!(f.links_hold);
            assert!((p.objective(form, &s.w, &s.tau2) - s.optimum).abs() < 1e-9);
        }
    }
}

#[test]
fn unit_gamma_makes_indicators_irrelevant() {
    let p = WeakNullProblem::new(0.0, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    let s = worst_case_zscore(&p, &cfg(ObjectiveForm::AsPrinted)).unwrap();
    assert_eq!(s.optimum, 0.0);
    for seed in 100..110u64 {
        let (tau, gamma) = random_instance(seed, 6, true);
        let p = WeakNullProblem::new(0.0, tau, gamma).unwrap();
        let s = worst_case_zscore(&p, &cfg(ObjectiveForm::AsPrinted)).unwrap();
        assert_eq!(s.optimum, 0.0);
    }
}

#[test]
fn bounding_tail_examples() {
    let one = bounding_tail(&[1.0], &[-1.0], &[2.0], 1.0, 200_000, 1).unwrap();
    assert!((one.estimate - 2.0 / 3.0).abs() < 3.0 * one.std_err);
    let tau: Vec<f64> = vec![0.5, -1.0, 2.0, 0.1];
    let neg: Vec<f64> = tau.iter().map(|t| -t).collect();
    let sym = bounding_tail(&tau, &neg, &[1.0; 4], 0.0, 50_000, 2).unwrap();
    assert!(sym.estimate >= 0.5 - 3.0 * sym.std_err);
    assert!(bounding_tail(&tau, &neg[..3], &[1.0; 4], 0.0, 50_000, 2).is_err());
    assert!(bounding_tail(&tau, &neg, &[1.0; 4], 0.0, 10, 2).is_err());
}

#[test]
fn bounding_tail_matches_enumeration() {
    let mut rng = common::rng(88);
    let n = 8;
    let tau1: Vec<f64> = (0..n).map(|_| common::normal(&mut rng)).collect();
    let tau2: Vec<f64> = (0..n).map(|_| common::normal(&mut rng)).collect();
    let gamma: Vec<f64> = (0..n).map(|_| 1.0 + 2.0 * rng.random::<f64>()).collect();
    // Ỹ = Σ lo + Σ (hi − lo)·B with B ~ Bernoulli(Γ/(1+Γ))
    let lo: f64 = tau1.iter().zip(&tau2).map(|(a, b)| a.min(*b)).sum();
    let q: Vec<f64> = tau1.iter().zip(&tau2).map(|(a, b)| (a - b).abs()).collect();
    let p: Vec<f64> = gamma.iter().map(|g| g / (1.0 + g)).collect();
    for t in [-0.5, 0.0, 0.3, 0.8] {
        let exact = common::enumerate_tail(&q, &p, n as f64 * t - lo);
        let mc = bounding_tail(&tau1, &tau2, &gamma, t, 100_000, 5).unwrap();
        assert!(
            (mc.estimate - exact).abs() <= 3.0 * mc.std_err.max(1e-3),
            "t {t}: {} vs {exact}",
            mc.estimate
        );
    }
}

fn bounded_sample(n: usize, seed: u64) -> MatchedSample {
    let mut rng = common::rng(seed);
    let rows: Vec<_> = (0..n)
        .map(|_| {
            let z1: f64 = rng.random::<f64>() * 2.0;
            let z2: f64 = rng.random::<f64>() * 2.0;
            (z1, z2, z1 + rng.random::<f64>(), z2 + rng.random::<f64>())
        })
        .collect();
    MatchedSample::from_rows(&rows).unwrap()
}

#[test]
fn effect_ratio_set_rejects_far_values_and_nests() {
    let s = bounded_sample(50, 4);
    let grid: Vec<f64> = (0..=40)
        .map(|k| -100.0 + 5.0 * k as f64)
        .chain([0.5, 1.0, 1.5])
        .collect();
    let sched = schedule_from_gamma_bar(1.5, &s, &DoseLink::Identity, 1e-12).unwrap();
    let ci = weak_null_ci(&s, &sched, 0.05, &grid, &SolverConfig::default()).unwrap();
    assert!(!ci.accepted.contains(&-100.0) && !ci.accepted.contains(&100.0));
    assert!(ci.accepted.contains(&1.0));
    assert!(ci.uncertified.is_empty());
    let mut prev: Vec<f64> = Vec::new();
    for g in [1.0, 1.5, 2.5] {
        let sched = schedule_from_gamma_bar(g, &s, &DoseLink::Identity, 1e-12).unwrap();
        let ci = weak_null_ci(&s, &sched, 0.05, &grid, &SolverConfig::default()).unwrap();
        assert!(prev.iter().all(|l| ci.accepted.contains(l)), "Γ̄ = {g}");
        prev = ci.accepted;
    }
}

#[test]
fn certificate_json_fields() {
    let p = WeakNullProblem::new(0.5, vec![1.0, -0.5, 2.0], vec![1.5, 2.0, 1.2]).unwrap();
    let s = worst_case_zscore(&p, &SolverConfig::default()).unwrap();
    let v = serde_json::to_value(&s).unwrap();
    for key in [
        "lambda0",
        "tau1",
        "Gamma_i",
        "optimum",
        "gap",
        "w",
        "tau2",
        "node_count",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(s.p_upper > 0.0 && s.p_upper <= 1.0);
    assert!(matches!(
        WeakNullProblem::new(0.0, vec![0.0, 0.0], vec![1.0, 1.0]),
        Err(dosebounds::Error::Degenerate(_))
    ));
}

#[test]
fn node_limit_reports_a_bound() {
    let mut rng = common::rng(77);
    let tau: Vec<f64> = (0..14).map(|_| 0.3 + common::normal(&mut rng)).collect();
    let gamma: Vec<f64> = (0..14).map(|_| 1.0 + 3.0 * rng.random::<f64>()).collect();
    let p = WeakNullProblem::new(0.0, tau, gamma).unwrap();
    let full = worst_case_zscore(&p, &cfg(ObjectiveForm::Expectation)).unwrap();
    let capped = worst_case_zscore(
        &p,
        &SolverConfig {
            node_limit: 3,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    assert!(capped.lower_bound <= full.optimum + 1e-9);
    if capped.status == SolveStatus::Bounded {
        assert!(!capped.certified);
    }
}
