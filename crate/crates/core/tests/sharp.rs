mod common;

use dosebounds::gamma::{schedule_from_gamma_bar, GammaSchedule};
use dosebounds::pairs::{DoseLink, EffectModel, MatchedSample};
use dosebounds::scores::{score, ScoreSpec};
use dosebounds::sharp::{confidence_region, worst_case_pvalue, Method, SearchRegion};
use dosebounds::Error;
use proptest::prelude::*;
use rand::Rng;

fn sample(seed: u64, n: usize, shift: f64) -> MatchedSample {
    let mut rng = common::rng(seed);
    let rows: Vec<_> = (0..n)
        .map(|_| {
            let z1: f64 = rng.random::<f64>() * 2.0;
            let z2: f64 = rng.random::<f64>() * 2.0;
            (
                z1,
                z2,
                shift * z1 + common::normal(&mut rng),
                shift * z2 + common::normal(&mut rng),
            )
        })
        .collect();
    MatchedSample::from_rows(&rows).unwrap()
}

#[test]
fn exact_and_monte_carlo_match_enumeration() {
    for seed in 0..15u64 {
        let n = 3 + seed as usize % 10;
        let s = sample(seed, n, 0.5);
        let sched =
            schedule_from_gamma_bar(1.0 + seed as f64 * 0.2, &s, &DoseLink::Identity, 1e-12)
                .unwrap();
        let scored = score(&s, &ScoreSpec::double_rank()).unwrap();
        let p_plus = sched.p_plus();
        let greater = common::enumerate_tail(&scored.q, p_plus, scored.t_obs);
        // lower tail: P(T⁻ ≤ t) = P(Σq(1−B) ≥ Σq − t) with B ~ Bernoulli(1 − p⁻) = Bernoulli(p⁺)
        let less = common::enumerate_tail(&scored.q, p_plus, scored.sum_q() - scored.t_obs);
        let exact = worst_case_pvalue(&scored, &sched, Method::Exact).unwrap();
        assert!((exact.p_greater - greater).abs() < 1e-12, "seed {seed}");
        assert!((exact.p_less - less).abs() < 1e-12, "seed {seed}");
        let mc =
            worst_case_pvalue(&scored, &sched, Method::MonteCarlo { reps: 50_000, seed }).unwrap();
        let se = (greater * (1.0 - greater) / 5e4).sqrt().max(1e-4);
        assert!((mc.p_greater - greater).abs() < 4.0 * se, "seed {seed}");
        assert_eq!(mc.mc_reps, Some(50_000));
    }
}

#[test]
fn exact_refuses_large_samples() {
    let s = sample(1, 30, 0.0);
    let scored = score(&s, &ScoreSpec::wilcoxon()).unwrap();
    let sched = GammaSchedule::uniform(1.0, 30).unwrap();
    let e = worst_case_pvalue(&scored, &sched, Method::Exact).unwrap_err();
    assert!(matches!(e, Error::TooLargeForEnumeration { pairs: 30, .. }));
    assert!(worst_case_pvalue(&scored, &sched, Method::MonteCarlo { reps: 10, seed: 1 }).is_err());
}

#[test]
fn auto_method_thresholds() {
    assert_eq!(Method::auto(20, None).unwrap(), Method::Exact);
    assert_eq!(Method::auto(100, None).unwrap(), Method::Normal);
    assert!(Method::auto(50, None).is_err());
    assert!(matches!(
        Method::auto(50, Some(3)).unwrap(),
        Method::MonteCarlo { seed: 3, .. }
    ));
}

#[test]
fn monte_carlo_is_monotone_for_a_fixed_seed() {
    let s = sample(9, 40, 0.4);
    let scored = score(&s, &ScoreSpec::wilcoxon()).unwrap();
    let mut last = 0.0;
    for g in [1.0, 1.2, 1.5, 2.0, 3.0, 5.0] {
        let sched = schedule_from_gamma_bar(g, &s, &DoseLink::Identity, 1e-12).unwrap();
        let p = worst_case_pvalue(
            &scored,
            &sched,
            Method::MonteCarlo {
                reps: 20_000,
                seed: 4,
            },
        )
        .unwrap();
        assert!(p.p_greater >= last);
        last = p.p_greater;
    }
}

#[test]
fn interval_contains_truth_and_grows() {
    let s = sample(21, 60, 1.0);
    let model = EffectModel::Constant { beta: 0.0 };
    let spec = ScoreSpec::wilcoxon();
    let mut prev: Option<[f64; 2]> = None;
    for g in [1.0, 1.5, 2.5] {
        let sched = schedule_from_gamma_bar(g, &s, &DoseLink::Identity, 1e-12).unwrap();
        let ci = confidence_region(
            &s,
            &model,
            &spec,
            &sched,
            0.05,
            Method::Normal,
            &SearchRegion::auto(),
        )
        .unwrap();
        let [lo, hi] = ci.interval.unwrap();
        assert!(lo < 1.0 && 1.0 < hi, "{g}: [{lo}, {hi}]");
        if let Some([plo, phi]) = prev {
            assert!(lo <= plo + 1e-6 && phi <= hi + 1e-6);
        }
        prev = Some([lo, hi]);
    }
}

#[test]
fn unbounded_sides_serialize_as_null() {
    // two pairs cannot reject anything at α = 0.05
    let s = MatchedSample::from_rows(&[(1.0, 0.0, 1.0, 0.0), (2.0, 0.0, 3.0, 0.0)]).unwrap();
    let sched = GammaSchedule::uniform(1.0, 2).unwrap();
    let ci = confidence_region(
        &s,
        &EffectModel::Constant { beta: 0.0 },
        &ScoreSpec::wilcoxon(),
        &sched,
        0.05,
        Method::Exact,
        &SearchRegion::auto(),
    )
    .unwrap();
    assert_eq!(ci.interval, Some([f64::NEG_INFINITY, f64::INFINITY]));
    let json = serde_json::to_value(&ci).unwrap();
    assert_eq!(json["interval"], serde_json::json!([null, null]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_values_are_probabilities_and_ordered(seed in 0u64..10_000, n in 2usize..14, g in 1.0..6.0f64) {
        let s = sample(seed, n, 0.3);
        let scored = score(&s, &ScoreSpec::wilcoxon()).unwrap();
        let one = GammaSchedule::uniform(1.0, n).unwrap();
        let sched = schedule_from_gamma_bar(g, &s, &DoseLink::Identity, 1e-12).unwrap();
        let a = worst_case_pvalue(&scored, &one, Method::Exact).unwrap();
        let b = worst_case_pvalue(&scored, &sched, Method::Exact).unwrap();
        for r in [&a, &b] {
            prop_assert!((0.0..=1.0).contains(&r.p_greater));
            prop_assert!((0.0..=1.0).contains(&r.p_less));
            prop_assert!(r.p_two_sided >= r.p_greater.min(r.p_less));
        }
        prop_assert!(b.p_greater >= a.p_greater - 1e-12);
        prop_assert!(b.p_less >= a.p_less - 1e-12);
        // at Γ̄ = 1 the two tails cover everything
        prop_assert!(a.p_greater + a.p_less >= 1.0 - 1e-12);
    }
}
