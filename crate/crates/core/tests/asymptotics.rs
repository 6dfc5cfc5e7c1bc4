use dosebounds::asymptotics::{
    bahadur_slope_frozen, design_sensitivity, design_sensitivity_frozen, freeze, DgpSpec,
};
use dosebounds::dgp::{BuiltinDgp, DoseDist, PairDraw, Sampler, SamplerRef};
use dosebounds::pairs::DoseLink;
use dosebounds::scores::Phi;
use dosebounds::Error;
use rand_chacha::ChaCha8Rng;

/// Unit dose gap; concordant in exactly a share θ of every 20 draws.
struct Stratified {
    theta: f64,
}

impl Sampler for Stratified {
    fn sample(&self, index: u64, _rng: &mut ChaCha8Rng) -> PairDraw {
        let c = ((index % 20) as f64 + 0.5) / 20.0 < self.theta;
        PairDraw {
            z1: 1.0,
            z2: 0.0,
            y1: if c { 1.0 } else { -1.0 },
            y2: 0.0,
        }
    }
}

fn spec(sampler: SamplerRef, phi: &str, draws: usize) -> DgpSpec {
    DgpSpec {
        sampler,
        link: DoseLink::Identity,
        phi: Phi::named_or_expr(phi).unwrap(),
        mc_draws: draws,
        seed: 1,
        antithetic: false,
    }
}

#[test]
fn constant_gap_sign_test_has_closed_form() {
    for theta in [0.6, 0.75, 0.9] {
        let d = design_sensitivity(
            &spec(SamplerRef::new(Stratified { theta }), "mcnemar", 20_000),
            1e-12,
        )
        .unwrap();
        let target = theta / (1.0 - theta);
        assert!(
            (d.gamma_bar_star - target).abs() < 1e-8 * target,
            "{theta}: {}",
            d.gamma_bar_star
        );
        assert!(d.monotone);
        assert!(!d.null_case);
    }
}

#[test]
fn null_process_has_unit_design_sensitivity() {
    let dgp = BuiltinDgp::PairedNormal {
        dose: DoseDist::Uniform { lo: 0.0, hi: 1.0 },
        effect: 0.0,
        noise_sd: 1.0,
    };
    let mut s = spec(SamplerRef::new(dgp), "wilcoxon", 20_000);
    s.antithetic = true;
    let d = design_sensitivity(&s, 1e-9).unwrap();
    assert!(d.null_case);
    assert_eq!(d.gamma_bar_star, 1.0);
}

#[test]
fn slope_shrinks_to_zero_and_errors_beyond() {
    let frozen = freeze(&spec(
        SamplerRef::new(Stratified { theta: 0.8 }),
        "mcnemar",
        20_000,
    ))
    .unwrap();
    let star = design_sensitivity_frozen(&frozen, 1e-12)
        .unwrap()
        .gamma_bar_star;
    let mut last = f64::INFINITY;
    for g in [1.0, 1.5, 2.0, 3.0, star] {
        let b = bahadur_slope_frozen(&frozen, g, 1e-10).unwrap();
        assert!(b.slope <= last && b.slope >= 0.0);
        last = b.slope;
    }
    assert_eq!(last, 0.0);
    let e = bahadur_slope_frozen(&frozen, star * 1.2, 1e-10).unwrap_err();
    assert!(matches!(e, Error::AboveDesignSensitivity { .. }));
}

#[test]
fn replicable_under_a_seed() {
    let dgp = BuiltinDgp::PairedNormal {
        dose: DoseDist::LogNormal {
            mu: 0.0,
            sigma: 0.5,
        },
        effect: 0.5,
        noise_sd: 1.0,
    };
    let mut s = spec(SamplerRef::new(dgp), "double-rank", 30_000);
    s.link = DoseLink::Log;
    let a = design_sensitivity(&s, 1e-9).unwrap();
    let b = design_sensitivity(&s, 1e-9).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert!(a.gamma_bar_star > 1.0);
    assert!(a.mc_std_err > 0.0);
    s.mc_draws = 100;
    assert!(design_sensitivity(&s, 1e-9).is_err());
}
