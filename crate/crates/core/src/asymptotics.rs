//! Monte-Carlo calculators for the design sensitivity Γ̄* and the Bahadur
//! slope of a sensitivity analysis.
//!
//! Both work on one frozen set of draws: the dose and outcome differences
//! are ranked by their empirical CDFs (right-continuous, k/n), scored with
//! φ, and every expectation is a sample mean over the same draws, so the
//! equations solved below are deterministic and monotone.

use serde::{Deserialize, Serialize};

use crate::dgp::{draw_many, SamplerRef};
use crate::error::{Error, Result};
use crate::gamma::{self, MAX_EXPONENT};
use crate::mc;
use crate::pairs::DoseLink;
use crate::scores::Phi;

pub const MIN_DRAWS: usize = 10_000;
pub const DEFAULT_DESIGN_DRAWS: usize = 1_000_000;
pub const DEFAULT_SLOPE_DRAWS: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub sampler: SamplerRef,
    pub link: DoseLink,
    pub phi: Phi,
    pub mc_draws: usize,
    pub seed: u64,
    /// Mirror every second draw (Y₁ ↔ Y₂). Only meaningful for processes
    /// whose null is symmetric; it removes sampling noise from the
    /// concordance share under that null.
    pub antithetic: bool,
}

/// Per-draw quantities entering the expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenDraws {
    pub gaps: Vec<f64>,
    pub phi: Vec<f64>,
    pub concordant: Vec<bool>,
}

/// Right-continuous empirical CDF of `values` evaluated at each value.
pub fn ecdf_at_points(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .map(|v| sorted.partition_point(|s| s <= v) as f64 / n)
        .collect()
}

pub fn freeze(dgp: &DgpSpec) -> Result<FrozenDraws> {
    if dgp.mc_draws < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_DRAWS} draws are required, got {}",
            dgp.mc_draws
        )));
    }
    let draws = draw_many(
        dgp.sampler.0.as_ref(),
        dgp.mc_draws,
        dgp.seed,
        dgp.antithetic,
    );
    let n = draws.len();
    let mut abs_z = Vec::with_capacity(n);
    let mut abs_y = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    let mut concordant = Vec::with_capacity(n);
    for d in &draws {
        if !(d.z1.is_finite() && d.z2.is_finite() && d.y1.is_finite() && d.y2.is_finite()) {
            return Err(Error::InvalidParameter(
                "sampler produced a non-finite draw".into(),
            ));
        }
        abs_z.push((d.z1 - d.z2).abs());
        abs_y.push((d.y1 - d.y2).abs());
        gaps.push((dgp.link.eval(d.z1)? - dgp.link.eval(d.z2)?).abs());
        concordant.push((d.z1 - d.z2) * (d.y1 - d.y2) > 0.0);
    }
    let fz = ecdf_at_points(&abs_z);
    let fy = ecdf_at_points(&abs_y);
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let v = dgp.phi.eval(fz[i], fy[i]);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeScore { index: i, value: v });
        }
        phi.push(v);
    }
    Ok(FrozenDraws {
        gaps,
        phi,
        concordant,
    })
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Logistic Γ/(1+Γ) with Γ = exp(x), for x ≥ 0.
fn p_plus(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FrozenDraws {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// E[φ·1{concordant}].
    pub fn rhs(&self) -> f64 {
        mean(
            self.phi
                .iter()
                .zip(&self.concordant)
                .map(|(p, c)| if *c { *p } else { 0.0 }),
            self.len(),
        )
    }

    /// E[φ·Γ/(1+Γ)] with Γ = exp(γ·gap).
    pub fn lhs(&self, gamma: f64) -> f64 {
        mean(
            self.phi
                .iter()
                .zip(&self.gaps)
                .map(|(p, g)| p * p_plus(gamma * g)),
            self.len(),
        )
    }

    /// Supremum of the left-hand side as γ → ∞.
    pub fn lhs_sup(&self) -> f64 {
        mean(
            self.phi
                .iter()
                .zip(&self.gaps)
                .map(|(p, g)| if *g > 0.0 { *p } else { 0.5 * p }),
            self.len(),
        )
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSensitivityResult {
    pub gamma_star: f64,
    pub gamma_bar_star: f64,
    pub lhs_rhs_residual: f64,
    /// Delta-method standard error of Γ̄* from the draw-to-draw variation.
    pub mc_std_err: f64,
    pub gamma_star_std_err: f64,
    /// Set when the process shows no effect in the tested direction.
    pub null_case: bool,
    pub rhs: f64,
    pub lhs_at_zero: f64,
    pub bracket: [f64; 2],
    pub iterations: u32,
    /// (γ, LHS − RHS) on an even grid over [0, 2γ*] (or [0, 1] in the null case).
    pub residual_curve: Vec<[f64; 2]>,
    pub monotone: bool,
    pub draws: usize,
    pub seed: u64,
}

pub fn design_sensitivity(dgp: &DgpSpec, tol: f64) -> Result<DesignSensitivityResult> {
    let frozen = freeze(dgp)?;
    let mut r = design_sensitivity_frozen(&frozen, tol)?;
    r.seed = dgp.seed;
    Ok(r)
}

/// Solves E[φ·Γ/(1+Γ)] = E[φ·1{concordant}] for γ on given draws.
pub fn design_sensitivity_frozen(
    frozen: &FrozenDraws,
    tol: f64,
) -> Result<DesignSensitivityResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let rhs = frozen.rhs();
    let lhs0 = frozen.lhs(0.0);
    let residual = |g: f64| frozen.lhs(g) - rhs;
    let mut result = DesignSensitivityResult {
        gamma_star: 0.0,
        gamma_bar_star: 1.0,
        lhs_rhs_residual: lhs0 - rhs,
        mc_std_err: 0.0,
        gamma_star_std_err: 0.0,
        null_case: false,
        rhs,
        lhs_at_zero: lhs0,
        bracket: [0.0, 0.0],
        iterations: 0,
        residual_curve: Vec::new(),
        monotone: true,
        draws: frozen.len(),
        seed: 0,
    };
    if rhs - lhs0 <= tol {
        result.null_case = true;
        result.residual_curve = curve(&residual, 1.0);
        result.monotone = is_nondecreasing(&result.residual_curve);
        return Ok(result);
    }
    if frozen.lhs_sup() - rhs <= 0.0 {
        return Err(Error::Bracket(format!(
            "left-hand side supremum {} does not exceed right-hand side {rhs}",
            frozen.lhs_sup()
        )));
    }
    let cap = MAX_EXPONENT / frozen.max_gap();
    let (mut lo, mut hi) = (0.0, 1.0f64.min(cap));
    while residual(hi) < 0.0 {
        if hi >= cap {
            return Err(Error::Bracket(format!(
                "no sign change for gamma up to {cap}"
            )));
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    result.bracket = [lo, hi];
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || iterations >= 200 {
            break;
        }
        iterations += 1;
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rlo, rhi) = (residual(lo), residual(hi));
    let gamma_star = if rlo.abs() <= rhi.abs() { lo } else { hi };
    let res = residual(gamma_star);
    if res.abs() > tol {
        return Err(Error::Bracket(format!(
            "residual {res:e} above tolerance {tol:e}"
        )));
    }
    let n = frozen.len();
    let gamma_bar_star = gamma::mean_gamma(&frozen.gaps, gamma_star);

    // Delta method: ψᵢ = φᵢ(pᵢ(γ) − cᵢ) has mean zero at γ*.
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            let c = if frozen.concordant[i] { 1.0 } else { 0.0 };
            frozen.phi[i] * (p_plus(gamma_star * frozen.gaps[i]) - c)
        })
        .collect();
    let psi_var = variance(&psi);
    let slope = mean(
        (0..n).map(|i| {
            let p = p_plus(gamma_star * frozen.gaps[i]);
            frozen.phi[i] * frozen.gaps[i] * p * (1.0 - p)
        }),
        n,
    );
    let se_gamma = if slope > 0.0 {
        (psi_var / n as f64).sqrt() / slope
    } else {
        f64::INFINITY
    };
    let e: Vec<f64> = frozen.gaps.iter().map(|g| (gamma_star * g).exp()).collect();
    let de = mean(frozen.gaps.iter().zip(&e).map(|(g, e)| g * e), n);
    let se_bar = (de * de * se_gamma * se_gamma + variance(&e) / n as f64).sqrt();

    result.gamma_star = gamma_star;
    result.gamma_bar_star = gamma_bar_star;
    result.lhs_rhs_residual = res;
    result.mc_std_err = se_bar;
    result.gamma_star_std_err = se_gamma;
    result.iterations = iterations;
    result.residual_curve = curve(&residual, 2.0 * gamma_star);
    result.monotone = is_nondecreasing(&result.residual_curve);
    Ok(result)
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)
}

fn curve(f: &dyn Fn(f64) -> f64, upper: f64) -> Vec<[f64; 2]> {
    (0..=10)
        .map(|k| {
            let g = upper * k as f64 / 10.0;
            [g, f(g)]
        })
        .collect()
}

fn is_nondecreasing(curve: &[[f64; 2]]) -> bool {
    curve.windows(2).all(|w| w[1][1] >= w[0][1] - 1e-12)
}

/// Independent re-solves on fresh draws, for judging Monte-Carlo spread.
pub fn design_sensitivity_replicates(
    dgp: &DgpSpec,
    tol: f64,
    replicates: usize,
) -> Result<Vec<DesignSensitivityResult>> {
    (0..replicates)
        .map(|r| {
            let mut d = dgp.clone();
            d.seed = mc::derive_seed(dgp.seed, "design-sensitivity", r as u64);
            design_sensitivity(&d, tol)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BahadurResult {
    pub gamma_bar: f64,
    pub gamma_tilde: f64,
    pub mu: f64,
    pub t_tilde: f64,
    pub omega0_at_t: f64,
    pub omega1_at_zero: f64,
    pub slope: f64,
    pub draws: usize,
    pub seed: u64,
}

/// log(p·eˣ + 1 − p) without overflow.
fn log_mix(p: f64, x: f64) -> f64 {
    if x > 0.0 {
        x + (p + (1.0 - p) * (-x).exp()).ln()
    } else {
        (p * x.exp_m1()).ln_1p()
    }
}

struct Weighted<'a> {
    phi: &'a [f64],
    p: Vec<f64>,
}

impl Weighted<'_> {
    fn omega0(&self, t: f64) -> f64 {
        mean(
            self.phi
                .iter()
                .zip(&self.p)
                .map(|(f, p)| log_mix(*p, t * f)),
            self.phi.len(),
        )
    }

    fn omega1(&self, t: f64) -> f64 {
        mean(
            self.phi
                .iter()
                .zip(&self.p)
                .map(|(f, p)| f * p / (p + (1.0 - p) * (-t * f).exp())),
            self.phi.len(),
        )
    }
}

/// ω₀(t) = E[log{p⁺e^{tφ} + 1 − p⁺}] on frozen draws at sensitivity `gamma_bar`.
pub fn omega0(frozen: &FrozenDraws, gamma_bar: f64, t: f64) -> Result<f64> {
    Ok(weighted(frozen, gamma_bar)?.1.omega0(t))
}

/// ω₁(t) = E[p⁺φe^{tφ}/(p⁺e^{tφ} + 1 − p⁺)].
pub fn omega1(frozen: &FrozenDraws, gamma_bar: f64, t: f64) -> Result<f64> {
    Ok(weighted(frozen, gamma_bar)?.1.omega1(t))
}

fn weighted(frozen: &FrozenDraws, gamma_bar: f64) -> Result<(f64, Weighted<'_>)> {
    let g = gamma::solve_gamma(&frozen.gaps, gamma_bar, gamma::DEFAULT_TOL)?;
    let p = frozen.gaps.iter().map(|gap| p_plus(g * gap)).collect();
    Ok((
        g,
        Weighted {
            phi: &frozen.phi,
            p,
        },
    ))
}

pub fn bahadur_slope(dgp: &DgpSpec, gamma_bar: f64, tol: f64) -> Result<BahadurResult> {
    let frozen = freeze(dgp)?;
    let mut r = bahadur_slope_frozen(&frozen, gamma_bar, tol)?;
    r.seed = dgp.seed;
    Ok(r)
}

pub fn bahadur_slope_frozen(
    frozen: &FrozenDraws,
    gamma_bar: f64,
    tol: f64,
) -> Result<BahadurResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (gamma_tilde, w) = weighted(frozen, gamma_bar)?;
    let mu = frozen.rhs();
    let w1_zero = w.omega1(0.0);
    let mut result = BahadurResult {
        gamma_bar,
        gamma_tilde,
        mu,
        t_tilde: 0.0,
        omega0_at_t: 0.0,
        omega1_at_zero: w1_zero,
        slope: 0.0,
        draws: frozen.len(),
        seed: 0,
    };
    if mu < w1_zero - tol {
        let ds = design_sensitivity_frozen(frozen, tol)
            .map(|d| d.gamma_bar_star)
            .unwrap_or(1.0);
        return Err(Error::AboveDesignSensitivity {
            gamma_bar,
            design_sensitivity: ds,
        });
    }
    if mu - w1_zero <= tol {
        return Ok(result);
    }
    let sup = mean(
        frozen
            .phi
            .iter()
            .zip(&w.p)
            .map(|(f, p)| if *f > 0.0 && *p > 0.0 { *f } else { 0.0 }),
        frozen.len(),
    );
    if mu >= sup {
        return Err(Error::Bracket(format!(
            "mu = {mu} is not below the supremum {sup} of omega1; the slope is infinite"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while w.omega1(hi) < mu {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket("omega1 never reaches mu".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if w.omega1(mid) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = if (w.omega1(lo) - mu).abs() <= (w.omega1(hi) - mu).abs() {
        lo
    } else {
        hi
    };
    let w0 = w.omega0(t);
    result.t_tilde = t;
    result.omega0_at_t = w0;
    result.slope = 2.0 * (t * mu - w0);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{BuiltinDgp, DoseDist};

    fn dgp(sampler: BuiltinDgp, phi: &str, antithetic: bool) -> DgpSpec {
        DgpSpec {
            sampler: SamplerRef::new(sampler),
            link: DoseLink::Identity,
            phi: Phi::named_or_expr(phi).unwrap(),
            mc_draws: 20_000,
            seed: 11,
            antithetic,
        }
    }

    const DOSE: DoseDist = DoseDist::Uniform { lo: 0.0, hi: 2.0 };

    #[test]
    fn ecdf_right_continuous() {
        assert_eq!(
            ecdf_at_points(&[3.0, 1.0, 2.0, 2.0]),
            vec![1.0, 0.25, 0.75, 0.75]
        );
    }

    #[test]
    fn null_process_has_no_design_sensitivity() {
        let d = dgp(
            BuiltinDgp::PairedNormal {
                dose: DOSE,
                effect: 0.0,
                noise_sd: 1.0,
            },
            "wilcoxon",
            true,
        );
        let r = design_sensitivity(&d, DEFAULT_TOL).unwrap();
        assert!(r.null_case);
        assert_eq!(r.gamma_star, 0.0);
        assert_eq!(r.gamma_bar_star, 1.0);
    }

    #[test]
    fn effect_process_solves_equation() {
        let d = dgp(
            BuiltinDgp::PairedNormal {
                dose: DOSE,
                effect: 1.0,
                noise_sd: 1.0,
            },
            "double-rank",
            false,
        );
        let r = design_sensitivity(&d, DEFAULT_TOL).unwrap();
        assert!(r.gamma_star > 0.0 && r.gamma_bar_star > 1.0);
        assert!(r.lhs_rhs_residual.abs() <= DEFAULT_TOL);
        assert!(r.monotone);
        assert!(r.mc_std_err > 0.0 && r.mc_std_err.is_finite());
    }

    #[test]
    fn slope_vanishes_at_design_sensitivity() {
        let d = dgp(
            BuiltinDgp::PairedNormal {
                dose: DOSE,
                effect: 1.0,
                noise_sd: 1.0,
            },
            "wilcoxon",
            false,
        );
        let ds = design_sensitivity(&d, DEFAULT_TOL).unwrap();
        let b = bahadur_slope(&d, ds.gamma_bar_star, DEFAULT_TOL).unwrap();
        assert_eq!(b.t_tilde, 0.0);
        assert_eq!(b.slope, 0.0);
        let above = bahadur_slope(&d, ds.gamma_bar_star * 1.2, DEFAULT_TOL);
        assert!(matches!(above, Err(Error::AboveDesignSensitivity { .. })));
        let below = bahadur_slope(&d, 1.0, DEFAULT_TOL).unwrap();
        assert!(below.slope > 0.0);
    }

    #[test]
    fn log_mix_is_stable() {
        assert!((log_mix(0.5, 0.0)).abs() < 1e-16);
        assert!((log_mix(0.5, 800.0) - (800.0 + 0.5f64.ln())).abs() < 1e-9);
        assert!((log_mix(0.3, 1.0) - (0.3 * 1f64.exp() + 0.7).ln()).abs() < 1e-15);
    }

    #[test]
    fn too_few_draws() {
        let mut d = dgp(
            BuiltinDgp::ConcordanceBernoulli {
                dose: DOSE,
                theta: 0.7,
            },
            "mcnemar",
            false,
        );
        d.mc_draws = 100;
        assert!(freeze(&d).is_err());
    }
}
