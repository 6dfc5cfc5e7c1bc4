//! Per-pair bias bounds Γᵢ = exp(γ·|φ(z_hi) − φ(z_lo)|), their mean Γ̄, and
//! recovery of γ from a target Γ̄ by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{DoseLink, MatchedSample};

/// Relative tolerance on Γ̄ used when none is given.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest exponent γ·gap accepted before exponentiation.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule {
    gamma: Option<f64>,
    gaps: Option<Vec<f64>>,
    gamma_i: Vec<f64>,
    gamma_bar: f64,
    p_plus: Vec<f64>,
    pair_ids: Vec<String>,
}

impl GammaSchedule {
    /// Schedule from γ and per-pair dose gaps.
    pub fn from_gaps(gamma: f64, gaps: Vec<f64>, pair_ids: Vec<String>) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        check_gaps(&gaps)?;
        if pair_ids.len() != gaps.len() {
            return Err(Error::LengthMismatch("pair ids and gaps".into()));
        }
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        if gamma * max_gap > MAX_EXPONENT {
            return Err(Error::Range(format!(
                "gamma * gap = {} exceeds {MAX_EXPONENT}",
                gamma * max_gap
            )));
        }
        let gamma_i: Vec<f64> = gaps.iter().map(|g| (gamma * g).exp()).collect();
        Ok(Self::assemble(Some(gamma), Some(gaps), gamma_i, pair_ids))
    }

    /// Schedule from a user-supplied Γᵢ vector, bypassing γ and the dose link.
    pub fn from_explicit(gamma_i: Vec<f64>, pair_ids: Vec<String>) -> Result<Self> {
        if gamma_i.is_empty() {
            return Err(Error::EmptySample);
        }
        if pair_ids.len() != gamma_i.len() {
            return Err(Error::LengthMismatch("pair ids and Gamma_i".into()));
        }
        if let Some(bad) = gamma_i.iter().find(|g| !(**g >= 1.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "every Gamma_i must be >= 1, got {bad}"
            )));
        }
        Ok(Self::assemble(None, None, gamma_i, pair_ids))
    }

    /// Same Γᵢ for every pair: the classic binary-treatment bound.
    pub fn uniform(gamma_value: f64, n: usize) -> Result<Self> {
        Self::from_explicit(
            vec![gamma_value; n],
            (1..=n).map(|i| i.to_string()).collect(),
        )
    }

    fn assemble(
        gamma: Option<f64>,
        gaps: Option<Vec<f64>>,
        gamma_i: Vec<f64>,
        pair_ids: Vec<String>,
    ) -> Self {
        let gamma_bar = gamma_i.iter().sum::<f64>() / gamma_i.len() as f64;
        let p_plus = gamma_i.iter().map(|g| g / (1.0 + g)).collect();
        Self {
            gamma,
            gaps,
            gamma_i,
            gamma_bar,
            p_plus,
            pair_ids,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn gaps(&self) -> Option<&[f64]> {
        self.gaps.as_deref()
    }

    pub fn gamma_i(&self) -> &[f64] {
        &self.gamma_i
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    /// Γᵢ/(1+Γᵢ) per pair.
    pub fn p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    /// 1/(1+Γᵢ) per pair.
    pub fn p_minus(&self) -> Vec<f64> {
        self.gamma_i.iter().map(|g| 1.0 / (1.0 + g)).collect()
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    pub fn len(&self) -> usize {
        self.gamma_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma_i.is_empty()
    }

    pub fn to_json(&self) -> ScheduleJson {
        ScheduleJson {
            gamma: self.gamma,
            gamma_bar: self.gamma_bar,
            per_pair: (0..self.len())
                .map(|i| PairBoundJson {
                    pair_id: self.pair_ids[i].clone(),
                    gap: self.gaps.as_ref().map(|g| g[i]),
                    gamma_i: self.gamma_i[i],
                    p_plus: self.p_plus[i],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub gamma: Option<f64>,
    pub gamma_bar: f64,
    pub per_pair: Vec<PairBoundJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBoundJson {
    pub pair_id: String,
    pub gap: Option<f64>,
    #[serde(rename = "Gamma_i")]
    pub gamma_i: f64,
    pub p_plus: f64,
}

fn check_gaps(gaps: &[f64]) -> Result<()> {
    if gaps.is_empty() {
        return Err(Error::EmptySample);
    }
    if gaps.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter(
            "gaps must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

fn pair_ids(sample: &MatchedSample) -> Vec<String> {
    sample.pairs().iter().map(|p| p.pair_id.clone()).collect()
}

pub fn schedule_from_gamma(
    gamma: f64,
    sample: &MatchedSample,
    link: &DoseLink,
) -> Result<GammaSchedule> {
    GammaSchedule::from_gaps(gamma, link.gaps(sample)?, pair_ids(sample))
}

pub fn schedule_from_gamma_bar(
    gamma_bar: f64,
    sample: &MatchedSample,
    link: &DoseLink,
    tol: f64,
) -> Result<GammaSchedule> {
    let gaps = link.gaps(sample)?;
    let gamma = solve_gamma(&gaps, gamma_bar, tol)?;
    GammaSchedule::from_gaps(gamma, gaps, pair_ids(sample))
}

/// Mean of exp(γ·gapᵢ).
pub fn mean_gamma(gaps: &[f64], gamma: f64) -> f64 {
    gaps.iter().map(|g| (gamma * g).exp()).sum::<f64>() / gaps.len() as f64
}

/// Finds γ̃ ≥ 0 with mean(exp(γ̃·gapᵢ)) = `gamma_bar`.
///
/// The upper end of the bracket starts at 1 and doubles until the mean
/// exceeds the target; bisection then runs until the bracket stops shrinking,
/// so the residual is far below `tol · gamma_bar` on return.
pub fn solve_gamma(gaps: &[f64], gamma_bar: f64, tol: f64) -> Result<f64> {
    check_gaps(gaps)?;
    if !(gamma_bar >= 1.0) || !gamma_bar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma_bar must be >= 1, got {gamma_bar}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if gamma_bar == 1.0 {
        return Ok(0.0);
    }
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    if max_gap == 0.0 {
        return Err(Error::Degenerate("all dose gaps are zero".into()));
    }
    let target = gamma_bar;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while mean_gamma(gaps, hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi * max_gap > MAX_EXPONENT {
            // one last try at the cap itself
            let cap = MAX_EXPONENT / max_gap;
            if mean_gamma(gaps, cap) < target {
                return Err(Error::Range(format!(
                    "gamma_bar {gamma_bar} needs gamma * gap above {MAX_EXPONENT}"
                )));
            }
            hi = cap;
            break;
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = mean_gamma(gaps, mid);
        if value == target {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f_lo, f_hi) = (mean_gamma(gaps, lo) - target, mean_gamma(gaps, hi) - target);
    let best = if f_lo.abs() <= f_hi.abs() { lo } else { hi };
    let residual = (mean_gamma(gaps, best) - target).abs();
    if residual > tol * target {
        return Err(Error::Bracket(format!(
            "bisection residual {residual:e} above tolerance {:e}",
            tol * target
        )));
    }
    Ok(best)
}

/// The generalized Rosenbaum bounds (1/(1+Γᵢ), Γᵢ/(1+Γᵢ)) for pair `i`.
pub fn dose_assignment_bounds(schedule: &GammaSchedule, i: usize) -> Result<(f64, f64)> {
    let g = *schedule.gamma_i.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        len: schedule.len(),
    })?;
    Ok((1.0 / (1.0 + g), g / (1.0 + g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn zero_gamma_is_randomization() {
        let s = GammaSchedule::from_gaps(0.0, vec![0.3, 2.0, 5.0], ids(3)).unwrap();
        assert!(s.gamma_i().iter().all(|&g| g == 1.0));
        assert_eq!(s.gamma_bar(), 1.0);
        assert!(s.p_plus().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn closed_form_exponentials() {
        let s = GammaSchedule::from_gaps(2f64.ln(), vec![1.0, 2.0], ids(2)).unwrap();
        assert!((s.gamma_i()[0] - 2.0).abs() < 1e-14);
        assert!((s.gamma_i()[1] - 4.0).abs() < 1e-14);
        assert!((s.gamma_bar() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn log_link_unit_gap() {
        let sample = MatchedSample::from_rows(&[(std::f64::consts::E, 1.0, 0.0, 0.0)]).unwrap();
        let s = schedule_from_gamma(1.0, &sample, &DoseLink::Log).unwrap();
        assert!((s.gamma_i()[0] - std::f64::consts::E).abs() < 1e-14);
    }

    #[test]
    fn recovers_ln2_from_gamma_bar_three() {
        let g = solve_gamma(&[1.0, 2.0], 3.0, DEFAULT_TOL).unwrap();
        assert!((g - 2f64.ln()).abs() < 1e-12);
        assert_eq!(solve_gamma(&[1.0, 2.0], 1.0, DEFAULT_TOL).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(GammaSchedule::from_gaps(-0.1, vec![1.0], ids(1)).is_err());
        assert!(solve_gamma(&[1.0], 0.5, DEFAULT_TOL).is_err());
        assert!(matches!(
            solve_gamma(&[0.0, 0.0], 2.0, DEFAULT_TOL),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            solve_gamma(&[1.0], 1e308, DEFAULT_TOL),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            GammaSchedule::from_gaps(800.0, vec![1.0], ids(1)),
            Err(Error::Range(_))
        ));
        let s = GammaSchedule::uniform(2.0, 2).unwrap();
        assert!(matches!(
            dose_assignment_bounds(&s, 5),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(GammaSchedule::from_explicit(vec![0.5], ids(1)).is_err());
    }

    #[test]
    fn assignment_bounds() {
        for (g, lo, hi) in [
            (1.0, 0.5, 0.5),
            (2.0, 1.0 / 3.0, 2.0 / 3.0),
            (3.0, 0.25, 0.75),
        ] {
            let s = GammaSchedule::uniform(g, 1).unwrap();
            let (l, h) = dose_assignment_bounds(&s, 0).unwrap();
            assert!((l - lo).abs() < 1e-15 && (h - hi).abs() < 1e-15);
            assert!((l + h - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn json_shape() {
        let s = GammaSchedule::from_gaps(0.5, vec![1.0], vec!["a".into()]).unwrap();
        let v = serde_json::to_value(s.to_json()).unwrap();
        assert_eq!(v["per_pair"][0]["pair_id"], "a");
        assert!(v["per_pair"][0]["Gamma_i"].as_f64().unwrap() > 1.0);
        assert_eq!(v["gamma"], 0.5);
    }

    proptest! {
        #[test]
        fn monotone_in_gamma(gaps in prop::collection::vec(0.01f64..3.0, 1..20), g in 0.0f64..2.0, dg in 0.001f64..1.0) {
            let a = GammaSchedule::from_gaps(g, gaps.clone(), ids(gaps.len())).unwrap();
            let b = GammaSchedule::from_gaps(g + dg, gaps.clone(), ids(gaps.len())).unwrap();
            prop_assert!(b.gamma_bar() > a.gamma_bar());
            for (x, y) in a.gamma_i().iter().zip(b.gamma_i()) {
                prop_assert!(y > x);
            }
        }

        #[test]
        fn equal_gaps_give_equal_bounds(gap in 0.01f64..3.0, n in 1usize..20, g in 0.0f64..3.0) {
            let s = GammaSchedule::from_gaps(g, vec![gap; n], ids(n)).unwrap();
            for x in s.gamma_i() {
                prop_assert!((x - s.gamma_bar()).abs() <= 1e-12 * s.gamma_bar());
            }
        }

        #[test]
        fn bisection_residual_and_round_trip(gaps in prop::collection::vec(0.01f64..3.0, 1..30), g0 in 0.01f64..3.0) {
            let target = mean_gamma(&gaps, g0);
            let g = solve_gamma(&gaps, target, DEFAULT_TOL).unwrap();
            prop_assert!((mean_gamma(&gaps, g) - target).abs() <= DEFAULT_TOL * target);
            prop_assert!((g - g0).abs() <= 10.0 * DEFAULT_TOL * g0.max(1.0));
        }
    }
}
