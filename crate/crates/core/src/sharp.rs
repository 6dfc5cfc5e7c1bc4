//! Worst-case p-values for sharp nulls and confidence sets by test inversion.
//!
//! Under the bounds 1/(1+Γᵢ) ≤ P(higher dose goes to unit 1) ≤ Γᵢ/(1+Γᵢ),
//! the upper tail of T is maximized by T⁺ = Σ qᵢ·Bᵢ⁺ with independent
//! Bᵢ⁺ ~ Bernoulli(Γᵢ/(1+Γᵢ)); the lower tail by the reflected T⁻ with
//! success probabilities 1/(1+Γᵢ).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::gamma::GammaSchedule;
use crate::mc;
use crate::normal;
use crate::pairs::{adjust_outcomes, EffectKind, EffectModel, MatchedSample};
use crate::scores::{score, ScoreSpec, ScoredSample};

pub const MIN_MC_REPS: u64 = 1000;
pub const DEFAULT_MC_REPS: u64 = 100_000;
/// Up to this many pairs the automatic method enumerates exactly.
pub const AUTO_EXACT_MAX: usize = 20;
/// From this many pairs on the automatic method uses the normal tail.
pub const AUTO_NORMAL_MIN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    MonteCarlo {
        reps: u64,
        seed: u64,
    },
    /// Normal approximation; rank-based statistics get a continuity
    /// correction of half their lattice span.
    Normal,
    Exact,
}

impl Method {
    /// Exact enumeration for small samples, Monte-Carlo in the middle range,
    /// normal approximation for large samples.
    pub fn auto(pairs: usize, seed: Option<u64>) -> Result<Method> {
        if pairs <= AUTO_EXACT_MAX {
            Ok(Method::Exact)
        } else if pairs >= AUTO_NORMAL_MIN {
            Ok(Method::Normal)
        } else {
            let seed = seed.ok_or_else(|| {
                Error::Config("a seed is required for Monte-Carlo p-values".into())
            })?;
            Ok(Method::MonteCarlo {
                reps: DEFAULT_MC_REPS,
                seed,
            })
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::MonteCarlo { .. } => "monte-carlo",
            Method::Normal => "normal",
            Method::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundingDistribution {
    pub q: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl BoundingDistribution {
    pub fn new(scored: &ScoredSample, schedule: &GammaSchedule) -> Result<Self> {
        check_lengths(scored, schedule)?;
        let q = scored.q.clone();
        let p_plus = schedule.p_plus().to_vec();
        let mean = q.iter().zip(&p_plus).map(|(q, p)| q * p).sum();
        let variance = q
            .iter()
            .zip(&p_plus)
            .map(|(q, p)| q * q * p * (1.0 - p))
            .sum();
        Ok(Self {
            q,
            p_plus,
            mean,
            variance,
        })
    }

    /// Mean of the reflected (lower) bounding statistic.
    pub fn mean_less(&self) -> f64 {
        self.q
            .iter()
            .zip(&self.p_plus)
            .map(|(q, p)| q * (1.0 - p))
            .sum()
    }
}

fn check_lengths(scored: &ScoredSample, schedule: &GammaSchedule) -> Result<()> {
    if scored.len() != schedule.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores but {} bias bounds",
            scored.len(),
            schedule.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub gamma_bar: f64,
    pub t_obs: f64,
    pub p_greater: f64,
    pub p_less: f64,
    pub p_two_sided: f64,
    pub method: String,
    pub mc_reps: Option<u64>,
    pub mc_std_err: Option<f64>,
    pub seed: Option<u64>,
    /// Set when every score is zero, in which case all p-values are 1.
    pub degenerate: bool,
}

pub fn two_sided(p_greater: f64, p_less: f64) -> f64 {
    (2.0 * p_greater.min(p_less)).min(1.0)
}

pub fn worst_case_pvalue(
    scored: &ScoredSample,
    schedule: &GammaSchedule,
    method: Method,
) -> Result<WorstCaseReport> {
    check_lengths(scored, schedule)?;
    let (mc_reps, seed) = match method {
        Method::MonteCarlo { reps, seed } => {
            if reps < MIN_MC_REPS {
                return Err(Error::InvalidParameter(format!(
                    "at least {MIN_MC_REPS} Monte-Carlo replicates are required, got {reps}"
                )));
            }
            (Some(reps), Some(seed))
        }
        _ => (None, None),
    };
    let mut report = WorstCaseReport {
        gamma_bar: schedule.gamma_bar(),
        t_obs: scored.t_obs,
        p_greater: 1.0,
        p_less: 1.0,
        p_two_sided: 1.0,
        method: method.name().to_string(),
        mc_reps,
        mc_std_err: None,
        seed,
        degenerate: false,
    };
    if scored.q.iter().all(|&q| q == 0.0) {
        report.degenerate = true;
        if mc_reps.is_some() {
            report.mc_std_err = Some(0.0);
        }
        return Ok(report);
    }
    let p_plus = schedule.p_plus();
    let p_minus = schedule.p_minus();
    let t = scored.t_obs;
    let (pg, pl) = match method {
        Method::Exact => (
            exact::upper_tail(&scored.q, p_plus, t)?,
            exact::lower_tail(&scored.q, &p_minus, t)?,
        ),
        Method::Normal => {
            let b = BoundingDistribution::new(scored, schedule)?;
            let sd = b.variance.sqrt();
            let half = 0.5 * scored.lattice_span.unwrap_or(0.0);
            (
                normal::upper_tail((t - half - b.mean) / sd),
                normal::cdf((t + half - b.mean_less()) / sd),
            )
        }
        Method::MonteCarlo { reps, seed } => {
            let (ge, le) = mc_counts(&scored.q, p_plus, &p_minus, t, reps, seed);
            let pg = ge as f64 / reps as f64;
            report.mc_std_err = Some((pg * (1.0 - pg) / reps as f64).sqrt());
            (pg, le as f64 / reps as f64)
        }
    };
    report.p_greater = pg.clamp(0.0, 1.0);
    report.p_less = pl.clamp(0.0, 1.0);
    report.p_two_sided = two_sided(report.p_greater, report.p_less);
    Ok(report)
}

/// Counts replicates with T⁺ ≥ t and T⁻ ≤ t. Both statistics are driven by
/// the same uniforms, so estimates are monotone in every Γᵢ for a fixed seed.
fn mc_counts(
    q: &[f64],
    p_plus: &[f64],
    p_minus: &[f64],
    t: f64,
    reps: u64,
    seed: u64,
) -> (u64, u64) {
    let slack = exact::tie_slack(q);
    let chunks = mc::map_chunks(reps, seed, |rng, _, count| {
        let mut ge = 0u64;
        let mut le = 0u64;
        for _ in 0..count {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for i in 0..q.len() {
                let u: f64 = rng.random();
                if u < p_plus[i] {
                    hi += q[i];
                }
                if u < p_minus[i] {
                    lo += q[i];
                }
            }
            ge += (hi >= t - slack) as u64;
            le += (lo <= t + slack) as u64;
        }
        (ge, le)
    });
    chunks
        .into_iter()
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// log of the normal-approximation greater-side p-value; finite far into the
/// tail where the p-value itself underflows.
pub fn log_p_greater_normal(scored: &ScoredSample, schedule: &GammaSchedule) -> Result<f64> {
    let b = BoundingDistribution::new(scored, schedule)?;
    if b.variance == 0.0 {
        return Ok(0.0);
    }
    let half = 0.5 * scored.lattice_span.unwrap_or(0.0);
    Ok(normal::log_upper_tail(
        (scored.t_obs - half - b.mean) / b.variance.sqrt(),
    ))
}

/// Worst-case p-values for the sharp null given by `model`.
pub fn pvalue_at(
    sample: &MatchedSample,
    model: &EffectModel,
    spec: &ScoreSpec,
    schedule: &GammaSchedule,
    method: Method,
) -> Result<WorstCaseReport> {
    let adjusted = adjust_outcomes(sample, model)?;
    let scored = score(&adjusted, spec)?;
    worst_case_pvalue(&scored, schedule, method)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchRegion {
    /// Explicit candidate parameter vectors.
    Grid(Vec<Vec<f64>>),
    /// Endpoint search for the constant-effect model: a coarse scan over the
    /// range of pair slopes followed by bisection at each boundary.
    /// `tol` is relative to the scanned range.
    Auto { tol: f64, coarse: usize },
}

impl SearchRegion {
    pub fn auto() -> Self {
        SearchRegion::Auto {
            tol: 1e-6,
            coarse: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub alpha: f64,
    pub model: String,
    pub gamma_bar: f64,
    pub method: String,
    pub accepted: Vec<Vec<f64>>,
    /// Hull of the accepted set for one-parameter models. Unbounded ends are
    /// infinite and serialize as `null`.
    pub interval: Option<[f64; 2]>,
    pub contiguous: bool,
}

fn model_name(kind: EffectKind) -> &'static str {
    match kind {
        EffectKind::Constant => "constant",
        EffectKind::EffectModification => "effect-modification",
        EffectKind::Kink => "kink",
    }
}

#[allow(clippy::too_many_arguments)]
pub fn confidence_region(
    sample: &MatchedSample,
    model: &EffectModel,
    spec: &ScoreSpec,
    schedule: &GammaSchedule,
    alpha: f64,
    method: Method,
    region: &SearchRegion,
) -> Result<CiReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let model = model.bind(sample)?;
    let evaluate = |beta: &[f64]| -> Result<WorstCaseReport> {
        let m = model.with_beta(beta)?;
        pvalue_at(sample, &m, spec, schedule, method)
    };
    let accept = |beta: &[f64]| -> Result<bool> { Ok(evaluate(beta)?.p_two_sided > alpha) };
    let mut report = CiReport {
        alpha,
        model: model_name(model.kind()).to_string(),
        gamma_bar: schedule.gamma_bar(),
        method: method.name().to_string(),
        accepted: Vec::new(),
        interval: None,
        contiguous: true,
    };
    match region {
        SearchRegion::Grid(points) => {
            if points.is_empty() {
                return Err(Error::InvalidParameter("empty parameter grid".into()));
            }
            let flags: Vec<bool> = points
                .par_iter()
                .map(|b| accept(b))
                .collect::<Result<Vec<_>>>()?;
            report.accepted = points
                .iter()
                .zip(&flags)
                .filter(|(_, f)| **f)
                .map(|(b, _)| b.clone())
                .collect();
            if model.kind().dim() == 1 && !report.accepted.is_empty() {
                let mut order: Vec<usize> = (0..points.len()).collect();
                order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
                let sorted: Vec<bool> = order.iter().map(|&k| flags[k]).collect();
                report.contiguous = is_contiguous(&sorted);
                let lo = report
                    .accepted
                    .iter()
                    .map(|b| b[0])
                    .fold(f64::INFINITY, f64::min);
                let hi = report
                    .accepted
                    .iter()
                    .map(|b| b[0])
                    .fold(f64::NEG_INFINITY, f64::max);
                report.interval = Some([lo, hi]);
            }
        }
        SearchRegion::Auto { tol, coarse } => {
            if model.kind() != EffectKind::Constant {
                return Err(Error::Config(
                    "automatic interval search needs the constant-effect model; supply a grid"
                        .into(),
                ));
            }
            auto_interval(
                sample,
                *tol,
                (*coarse).max(2),
                &evaluate,
                &accept,
                &mut report,
            )?;
        }
    }
    Ok(report)
}

fn is_contiguous(flags: &[bool]) -> bool {
    let first = flags.iter().position(|f| *f);
    let last = flags.iter().rposition(|f| *f);
    match (first, last) {
        (Some(a), Some(b)) => flags[a..=b].iter().all(|f| *f),
        _ => true,
    }
}

fn auto_interval(
    sample: &MatchedSample,
    tol: f64,
    coarse: usize,
    evaluate: &(dyn Fn(&[f64]) -> Result<WorstCaseReport> + Sync),
    accept: &(dyn Fn(&[f64]) -> Result<bool> + Sync),
    report: &mut CiReport,
) -> Result<()> {
    let mut slopes: Vec<f64> = sample
        .pairs()
        .iter()
        .map(|p| p.outcome_diff() / p.dose_diff())
        .collect();
    slopes.sort_by(f64::total_cmp);
    let lo = slopes[0];
    let hi = slopes[slopes.len() - 1];
    let median = slopes[slopes.len() / 2];
    let span = (hi - lo).max(1e-8 * lo.abs().max(hi.abs()).max(1.0));
    let pad = 0.5 * span;
    // Beyond the extreme slopes every adjusted difference has the same sign,
    // so acceptance just outside the range means the set is unbounded there.
    let mut points = vec![lo - pad];
    for k in 0..coarse {
        points.push(lo + span * k as f64 / (coarse - 1) as f64);
    }
    points.push(median);
    points.push(hi + pad);
    points.push(balance_point(lo - pad, hi + pad, tol * span, evaluate)?);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let flags: Vec<bool> = points
        .par_iter()
        .map(|b| accept(&[*b]))
        .collect::<Result<Vec<_>>>()?;
    report.accepted = points
        .iter()
        .zip(&flags)
        .filter(|(_, f)| **f)
        .map(|(b, _)| vec![*b])
        .collect();
    report.contiguous = is_contiguous(&flags);
    let (Some(first), Some(last)) = (
        flags.iter().position(|f| *f),
        flags.iter().rposition(|f| *f),
    ) else {
        return Ok(());
    };
    let step = tol * span;
    let lower = if first == 0 {
        f64::NEG_INFINITY
    } else {
        bisect_boundary(points[first - 1], points[first], step, accept)?
    };
    let upper = if last == points.len() - 1 {
        f64::INFINITY
    } else {
        bisect_boundary(points[last + 1], points[last], step, accept)?
    };
    report.interval = Some([lower, upper]);
    Ok(())
}

/// Where the two one-sided p-values meet. Below every pair slope the
/// greater side is the smaller one, above every slope the less side, so
/// bisection on the sign of their difference finds the most plausible value
/// even when the accepted set is much narrower than the coarse scan.
fn balance_point(
    mut below: f64,
    mut above: f64,
    step: f64,
    evaluate: &(dyn Fn(&[f64]) -> Result<WorstCaseReport> + Sync),
) -> Result<f64> {
    while above - below > step {
        let mid = 0.5 * (below + above);
        if mid == below || mid == above {
            break;
        }
        let r = evaluate(&[mid])?;
        if r.p_greater < r.p_less {
            below = mid;
        } else {
            above = mid;
        }
    }
    Ok(0.5 * (below + above))
}

/// Shrinks [rejected, accepted] (in either order) to width `step` and returns
/// the accepted end.
fn bisect_boundary(
    mut rejected: f64,
    mut accepted: f64,
    step: f64,
    accept: &(dyn Fn(&[f64]) -> Result<bool> + Sync),
) -> Result<f64> {
    while (accepted - rejected).abs() > step {
        let mid = 0.5 * (accepted + rejected);
        if mid == accepted || mid == rejected {
            break;
        }
        if accept(&[mid])? {
            accepted = mid;
        } else {
            rejected = mid;
        }
    }
    Ok(accepted)
}
