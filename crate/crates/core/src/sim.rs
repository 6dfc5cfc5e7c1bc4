//! Simulation of sensitivity analyses in favorable situations: power curves,
//! empirical design-sensitivity crossings, empirical slopes and coverage.
//!
//! Replicate `r` of a study draws its pairs from stream `r` of the master
//! seed, so results do not depend on the number of worker threads.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{draw_study, to_sample, SamplerRef};
use crate::error::{Error, Result};
use crate::gamma::{solve_gamma, GammaSchedule, DEFAULT_TOL};
use crate::mc;
use crate::pairs::{DoseLink, EffectModel, MatchedSample};
use crate::scores::{score, ScoreSpec};
use crate::sharp::{
    confidence_region, log_p_greater_normal, worst_case_pvalue, Method, SearchRegion,
};
use crate::weak_null::{bounding_tail, weak_null_test, McEstimate, SolverConfig};

pub const MIN_REPLICATES: usize = 200;
pub const DEFAULT_POWER_REPLICATES: usize = 1000;
pub const DEFAULT_SLOPE_REPLICATES: usize = 200;

/// A pair generator together with the dose link used for the bias schedule.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub sampler: SamplerRef,
    pub link: DoseLink,
}

impl Scenario {
    pub fn new(sampler: SamplerRef, link: DoseLink) -> Self {
        Self { sampler, link }
    }

    /// Study `replicate` of `pairs` pairs under `seed`.
    pub fn study(&self, pairs: usize, seed: u64, replicate: u64) -> Result<MatchedSample> {
        let mut rng = mc::stream_rng(seed, replicate);
        to_sample(&draw_study(self.sampler.0.as_ref(), pairs, &mut rng))
    }

    fn schedule(
        &self,
        sample: &MatchedSample,
        gaps: &[f64],
        gamma_bar: f64,
    ) -> Result<GammaSchedule> {
        let gamma = solve_gamma(gaps, gamma_bar, DEFAULT_TOL)?;
        let ids = sample.pairs().iter().map(|p| p.pair_id.clone()).collect();
        GammaSchedule::from_gaps(gamma, gaps.to_vec(), ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub pairs: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Method for each worst-case p-value. A Monte-Carlo seed is replaced by
    /// one derived from the master seed and the replicate index.
    pub method: Method,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::InvalidParameter("pairs must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_REPLICATES} replicates are required, got {}",
                self.replicates
            )));
        }
        Ok(())
    }

    fn method_for(&self, replicate: u64) -> Method {
        match self.method {
            Method::MonteCarlo { reps, .. } => Method::MonteCarlo {
                reps,
                seed: mc::derive_seed(self.seed, "pvalue", replicate),
            },
            m => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    #[serde(rename = "I")]
    pub pairs: usize,
    pub alpha: f64,
    pub test: String,
    pub method: String,
    pub gamma_bar_grid: Vec<f64>,
    pub rejections: Vec<usize>,
    pub power: Vec<f64>,
    pub std_err: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub std_err: f64,
    pub replicates: usize,
}

fn proportion(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty gamma_bar grid".into()));
    }
    if grid.iter().any(|g| !(*g >= 1.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter(
            "every gamma_bar must be finite and >= 1".into(),
        ));
    }
    Ok(())
}

/// Rejection indicators of the greater-side worst-case test for each test
/// and each Γ̄ of `grid`, one row per replicate.
fn rejections(
    scn: &Scenario,
    specs: &[&ScoreSpec],
    grid: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<Vec<Vec<bool>>>> {
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sample = scn.study(cfg.pairs, cfg.seed, r)?;
            let gaps = scn.link.gaps(&sample)?;
            let schedules = grid
                .iter()
                .map(|&g| scn.schedule(&sample, &gaps, g))
                .collect::<Result<Vec<_>>>()?;
            specs
                .iter()
                .map(|spec| {
                    let scored = score(&sample, spec)?;
                    schedules
                        .iter()
                        .map(|s| {
                            Ok(worst_case_pvalue(&scored, s, cfg.method_for(r))?.p_greater
                                <= cfg.alpha)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Power of the sensitivity analysis over a grid of Γ̄, from data generated
/// without hidden bias.
pub fn power_curve(
    scn: &Scenario,
    spec: &ScoreSpec,
    grid: &[f64],
    cfg: &SimConfig,
) -> Result<PowerCurve> {
    cfg.validate()?;
    check_grid(grid)?;
    let rows = rejections(scn, &[spec], grid, cfg)?;
    let rejections: Vec<usize> = (0..grid.len())
        .map(|k| rows.iter().filter(|r| r[0][k]).count())
        .collect();
    let (power, std_err) = rejections
        .iter()
        .map(|&h| proportion(h, cfg.replicates))
        .unzip();
    Ok(PowerCurve {
        pairs: cfg.pairs,
        alpha: cfg.alpha,
        test: spec.label(),
        method: cfg.method.name().to_string(),
        gamma_bar_grid: grid.to_vec(),
        rejections,
        power,
        std_err,
        replicates: cfg.replicates,
        seed: cfg.seed,
    })
}

pub fn estimate_power(
    scn: &Scenario,
    spec: &ScoreSpec,
    gamma_bar: f64,
    cfg: &SimConfig,
) -> Result<PowerEstimate> {
    let c = power_curve(scn, spec, &[gamma_bar], cfg)?;
    Ok(PowerEstimate {
        power: c.power[0],
        std_err: c.std_err[0],
        replicates: c.replicates,
    })
}

/// Two tests applied to the same simulated studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedPower {
    pub gamma_bar: f64,
    pub first: PowerEstimate,
    pub second: PowerEstimate,
    /// Power of the second test minus power of the first.
    pub difference: f64,
    pub difference_std_err: f64,
}

pub fn paired_power(
    scn: &Scenario,
    first: &ScoreSpec,
    second: &ScoreSpec,
    gamma_bar: f64,
    cfg: &SimConfig,
) -> Result<PairedPower> {
    cfg.validate()?;
    check_grid(&[gamma_bar])?;
    let rows = rejections(scn, &[first, second], &[gamma_bar], cfg)?;
    let n = cfg.replicates;
    let est = |j: usize| {
        let (power, std_err) = proportion(rows.iter().filter(|r| r[j][0]).count(), n);
        PowerEstimate {
            power,
            std_err,
            replicates: n,
        }
    };
    let diffs: Vec<f64> = rows
        .iter()
        .map(|r| r[1][0] as u8 as f64 - r[0][0] as u8 as f64)
        .collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok(PairedPower {
        gamma_bar,
        first: est(0),
        second: est(1),
        difference: mean,
        difference_std_err: (var / n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingStatus {
    Interpolated,
    /// Power is already below one half at the first grid point.
    BelowGrid,
    /// Power never falls below one half on the grid.
    AboveGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    #[serde(rename = "I")]
    pub pairs: usize,
    /// Γ̄ where the power curve crosses one half; the first grid point when
    /// below the grid, `None` when above it.
    pub crossing: Option<f64>,
    pub status: CrossingStatus,
    pub curve: PowerCurve,
}

/// Linear interpolation of the first downward crossing of one half.
pub fn half_crossing(grid: &[f64], power: &[f64]) -> (Option<f64>, CrossingStatus) {
    if power[0] < 0.5 {
        return (Some(grid[0]), CrossingStatus::BelowGrid);
    }
    for k in 1..grid.len() {
        if power[k] < 0.5 {
            let (p0, p1) = (power[k - 1], power[k]);
            let x = grid[k - 1] + (p0 - 0.5) / (p0 - p1) * (grid[k] - grid[k - 1]);
            return (Some(x), CrossingStatus::Interpolated);
        }
    }
    (None, CrossingStatus::AboveGrid)
}

/// Power curves along a ladder of sample sizes and their one-half crossings.
/// Ladder entry `k` uses the master seed derived for index `k`.
pub fn empirical_crossing(
    scn: &Scenario,
    spec: &ScoreSpec,
    ladder: &[usize],
    grid: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<Crossing>> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty sample-size ladder".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "gamma_bar grid must be strictly increasing".into(),
        ));
    }
    ladder
        .iter()
        .enumerate()
        .map(|(k, &pairs)| {
            let c = SimConfig {
                pairs,
                seed: mc::derive_seed(cfg.seed, "ladder", k as u64),
                ..*cfg
            };
            let curve = power_curve(scn, spec, grid, &c)?;
            let (crossing, status) = half_crossing(grid, &curve.power);
            Ok(Crossing {
                pairs,
                crossing,
                status,
                curve,
            })
        })
        .collect()
}

/// Fails with [`Error::NoCrossing`] when some rung never crosses one half.
pub fn require_crossings(crossings: &[Crossing]) -> Result<Vec<f64>> {
    crossings
        .iter()
        .map(|c| {
            c.crossing.ok_or_else(|| {
                Error::NoCrossing(format!(
                    "power stays above 1/2 on the grid at I = {}",
                    c.pairs
                ))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub gamma_bar: f64,
    #[serde(rename = "I")]
    pub pairs: usize,
    /// Replicate mean of −log(p)/I.
    pub mean: f64,
    pub std_err: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Replicate mean of −log(p)/I for the greater-side worst-case p-value, with
/// log p from the normal approximation so that it stays finite far in the
/// tail.
pub fn empirical_slope(
    scn: &Scenario,
    spec: &ScoreSpec,
    gamma_bar: f64,
    cfg: &SimConfig,
) -> Result<SlopeEstimate> {
    cfg.validate()?;
    check_grid(&[gamma_bar])?;
    let values: Vec<f64> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sample = scn.study(cfg.pairs, cfg.seed, r)?;
            let gaps = scn.link.gaps(&sample)?;
            let schedule = scn.schedule(&sample, &gaps, gamma_bar)?;
            let scored = score(&sample, spec)?;
            Ok(-log_p_greater_normal(&scored, &schedule)? / cfg.pairs as f64)
        })
        .collect::<Result<_>>()?;
    let (mean, std_err) = mean_se(&values);
    Ok(SlopeEstimate {
        gamma_bar,
        pairs: cfg.pairs,
        mean,
        std_err,
        replicates: cfg.replicates,
        seed: cfg.seed,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub truth: f64,
    pub covered: usize,
    pub replicates: usize,
    pub rate: f64,
    pub std_err: f64,
    pub seed: u64,
}

fn coverage_from(flags: Vec<bool>, truth: f64, seed: u64) -> Coverage {
    let n = flags.len();
    let covered = flags.iter().filter(|f| **f).count();
    let (rate, std_err) = proportion(covered, n);
    Coverage {
        truth,
        covered,
        replicates: n,
        rate,
        std_err,
        seed,
    }
}

/// How often the constant-effect confidence interval at Γ̄ contains `truth`.
pub fn coverage_beta(
    scn: &Scenario,
    spec: &ScoreSpec,
    gamma_bar: f64,
    truth: f64,
    cfg: &SimConfig,
) -> Result<Coverage> {
    cfg.validate()?;
    check_grid(&[gamma_bar])?;
    let model = EffectModel::Constant { beta: 0.0 };
    let flags = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sample = scn.study(cfg.pairs, cfg.seed, r)?;
            let gaps = scn.link.gaps(&sample)?;
            let schedule = scn.schedule(&sample, &gaps, gamma_bar)?;
            let ci = confidence_region(
                &sample,
                &model,
                spec,
                &schedule,
                cfg.alpha,
                cfg.method_for(r),
                &SearchRegion::auto(),
            )?;
            Ok(ci
                .interval
                .is_some_and(|[lo, hi]| lo <= truth && truth <= hi))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(coverage_from(flags, truth, cfg.seed))
}

/// How often the weak-null confidence set for the effect ratio at Γ̄
/// contains `truth`, i.e. how often the two-sided test at `truth` accepts.
pub fn coverage_effect_ratio(
    scn: &Scenario,
    gamma_bar: f64,
    truth: f64,
    cfg: &SimConfig,
    solver: &SolverConfig,
) -> Result<Coverage> {
    cfg.validate()?;
    check_grid(&[gamma_bar])?;
    let flags = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sample = scn.study(cfg.pairs, cfg.seed, r)?;
            let gaps = scn.link.gaps(&sample)?;
            let schedule = scn.schedule(&sample, &gaps, gamma_bar)?;
            Ok(weak_null_test(&sample, &schedule, truth, solver)?.p_two_sided > cfg.alpha)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(coverage_from(flags, truth, cfg.seed))
}

/// One t of a tail comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailComparison {
    pub t: f64,
    /// Simulated P(Ȳ ≥ t) under the biased assignment.
    pub observed: McEstimate,
    /// P(Ỹ ≥ t) for the bounding variable.
    pub bounding: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCheck {
    pub pi: Vec<f64>,
    /// Simulated mean of the variance estimator V̄̄ with its standard error.
    pub mean_v: f64,
    pub mean_v_std_err: f64,
    /// I²·var(Ȳ) = Σ πᵢ(1−πᵢ)(τᵢ₁−τᵢ₂)².
    pub scaled_variance: f64,
    /// Simulated I²·var(Ȳ).
    pub scaled_variance_mc: f64,
    pub tails: Vec<TailComparison>,
    pub reps: u64,
    pub seed: u64,
}

/// Simulates assignments in which the higher dose goes to unit 1 of pair i
/// with probability πᵢ, observing τᵢ₁ if it does and τᵢ₂ otherwise.
/// Every πᵢ must lie within [1/(1+Γᵢ), Γᵢ/(1+Γᵢ)].
pub fn biased_assignment_check(
    tau1: &[f64],
    tau2: &[f64],
    gamma_i: &[f64],
    pi: &[f64],
    t_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<AssignmentCheck> {
    let n = tau1.len();
    if tau2.len() != n || gamma_i.len() != n || pi.len() != n {
        return Err(Error::LengthMismatch("tau1, tau2, Gamma_i and pi".into()));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if reps < 2 {
        return Err(Error::InvalidParameter(
            "at least two replicates are required".into(),
        ));
    }
    for i in 0..n {
        let g = gamma_i[i];
        let slack = 1e-12;
        if !(g >= 1.0) || pi[i] < 1.0 / (1.0 + g) - slack || pi[i] > g / (1.0 + g) + slack {
            return Err(Error::InvalidParameter(format!(
                "pi[{i}] = {} is outside the bounds implied by Gamma_i = {g}",
                pi[i]
            )));
        }
    }
    let weight: Vec<f64> = gamma_i.iter().map(|g| 2.0 * g / (1.0 + g)).collect();
    let in_mean = n as f64;
    let per_chunk = mc::map_chunks(reps, seed, |rng, _, count| {
        let mut v_sum = 0.0;
        let mut v_sq = 0.0;
        let mut y_sum = 0.0;
        let mut y_sq = 0.0;
        let mut hits = vec![0u64; t_grid.len()];
        for _ in 0..count {
            let mut v = 0.0;
            let mut total = 0.0;
            for i in 0..n {
                let y = if rng.random::<f64>() < pi[i] {
                    tau1[i]
                } else {
                    tau2[i]
                };
                v += weight[i] * y * y;
                total += y;
            }
            v_sum += v;
            v_sq += v * v;
            y_sum += total;
            y_sq += total * total;
            let y_bar = total / in_mean;
            for (h, t) in hits.iter_mut().zip(t_grid) {
                *h += (y_bar >= *t) as u64;
            }
        }
        (v_sum, v_sq, y_sum, y_sq, hits)
    });
    let mut v_sum = 0.0;
    let mut v_sq = 0.0;
    let mut y_sum = 0.0;
    let mut y_sq = 0.0;
    let mut hits = vec![0u64; t_grid.len()];
    for (a, b, c, d, h) in per_chunk {
        v_sum += a;
        v_sq += b;
        y_sum += c;
        y_sq += d;
        for (x, y) in hits.iter_mut().zip(h) {
            *x += y;
        }
    }
    let m = reps as f64;
    let mean_v = v_sum / m;
    let var_v = (v_sq / m - mean_v * mean_v).max(0.0) * m / (m - 1.0);
    let mean_y = y_sum / m;
    let scaled_variance_mc = (y_sq / m - mean_y * mean_y).max(0.0) * m / (m - 1.0);
    let scaled_variance = (0..n)
        .map(|i| pi[i] * (1.0 - pi[i]) * (tau1[i] - tau2[i]).powi(2))
        .sum();
    let tails = t_grid
        .iter()
        .zip(hits)
        .enumerate()
        .map(|(k, (&t, h))| {
            let (estimate, std_err) = proportion(h as usize, reps as usize);
            Ok(TailComparison {
                t,
                observed: McEstimate {
                    estimate,
                    std_err,
                    reps,
                },
                bounding: bounding_tail(
                    tau1,
                    tau2,
                    gamma_i,
                    t,
                    reps,
                    mc::derive_seed(seed, "bounding", k as u64),
                )?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AssignmentCheck {
        pi: pi.to_vec(),
        mean_v,
        mean_v_std_err: (var_v / m).sqrt(),
        scaled_variance,
        scaled_variance_mc,
        tails,
        reps,
        seed,
    })
}

/// Tidy CSV with one row per (I, Γ̄) of each curve.
pub fn write_power_csv<W: Write>(curves: &[PowerCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "I",
        "gamma_bar",
        "test",
        "method",
        "replicates",
        "rejections",
        "power",
        "std_err",
        "seed",
    ])?;
    for c in curves {
        for k in 0..c.gamma_bar_grid.len() {
            w.write_record([
                c.pairs.to_string(),
                c.gamma_bar_grid[k].to_string(),
                c.test.clone(),
                c.method.clone(),
                c.replicates.to_string(),
                c.rejections[k].to_string(),
                c.power[k].to_string(),
                c.std_err[k].to_string(),
                c.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
