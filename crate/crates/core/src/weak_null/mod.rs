//! Sensitivity analysis for the weak null on the effect ratio λ₀.
//!
//! With unit 1 of every pair taken to be the higher-dose unit, the observed
//! adjusted differences are τᵢ₁ = (Y_hi − Y_lo) − λ₀(z_hi − z_lo). The
//! unobserved τᵢ₂ are chosen adversarially subject to Σ(τᵢ₁ + τᵢ₂) = 0 and
//! Σ Γᵢ/(1+Γᵢ)²(τᵢ₁ − τᵢ₂)² ≤ Σ 2Γᵢ/(1+Γᵢ)τᵢ₁², with binary wᵢ marking
//! whether τᵢ₂ ≥ τᵢ₁. The minimized standardized numerator is a lower bound
//! on the worst-case z-score.

mod bnb;
pub mod subproblem;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaSchedule;
use crate::mc;
use crate::normal;
use crate::pairs::MatchedSample;
use crate::sharp::{two_sided, MIN_MC_REPS};

pub use bnb::{SearchLimits, SearchOutcome};
use subproblem::{Allow, Instance, Piece};

/// Which numerator is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveForm {
    /// Σ{wᵢ(τᵢ₁+τᵢ₂)Γᵢ/(1+Γᵢ) + (1−wᵢ)(τᵢ₁+τᵢ₂)/(1+Γᵢ)}, transcribed as stated.
    /// It is never positive (τᵢ₂ = −τᵢ₁ is always feasible and gives 0), so it
    /// cannot reject.
    AsPrinted,
    /// Σ{τᵢ₁ − E[Ỹᵢ]} with E[Ỹᵢ] = (Γᵢ·max(τᵢ₁,τᵢ₂) + min(τᵢ₁,τᵢ₂))/(1+Γᵢ):
    /// observed total minus its largest expectation under the bounds.
    Expectation,
}

impl ObjectiveForm {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveForm::AsPrinted => "as-printed",
            ObjectiveForm::Expectation => "expectation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakNullProblem {
    pub lambda0: f64,
    pub tau1: Vec<f64>,
    #[serde(rename = "Gamma_i")]
    pub gamma_i: Vec<f64>,
    /// Per-pair big-M.
    pub big_m: Vec<f64>,
    pub denom: f64,
    pub y_bar: f64,
    /// Margin for the strict order constraint τᵢ₂ < τᵢ₁ + M·wᵢ.
    pub epsilon: f64,
}

impl WeakNullProblem {
    pub fn new(lambda0: f64, tau1: Vec<f64>, gamma_i: Vec<f64>) -> Result<Self> {
        if tau1.is_empty() {
            return Err(Error::EmptySample);
        }
        if tau1.len() != gamma_i.len() {
            return Err(Error::LengthMismatch("tau1 and Gamma_i".into()));
        }
        if tau1.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("tau1 must be finite".into()));
        }
        if gamma_i.iter().any(|g| !(*g >= 1.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter("every Gamma_i must be >= 1".into()));
        }
        let r: f64 = tau1
            .iter()
            .zip(&gamma_i)
            .map(|(t, g)| 2.0 * g / (1.0 + g) * t * t)
            .sum();
        if !(r > 0.0) {
            return Err(Error::Degenerate(
                "all adjusted differences are zero".into(),
            ));
        }
        let big_m = gamma_i
            .iter()
            .map(|g| 2.0 * (r * (1.0 + g) * (1.0 + g) / g).sqrt())
            .collect();
        let scale = tau1.iter().map(|t| t.abs()).fold(0.0, f64::max);
        let n = tau1.len() as f64;
        Ok(Self {
            lambda0,
            y_bar: tau1.iter().sum::<f64>() / n,
            denom: r.sqrt(),
            tau1,
            gamma_i,
            big_m,
            epsilon: 1e-9 * scale,
        })
    }

    pub fn from_sample(
        sample: &MatchedSample,
        schedule: &GammaSchedule,
        lambda0: f64,
    ) -> Result<Self> {
        if sample.len() != schedule.len() {
            return Err(Error::LengthMismatch("sample and schedule".into()));
        }
        let tau1 = sample
            .pairs()
            .iter()
            .map(|p| p.outcome_diff() - lambda0 * p.dose_diff())
            .collect();
        Self::new(lambda0, tau1, schedule.gamma_i().to_vec())
    }

    /// The same problem for the opposite tail (τᵢ₁ ↦ −τᵢ₁).
    pub fn reflected(&self) -> Self {
        Self {
            tau1: self.tau1.iter().map(|t| -t).collect(),
            y_bar: -self.y_bar,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.tau1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau1.is_empty()
    }

    /// Objective value of (w, τ₂) evaluated directly from its definition.
    pub fn objective(&self, form: ObjectiveForm, w: &[bool], tau2: &[f64]) -> f64 {
        let mut num = 0.0;
        for i in 0..self.len() {
            let g = self.gamma_i[i];
            let (pp, pm) = (g / (1.0 + g), 1.0 / (1.0 + g));
            let (t1, t2) = (self.tau1[i], tau2[i]);
            num += match form {
                ObjectiveForm::AsPrinted => {
                    if w[i] {
                        (t1 + t2) * pp
                    } else {
                        (t1 + t2) * pm
                    }
                }
                ObjectiveForm::Expectation => t1 - (pp * t1.max(t2) + pm * t1.min(t2)),
            };
        }
        num / self.denom
    }

    /// Constraint residuals of (w, τ₂).
    pub fn feasibility(&self, w: &[bool], tau2: &[f64]) -> Feasibility {
        let eq: f64 = self.tau1.iter().zip(tau2).map(|(a, b)| a + b).sum();
        let lhs: f64 = (0..self.len())
            .map(|i| {
                let g = self.gamma_i[i];
                g / ((1.0 + g) * (1.0 + g)) * (self.tau1[i] - tau2[i]).powi(2)
            })
            .sum();
        let links = (0..self.len()).all(|i| {
            let (t1, t2, m) = (self.tau1[i], tau2[i], self.big_m[i]);
            let wi = if w[i] { 1.0 } else { 0.0 };
            // rounding of τᵢ₁ + dᵢ
            let tol = 4.0 * f64::EPSILON * (t1.abs() + t2.abs() + m);
            t1 <= t2 + m * (1.0 - wi) + tol && t2 <= t1 + m * wi - self.epsilon + tol
        });
        Feasibility {
            equality_residual: eq,
            quadratic_slack: self.denom * self.denom - lhs,
            links_hold: links,
        }
    }

    fn instance(&self, form: ObjectiveForm) -> (Instance, Vec<Allow>) {
        let n = self.len();
        let s = -2.0 * self.tau1.iter().sum::<f64>();
        let r = self.denom * self.denom;
        let mut pieces = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut allow = Vec::with_capacity(n);
        for i in 0..n {
            let g = self.gamma_i[i];
            let k = [1.0 / (1.0 + g), g / (1.0 + g)];
            let m = self.big_m[i];
            let dom = [(-m, -self.epsilon), (0.0, m - self.epsilon)];
            // centred so that Γᵢ = 1 contributes exactly zero
            let coef = |b: usize| match form {
                ObjectiveForm::AsPrinted => ((k[b] - 0.5) * 2.0 * self.tau1[i], k[b] - 0.5),
                ObjectiveForm::Expectation => (0.0, -(k[b] - 0.5)),
            };
            let (c0, c1) = (coef(0), coef(1));
            let p0 = Piece {
                alpha: c0.0,
                beta: c0.1,
                lo: dom[0].0,
                hi: dom[0].1,
            };
            let p1 = Piece {
                alpha: c1.0,
                beta: c1.1,
                lo: dom[1].0,
                hi: dom[1].1,
            };
            if c0 == c1 {
                // the indicator does not affect the objective: one joint interval
                let merged = Piece {
                    lo: dom[0].0,
                    hi: dom[1].1,
                    ..p0
                };
                pieces.push([merged, merged]);
                allow.push(Allow::Zero);
            } else {
                pieces.push([p0, p1]);
                allow.push(Allow::Both);
            }
            a.push(g / ((1.0 + g) * (1.0 + g)));
        }
        let constant = match form {
            ObjectiveForm::AsPrinted => 0.0,
            ObjectiveForm::Expectation => -0.5 * s,
        };
        let scale = (r / a.iter().sum::<f64>()).sqrt();
        (
            Instance {
                pieces,
                a,
                s,
                r,
                constant,
                scale,
            },
            allow,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub equality_residual: f64,
    pub quadratic_slack: f64,
    pub links_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub form: ObjectiveForm,
    pub node_limit: usize,
    /// Absolute optimality tolerance on the z scale.
    pub gap_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            form: ObjectiveForm::Expectation,
            node_limit: 200_000,
            gap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Stopped early with a valid bound but no optimality proof.
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakNullSolution {
    pub lambda0: f64,
    pub tau1: Vec<f64>,
    #[serde(rename = "Gamma_i")]
    pub gamma_i: Vec<f64>,
    pub form: ObjectiveForm,
    pub status: SolveStatus,
    /// Best objective found (z scale); +∞ when infeasible.
    pub optimum: f64,
    /// Certified lower bound on the minimum (z scale).
    pub lower_bound: f64,
    pub gap: f64,
    pub certified: bool,
    pub w: Vec<bool>,
    pub tau2: Vec<f64>,
    pub node_count: usize,
    /// Upper bound on the worst-case p-value, 1 − Φ(lower_bound); normal
    /// approximation.
    pub p_upper: f64,
}

pub fn worst_case_zscore(
    problem: &WeakNullProblem,
    cfg: &SolverConfig,
) -> Result<WeakNullSolution> {
    solve_with_threshold(problem, cfg, None)
}

fn solve_with_threshold(
    problem: &WeakNullProblem,
    cfg: &SolverConfig,
    threshold: Option<f64>,
) -> Result<WeakNullSolution> {
    let (inst, allow) = problem.instance(cfg.form);
    let limits = SearchLimits {
        node_limit: cfg.node_limit.max(1),
        gap_tol: cfg.gap_tol * problem.denom,
        threshold: threshold.map(|t| t * problem.denom),
    };
    let out = bnb::search(&inst, allow, &limits);
    let scale = problem.denom;
    let infeasible = !out.incumbent.is_finite();
    let complete = !out.hit_limit && !out.stopped_at_threshold;
    let status = if infeasible && complete {
        SolveStatus::Infeasible
    } else if complete {
        SolveStatus::Optimal
    } else {
        SolveStatus::Bounded
    };
    let optimum = out.incumbent / scale;
    let lower_bound = if status == SolveStatus::Infeasible {
        f64::INFINITY
    } else {
        out.lower_bound / scale
    };
    let gap = if optimum.is_finite() && lower_bound.is_finite() {
        (optimum - lower_bound).max(0.0)
    } else if status == SolveStatus::Infeasible {
        0.0
    } else {
        f64::INFINITY
    };
    let tau2: Vec<f64> = problem
        .tau1
        .iter()
        .zip(&out.d)
        .map(|(t, d)| t + d)
        .collect();
    // pairs with an irrelevant indicator report the order actually realized
    let w: Vec<bool> = (0..problem.len())
        .map(|i| {
            if inst.pieces[i][0] == inst.pieces[i][1] {
                out.d[i] >= 0.0
            } else {
                out.w[i]
            }
        })
        .collect();
    Ok(WeakNullSolution {
        lambda0: problem.lambda0,
        tau1: problem.tau1.clone(),
        gamma_i: problem.gamma_i.clone(),
        form: cfg.form,
        status,
        optimum,
        lower_bound,
        gap,
        certified: status != SolveStatus::Bounded && gap <= cfg.gap_tol,
        w,
        tau2: if infeasible { Vec::new() } else { tau2 },
        node_count: out.nodes,
        p_upper: normal::upper_tail(lower_bound),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakNullReport {
    pub lambda0: f64,
    pub gamma_bar: f64,
    pub form: ObjectiveForm,
    pub y_bar: f64,
    pub z_greater: f64,
    pub z_less: f64,
    pub p_greater: f64,
    pub p_less: f64,
    pub p_two_sided: f64,
    pub certified: bool,
    pub greater: WeakNullSolution,
    pub less: WeakNullSolution,
}

/// Worst-case test of the weak null at λ₀ in both directions.
pub fn weak_null_test(
    sample: &MatchedSample,
    schedule: &GammaSchedule,
    lambda0: f64,
    cfg: &SolverConfig,
) -> Result<WeakNullReport> {
    let problem = WeakNullProblem::from_sample(sample, schedule, lambda0)?;
    let greater = worst_case_zscore(&problem, cfg)?;
    let less = worst_case_zscore(&problem.reflected(), cfg)?;
    Ok(WeakNullReport {
        lambda0,
        gamma_bar: schedule.gamma_bar(),
        form: cfg.form,
        y_bar: problem.y_bar,
        z_greater: greater.lower_bound,
        z_less: less.lower_bound,
        p_greater: greater.p_upper,
        p_less: less.p_upper,
        p_two_sided: two_sided(greater.p_upper, less.p_upper),
        certified: greater.certified && less.certified,
        greater,
        less,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakNullCiReport {
    pub alpha: f64,
    pub gamma_bar: f64,
    pub form: ObjectiveForm,
    pub accepted: Vec<f64>,
    pub interval: Option<[f64; 2]>,
    pub contiguous: bool,
    /// Grid points where every adjusted difference vanished.
    pub skipped: Vec<f64>,
    /// Grid points decided from a bound after hitting the node limit.
    pub uncertified: Vec<f64>,
}

/// Inverts the two-sided worst-case test over `grid`.
pub fn weak_null_ci(
    sample: &MatchedSample,
    schedule: &GammaSchedule,
    alpha: f64,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<WeakNullCiReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let crit = normal::upper_quantile(alpha / 2.0);
    let decide = |lambda0: f64| -> Result<Option<(bool, bool)>> {
        let problem = match WeakNullProblem::from_sample(sample, schedule, lambda0) {
            Ok(p) => p,
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        // two-sided p > α ⇔ both worst-case z lower bounds are below crit
        let g = solve_with_threshold(&problem, cfg, Some(crit))?;
        let g_accept = g.lower_bound < crit;
        if !g_accept {
            return Ok(Some((
                false,
                g.status != SolveStatus::Bounded || g.lower_bound > crit,
            )));
        }
        let l = solve_with_threshold(&problem.reflected(), cfg, Some(crit))?;
        let certain = |s: &WeakNullSolution| {
            s.status != SolveStatus::Bounded || s.optimum < crit || s.lower_bound > crit
        };
        Ok(Some((l.lower_bound < crit, certain(&g) && certain(&l))))
    };
    let results: Vec<Option<(bool, bool)>> =
        grid.par_iter().map(|&l| decide(l)).collect::<Result<_>>()?;
    let mut report = WeakNullCiReport {
        alpha,
        gamma_bar: schedule.gamma_bar(),
        form: cfg.form,
        accepted: Vec::new(),
        interval: None,
        contiguous: true,
        skipped: Vec::new(),
        uncertified: Vec::new(),
    };
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut flags = Vec::new();
    for &k in &order {
        match results[k] {
            None => report.skipped.push(grid[k]),
            Some((acc, certain)) => {
                if !certain {
                    report.uncertified.push(grid[k]);
                }
                if acc {
                    report.accepted.push(grid[k]);
                }
                flags.push(acc);
            }
        }
    }
    let first = flags.iter().position(|f| *f);
    let last = flags.iter().rposition(|f| *f);
    if let (Some(a), Some(b)) = (first, last) {
        report.contiguous = flags[a..=b].iter().all(|f| *f);
        report.interval = Some([
            report.accepted[0],
            report.accepted[report.accepted.len() - 1],
        ]);
    }
    Ok(report)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub reps: u64,
}

/// P(I⁻¹ΣỸᵢ ≥ t) where Ỹᵢ equals max(τᵢ₁, τᵢ₂) with probability
/// Γᵢ/(1+Γᵢ) and min(τᵢ₁, τᵢ₂) otherwise, independently.
pub fn bounding_tail(
    tau1: &[f64],
    tau2: &[f64],
    gamma_i: &[f64],
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate> {
    if tau1.len() != tau2.len() || tau1.len() != gamma_i.len() {
        return Err(Error::LengthMismatch("tau1, tau2 and Gamma_i".into()));
    }
    if reps < MIN_MC_REPS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_MC_REPS} replicates are required, got {reps}"
        )));
    }
    let n = tau1.len() as f64;
    let hi: Vec<f64> = tau1.iter().zip(tau2).map(|(a, b)| a.max(*b)).collect();
    let lo: Vec<f64> = tau1.iter().zip(tau2).map(|(a, b)| a.min(*b)).collect();
    let p: Vec<f64> = gamma_i.iter().map(|g| g / (1.0 + g)).collect();
    let slack = 1e-12 * hi.iter().chain(&lo).map(|v| v.abs()).fold(0.0, f64::max);
    let hits: u64 = mc::map_chunks(reps, seed, |rng, _, count| {
        let mut c = 0u64;
        for _ in 0..count {
            let mut s = 0.0;
            for i in 0..hi.len() {
                s += if rng.random::<f64>() < p[i] {
                    hi[i]
                } else {
                    lo[i]
                };
            }
            c += (s / n >= t - slack) as u64;
        }
        c
    })
    .into_iter()
    .sum();
    let est = hits as f64 / reps as f64;
    Ok(McEstimate {
        estimate: est,
        std_err: (est * (1.0 - est) / reps as f64).sqrt(),
        reps,
    })
}
