//! Signed-score statistics T = Σ qᵢ·1{(Zᵢ₁−Zᵢ₂)(Yᵢ₁−Yᵢ₂) > 0}.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::expr::Expr;
use crate::pairs::MatchedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    Mcnemar,
    Wilcoxon,
    DoseWeightedAbs,
    DoseWeightedRank,
    DoubleRank,
    General,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Mcnemar => "mcnemar",
            ScoreKind::Wilcoxon => "wilcoxon",
            ScoreKind::DoseWeightedAbs => "dose-weighted-abs",
            ScoreKind::DoseWeightedRank => "dose-weighted-rank",
            ScoreKind::DoubleRank => "double-rank",
            ScoreKind::General => "general",
        }
    }

    /// Parses the names accepted on the command line. `dose-weighted` is the
    /// short form of `dose-weighted-abs`.
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "mcnemar" => ScoreKind::Mcnemar,
            "wilcoxon" => ScoreKind::Wilcoxon,
            "dose-weighted" | "dose-weighted-abs" => ScoreKind::DoseWeightedAbs,
            "dose-weighted-rank" => ScoreKind::DoseWeightedRank,
            "double-rank" => ScoreKind::DoubleRank,
            "general" => ScoreKind::General,
            _ => return Err(Error::InvalidScore(format!("unknown test `{name}`"))),
        })
    }

    fn uses_dose_ranks(self) -> bool {
        matches!(
            self,
            ScoreKind::DoseWeightedRank | ScoreKind::DoubleRank | ScoreKind::General
        )
    }

    fn uses_outcome_ranks(self) -> bool {
        !matches!(self, ScoreKind::Mcnemar)
    }
}

/// A rank-score function φ(r_z, r_y).
#[derive(Clone)]
pub enum Phi {
    Expr(Expr),
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl Phi {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(Phi::Expr(Expr::parse(src)?))
    }

    /// Built-in functions by name, or else an expression.
    pub fn named_or_expr(src: &str) -> Result<Self> {
        let text = match src {
            "mcnemar" | "constant" => "1",
            "wilcoxon" => "r_y",
            "double-rank" | "product" => "r_z * r_y",
            other => other,
        };
        Self::parse(text)
    }

    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Phi::Custom(Arc::new(f))
    }

    pub fn eval(&self, rz: f64, ry: f64) -> f64 {
        match self {
            Phi::Expr(e) => e.eval(rz, ry),
            Phi::Custom(f) => f(rz, ry),
        }
    }
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Expr(e) => write!(f, "Phi({e})"),
            Phi::Custom(_) => write!(f, "Phi(<custom>)"),
        }
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Expr(e) => write!(f, "{e}"),
            Phi::Custom(_) => write!(f, "<custom>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieMode {
    /// Tied absolute differences share their average rank.
    #[default]
    MidRank,
    /// Tied absolute differences are an error.
    Strict,
}

#[derive(Debug, Clone)]
pub struct ScoreSpec {
    pub kind: ScoreKind,
    pub phi: Option<Phi>,
    pub normalize_ranks: bool,
    pub ties: TieMode,
}

impl ScoreSpec {
    pub fn new(kind: ScoreKind) -> Self {
        Self {
            kind,
            phi: None,
            normalize_ranks: false,
            ties: TieMode::MidRank,
        }
    }

    pub fn mcnemar() -> Self {
        Self::new(ScoreKind::Mcnemar)
    }

    pub fn wilcoxon() -> Self {
        Self::new(ScoreKind::Wilcoxon)
    }

    pub fn dose_weighted_abs() -> Self {
        Self::new(ScoreKind::DoseWeightedAbs)
    }

    pub fn double_rank() -> Self {
        Self::new(ScoreKind::DoubleRank)
    }

    pub fn general(phi: Phi) -> Self {
        Self {
            phi: Some(phi),
            ..Self::new(ScoreKind::General)
        }
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize_ranks = on;
        self
    }

    pub fn strict(mut self) -> Self {
        self.ties = TieMode::Strict;
        self
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match (&self.kind, &self.phi) {
            (ScoreKind::General, Some(phi)) => format!("general({phi})"),
            (kind, _) => kind.name().to_string(),
        }
    }

    /// The rank-score function this spec applies, if it is one of the
    /// φ(r_z, r_y) family. The dose-weighted-abs score also uses the raw dose
    /// difference and so is not.
    pub fn as_phi(&self) -> Result<Phi> {
        match self.kind {
            ScoreKind::Mcnemar => Ok(Phi::custom(|_, _| 1.0)),
            ScoreKind::Wilcoxon => Ok(Phi::custom(|_, ry| ry)),
            ScoreKind::DoseWeightedRank | ScoreKind::DoubleRank => {
                Ok(Phi::custom(|rz, ry| rz * ry))
            }
            ScoreKind::General => self
                .phi
                .clone()
                .ok_or_else(|| Error::InvalidScore("general score requires phi".into())),
            ScoreKind::DoseWeightedAbs => Err(Error::InvalidScore(
                "dose-weighted-abs is not a function of the two ranks".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub q: Vec<f64>,
    pub concordant: Vec<bool>,
    pub rz: Vec<f64>,
    pub ry: Vec<f64>,
    pub t_obs: f64,
    /// Spacing of the lattice carrying every attainable value of the
    /// statistic, when the scores are rank based.
    pub lattice_span: Option<f64>,
}

impl ScoredSample {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn sum_q(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Average ranks (1-based) of `values`; `None` in strict mode when any tie
/// occurs.
pub fn midranks(values: &[f64], ties: TieMode) -> Result<Vec<f64>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        if end - start > 1 && ties == TieMode::Strict {
            return Err(Error::TiedRanks);
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

/// Scores from oriented differences: `dz` = z_hi − z_lo (> 0) and
/// `dy` = y_of_hi − y_of_lo.
pub fn score_differences(dz: &[f64], dy: &[f64], spec: &ScoreSpec) -> Result<ScoredSample> {
    if dz.len() != dy.len() {
        return Err(Error::LengthMismatch("dose and outcome differences".into()));
    }
    let n = dz.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if spec.kind == ScoreKind::General && spec.phi.is_none() {
        return Err(Error::InvalidScore("general score requires phi".into()));
    }
    let abs_z: Vec<f64> = dz.iter().map(|v| v.abs()).collect();
    let abs_y: Vec<f64> = dy.iter().map(|v| v.abs()).collect();
    let ties_z = if spec.kind.uses_dose_ranks() {
        spec.ties
    } else {
        TieMode::MidRank
    };
    let ties_y = if spec.kind.uses_outcome_ranks() {
        spec.ties
    } else {
        TieMode::MidRank
    };
    let mut rz = midranks(&abs_z, ties_z)?;
    let mut ry = midranks(&abs_y, ties_y)?;
    if spec.normalize_ranks {
        let scale = n as f64;
        rz.iter_mut().for_each(|r| *r /= scale);
        ry.iter_mut().for_each(|r| *r /= scale);
    }
    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let v = match spec.kind {
            ScoreKind::Mcnemar => 1.0,
            ScoreKind::Wilcoxon => ry[i],
            ScoreKind::DoseWeightedAbs => abs_z[i] * ry[i],
            ScoreKind::DoseWeightedRank | ScoreKind::DoubleRank => rz[i] * ry[i],
            ScoreKind::General => spec
                .phi
                .as_ref()
                .map(|p| p.eval(rz[i], ry[i]))
                .unwrap_or(0.0),
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeScore { index: i, value: v });
        }
        q.push(v);
    }
    // midranks are multiples of 1/2, so their products are multiples of 1/4
    let unit = match spec.kind {
        ScoreKind::Mcnemar => Some(1.0),
        ScoreKind::Wilcoxon => Some(if spec.normalize_ranks {
            0.5 / n as f64
        } else {
            0.5
        }),
        ScoreKind::DoseWeightedRank | ScoreKind::DoubleRank => Some(if spec.normalize_ranks {
            0.25 / (n * n) as f64
        } else {
            0.25
        }),
        ScoreKind::DoseWeightedAbs | ScoreKind::General => None,
    };
    let lattice_span = unit.and_then(|u| lattice_span(&q, u));
    let concordant: Vec<bool> = dz.iter().zip(dy).map(|(a, b)| a * b > 0.0).collect();
    let t_obs = q
        .iter()
        .zip(&concordant)
        .filter(|(_, c)| **c)
        .map(|(v, _)| v)
        .sum();
    Ok(ScoredSample {
        q,
        concordant,
        rz,
        ry,
        t_obs,
        lattice_span,
    })
}

/// Largest multiple of `unit` dividing every score, if all scores are
/// multiples of `unit`.
fn lattice_span(q: &[f64], unit: f64) -> Option<f64> {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut g = 0u64;
    for v in q {
        let m = v / unit;
        let r = m.round();
        if (m - r).abs() > 1e-9 * m.abs().max(1.0) || r > 1e15 {
            return None;
        }
        g = gcd(g, r as u64);
    }
    (g > 0).then_some(g as f64 * unit)
}

pub fn score(sample: &MatchedSample, spec: &ScoreSpec) -> Result<ScoredSample> {
    let dz: Vec<f64> = sample.pairs().iter().map(|p| p.dose_diff()).collect();
    let dy: Vec<f64> = sample.pairs().iter().map(|p| p.outcome_diff()).collect();
    score_differences(&dz, &dy, spec)
}

/// Exact one-sided (greater) randomization p-value: the share of the 2^I
/// concordance patterns whose statistic is at least `t_obs`.
pub fn exact_randomization_pvalue(scored: &ScoredSample) -> Result<f64> {
    let half = vec![0.5; scored.len()];
    exact::upper_tail(&scored.q, &half, scored.t_obs)
}
