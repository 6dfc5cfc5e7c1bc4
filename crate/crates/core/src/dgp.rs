//! Data-generating processes for matched pairs.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc;
use crate::pairs::MatchedSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDraw {
    pub z1: f64,
    pub z2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl PairDraw {
    /// The same pair with the two outcomes exchanged.
    pub fn mirrored(self) -> Self {
        Self {
            y1: self.y2,
            y2: self.y1,
            ..self
        }
    }
}

/// Source of i.i.d. pair draws. `index` is the position of the draw in its
/// sequence; samplers that ignore it produce plain i.i.d. draws.
pub trait Sampler: Send + Sync {
    fn sample(&self, index: u64, rng: &mut ChaCha8Rng) -> PairDraw;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DoseDist {
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl DoseDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DoseDist::Uniform { lo, hi } if lo < hi && lo.is_finite() && hi.is_finite() => Ok(()),
            DoseDist::LogNormal { mu, sigma }
                if sigma > 0.0 && mu.is_finite() && sigma.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!(
                "invalid dose distribution {self:?}"
            ))),
        }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            DoseDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            DoseDist::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
        }
    }
}

/// Built-in generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinDgp {
    /// Both doses drawn independently; Yⱼ = effect·Zⱼ + N(0, noise_sd²).
    PairedNormal {
        dose: DoseDist,
        effect: f64,
        noise_sd: f64,
    },
    /// Doses as given; |Y₁ − Y₂| ~ Exp(1), concordant with the dose order
    /// with probability `theta`.
    ConcordanceBernoulli { dose: DoseDist, theta: f64 },
}

impl BuiltinDgp {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BuiltinDgp::PairedNormal {
                dose,
                effect,
                noise_sd,
            } => {
                dose.validate()?;
                if !(noise_sd > 0.0) || !effect.is_finite() || !noise_sd.is_finite() {
                    return Err(Error::InvalidParameter(
                        "paired-normal needs finite effect and noise_sd > 0".into(),
                    ));
                }
                Ok(())
            }
            BuiltinDgp::ConcordanceBernoulli { dose, theta } => {
                dose.validate()?;
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::InvalidParameter(format!(
                        "theta must be in [0,1], got {theta}"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl Sampler for BuiltinDgp {
    fn sample(&self, _index: u64, rng: &mut ChaCha8Rng) -> PairDraw {
        match *self {
            BuiltinDgp::PairedNormal {
                dose,
                effect,
                noise_sd,
            } => {
                let z1 = dose.draw(rng);
                let z2 = dose.draw(rng);
                let e1: f64 = StandardNormal.sample(rng);
                let e2: f64 = StandardNormal.sample(rng);
                PairDraw {
                    z1,
                    z2,
                    y1: effect * z1 + noise_sd * e1,
                    y2: effect * z2 + noise_sd * e2,
                }
            }
            BuiltinDgp::ConcordanceBernoulli { dose, theta } => {
                let z1 = dose.draw(rng);
                let z2 = dose.draw(rng);
                let size: f64 = Exp1.sample(rng);
                let concordant = rng.random::<f64>() < theta;
                let sign = if (z1 > z2) == concordant { 1.0 } else { -1.0 };
                PairDraw {
                    z1,
                    z2,
                    y1: sign * size,
                    y2: 0.0,
                }
            }
        }
    }
}

/// Shared handle to a sampler.
#[derive(Clone)]
pub struct SamplerRef(pub Arc<dyn Sampler>);

impl SamplerRef {
    pub fn new(s: impl Sampler + 'static) -> Self {
        SamplerRef(Arc::new(s))
    }
}

impl fmt::Debug for SamplerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SamplerRef(..)")
    }
}

/// `n` draws in chunked streams of `seed`. With `antithetic`, every odd
/// index mirrors the draw before it, which makes the concordance share of a
/// null-symmetric process exactly one half.
pub fn draw_many(sampler: &dyn Sampler, n: usize, seed: u64, antithetic: bool) -> Vec<PairDraw> {
    mc::map_chunks(n as u64, seed, |rng, start, count| {
        let mut out = Vec::with_capacity(count as usize);
        let mut last = None;
        for k in 0..count {
            let index = start + k;
            let d = match (antithetic && index % 2 == 1, last) {
                (true, Some(prev)) => PairDraw::mirrored(prev),
                _ => sampler.sample(index, rng),
            };
            last = Some(d);
            out.push(d);
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

/// One replicate study of `n` pairs from a single generator stream.
pub fn draw_study(sampler: &dyn Sampler, n: usize, rng: &mut ChaCha8Rng) -> Vec<PairDraw> {
    (0..n as u64).map(|i| sampler.sample(i, rng)).collect()
}

pub fn to_sample(draws: &[PairDraw]) -> Result<MatchedSample> {
    let rows: Vec<(f64, f64, f64, f64)> = draws.iter().map(|d| (d.z1, d.z2, d.y1, d.y2)).collect();
    MatchedSample::from_rows(&rows)
}
