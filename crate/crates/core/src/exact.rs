//! Exact tails of weighted Bernoulli sums by meet-in-the-middle enumeration.

use crate::error::{Error, Result};

/// Largest number of pairs accepted for exact enumeration.
pub const MAX_PAIRS: usize = 25;

/// Slack used when comparing a enumerated sum with an observed statistic, so
/// that the observed configuration itself is never lost to rounding.
pub fn tie_slack(q: &[f64]) -> f64 {
    1e-9 * q.iter().map(|v| v.abs()).sum::<f64>()
}

fn half(q: &[f64], p: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 1.0)];
    for (&qi, &pi) in q.iter().zip(p) {
        let mut next = Vec::with_capacity(out.len() * 2);
        for &(s, w) in &out {
            next.push((s, w * (1.0 - pi)));
            next.push((s + qi, w * pi));
        }
        out = next;
    }
    out
}

/// P(Σ qᵢ·Bᵢ ≥ t) for independent Bᵢ ~ Bernoulli(pᵢ).
pub fn upper_tail(q: &[f64], p: &[f64], t: f64) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch("scores and probabilities".into()));
    }
    if q.len() > MAX_PAIRS {
        return Err(Error::TooLargeForEnumeration {
            pairs: q.len(),
            limit: MAX_PAIRS,
        });
    }
    let threshold = t - tie_slack(q);
    let mid = q.len() / 2;
    let left = half(&q[..mid], &p[..mid]);
    let mut right = half(&q[mid..], &p[mid..]);
    right.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix[k] = Σ weights of right[k..]
    let mut suffix = vec![0.0; right.len() + 1];
    for k in (0..right.len()).rev() {
        suffix[k] = suffix[k + 1] + right[k].1;
    }
    let mut total = 0.0;
    for &(s, w) in &left {
        let need = threshold - s;
        let k = right.partition_point(|r| r.0 < need);
        total += w * suffix[k];
    }
    Ok(total.clamp(0.0, 1.0))
}

/// P(Σ qᵢ·Bᵢ ≤ t), by reflecting Bᵢ ↦ 1 − Bᵢ.
pub fn lower_tail(q: &[f64], p: &[f64], t: f64) -> Result<f64> {
    let total: f64 = q.iter().sum();
    let flipped: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
    upper_tail(q, &flipped, total - t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(q: &[f64], p: &[f64], t: f64) -> f64 {
        let n = q.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let mut s = 0.0;
            let mut w = 1.0;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    s += q[i];
                    w *= p[i];
                } else {
                    w *= 1.0 - p[i];
                }
            }
            if s >= t - tie_slack(q) {
                total += w;
            }
        }
        total
    }

    #[test]
    fn matches_brute_force() {
        let q = [1.0, 2.5, 0.5, 3.0, 2.0, 1.5, 0.25];
        let p = [0.5, 0.6, 0.7, 0.55, 0.9, 0.5, 0.8];
        for t in [0.0, 1.0, 2.75, 5.0, 7.5, 10.75, 11.0] {
            let a = upper_tail(&q, &p, t).unwrap();
            assert!((a - brute(&q, &p, t)).abs() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn binomial_edges() {
        let q = [1.0; 3];
        let p = [0.5; 3];
        assert_eq!(upper_tail(&q, &p, 3.0).unwrap(), 0.125);
        assert_eq!(upper_tail(&q, &p, 0.0).unwrap(), 1.0);
        assert_eq!(upper_tail(&q, &p, 3.5).unwrap(), 0.0);
        assert_eq!(lower_tail(&q, &p, 0.0).unwrap(), 0.125);
    }

    #[test]
    fn guard() {
        let q = vec![1.0; 26];
        assert!(matches!(
            upper_tail(&q, &q, 1.0),
            Err(Error::TooLargeForEnumeration { pairs: 26, .. })
        ));
    }
}
