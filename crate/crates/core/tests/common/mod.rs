//! Reference implementations shared by the integration tests. They favour
//! obviousness over speed and share no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// P(Σ qᵢBᵢ ≥ t) by listing all 2^n outcomes.
pub fn enumerate_tail(q: &[f64], p: &[f64], t: f64) -> f64 {
    let n = q.len();
    let total_q: f64 = q.iter().sum();
    let mut total = 0.0;
    for mask in 0u64..(1 << n) {
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
        if s >= t - 1e-9 * total_q {
            total += w;
        }
    }
    total
}

/// Σ_{k ≥ t} C(n,k) pᵏ(1−p)ⁿ⁻ᵏ.
pub fn binomial_tail(n: usize, p: f64, t: usize) -> f64 {
    let mut total = 0.0;
    for k in t..=n {
        let mut c = 1.0;
        for j in 0..k {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        total += c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    total
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// min Σ βᵢdᵢ s.t. Σdᵢ = s, Σ aᵢdᵢ² ≤ r, lᵢ ≤ dᵢ ≤ uᵢ, from the dual:
/// maximize over θ ≥ 0 and ν of
///   Σ min_{d∈[l,u]} {(β+ν)d + θ a d²/2} − νs − θr/2
/// by nested golden-section searches. Returns `None` when the dual is
/// unbounded (primal infeasible).
pub fn convex_leaf_oracle(
    beta: &[f64],
    a: &[f64],
    l: &[f64],
    u: &[f64],
    s: f64,
    r: f64,
) -> Option<f64> {
    let n = beta.len();
    let sum_l: f64 = l.iter().sum();
    let sum_u: f64 = u.iter().sum();
    let size = l.iter().chain(u).map(|v| v.abs()).fold(0.0, f64::max);
    if sum_l > s + 1e-9 * size || sum_u < s - 1e-9 * size {
        return None;
    }
    let g = |nu: f64, theta: f64| -> f64 {
        let mut total = -nu * s - 0.5 * theta * r;
        for i in 0..n {
            let c = beta[i] + nu;
            let mut best = (c * l[i] + 0.5 * theta * a[i] * l[i] * l[i])
                .min(c * u[i] + 0.5 * theta * a[i] * u[i] * u[i]);
            if theta > 0.0 {
                let d = -c / (theta * a[i]);
                if d > l[i] && d < u[i] {
                    best = best.min(c * d + 0.5 * theta * a[i] * d * d);
                }
            }
            total += best;
        }
        total
    };
    let bmax = beta.iter().map(|b| b.abs()).fold(0.0, f64::max) + 1.0;
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let inner = |theta: f64| -> f64 {
        let span = bmax + theta * amax * size + 1.0;
        golden_max(&|nu| g(nu, theta), -span, span, 120).1
    };
    let (_, best) = golden_max(&|x| inner(x.exp()), -40.0, 25.0, 120);
    let best = best.max(inner(0.0));
    let objective_bound: f64 = beta.iter().map(|b| b.abs()).sum::<f64>() * size;
    if best > objective_bound + 1.0 {
        None
    } else {
        Some(best)
    }
}

/// Weak-null program by enumerating every indicator vector. `form_expect`
/// selects the expectation numerator; otherwise the numerator as printed.
/// Returns the minimum z (+∞ if every leaf is infeasible).
pub fn weak_null_brute_force(tau1: &[f64], gamma: &[f64], form_expect: bool) -> f64 {
    let n = tau1.len();
    let r: f64 = (0..n)
        .map(|i| 2.0 * gamma[i] / (1.0 + gamma[i]) * tau1[i] * tau1[i])
        .sum();
    let denom = r.sqrt();
    let s = -2.0 * tau1.iter().sum::<f64>();
    let a: Vec<f64> = gamma.iter().map(|g| g / ((1.0 + g) * (1.0 + g))).collect();
    let eps = 1e-9 * tau1.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let m: Vec<f64> = (0..n).map(|i| 2.0 * (r / a[i]).sqrt()).collect();
    let mut best = f64::INFINITY;
    for mask in 0u64..(1 << n) {
        let mut beta = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut constant = 0.0;
        for i in 0..n {
            let w = mask >> i & 1 == 1;
            let p = if w {
                gamma[i] / (1.0 + gamma[i])
            } else {
                1.0 / (1.0 + gamma[i])
            };
            if w {
                l[i] = 0.0;
                u[i] = m[i] - eps;
            } else {
                l[i] = -m[i];
                u[i] = -eps;
            }
            if form_expect {
                // τ₁ − E[Ỹ] = −p·d
                beta[i] = -p;
            } else {
                // p·(τ₁ + τ₂) = p·(2τ₁ + d)
                beta[i] = p;
                constant += 2.0 * p * tau1[i];
            }
        }
        if let Some(v) = convex_leaf_oracle(&beta, &a, &l, &u, s, r) {
            let total = if form_expect { v } else { v + constant };
            best = best.min(total / denom);
        }
    }
    best
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept local so the oracle does not share code paths
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
