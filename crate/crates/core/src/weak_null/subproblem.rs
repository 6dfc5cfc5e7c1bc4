//! Continuous pieces of the weak-null program in the variables dᵢ = τᵢ₂ − τᵢ₁.
//!
//! Every pair contributes αᵢ + βᵢ·dᵢ on an interval that depends on its
//! order indicator. All pairs share Σ dᵢ = S and Σ aᵢdᵢ² ≤ R.

/// Linear piece on an interval of d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub alpha: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Branches allowed at a search node for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allow {
    Zero,
    One,
    Both,
}

#[derive(Debug, Clone)]
pub struct Instance {
    /// `pieces[i][b]` is the piece of pair `i` when its indicator is `b`.
    pub pieces: Vec<[Piece; 2]>,
    pub a: Vec<f64>,
    pub s: f64,
    pub r: f64,
    pub constant: f64,
    /// Typical magnitude of d, used to scale tolerances and θ.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub d: Vec<f64>,
    /// Σ βᵢdᵢ (without the α's or the constant).
    pub value: f64,
    /// A Lagrangian lower bound on the same quantity.
    pub dual_bound: f64,
}

/// Minimum of c·d + (θ/2)·a·d² over [lo, hi], with its minimizer.
fn interval_min(c: f64, theta: f64, a: f64, lo: f64, hi: f64) -> (f64, f64) {
    let d = if theta > 0.0 {
        (-c / (theta * a)).clamp(lo, hi)
    } else if c > 0.0 {
        lo
    } else {
        hi
    };
    (c * d + 0.5 * theta * a * d * d, d)
}

/// Minimizer of Σ βᵢdᵢ + (θ/2)Σ aᵢdᵢ² over the box with Σ dᵢ = s, θ > 0.
/// The multiplier of the equality is found exactly from the sorted
/// breakpoints of the piecewise-linear map ν ↦ Σ dᵢ(ν).
fn box_regularized(
    beta: &[f64],
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
    s: f64,
    theta: f64,
) -> Vec<f64> {
    let n = beta.len();
    let at = |nu: f64| -> Vec<f64> {
        (0..n)
            .map(|i| (-(beta[i] + nu) / (theta * a[i])).clamp(lo[i], hi[i]))
            .collect()
    };
    let total = |nu: f64| -> f64 { at(nu).iter().sum() };
    let mut bps: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        bps.push(-beta[i] - theta * a[i] * hi[i]);
        bps.push(-beta[i] - theta * a[i] * lo[i]);
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    // total() is nonincreasing in ν; find consecutive breakpoints around s.
    let nu = if total(bps[0]) <= s {
        bps[0]
    } else if total(bps[bps.len() - 1]) >= s {
        bps[bps.len() - 1]
    } else {
        let (mut i, mut j) = (0, bps.len() - 1);
        while j - i > 1 {
            let m = (i + j) / 2;
            if total(bps[m]) >= s {
                i = m;
            } else {
                j = m;
            }
        }
        let (si, sj) = (total(bps[i]), total(bps[j]));
        if si == sj {
            bps[i]
        } else {
            bps[i] + (s - si) * (bps[j] - bps[i]) / (sj - si)
        }
    };
    let mut d = at(nu);
    repair_sum(&mut d, a, lo, hi, s);
    d
}

/// Spreads the residual of Σ d = s over coordinates that are off their
/// bounds, in proportion to 1/aᵢ.
fn repair_sum(d: &mut [f64], a: &[f64], lo: &[f64], hi: &[f64], s: f64) {
    for _ in 0..3 {
        let resid = s - d.iter().sum::<f64>();
        if resid == 0.0 {
            return;
        }
        let free: Vec<usize> = (0..d.len())
            .filter(|&i| {
                if resid > 0.0 {
                    d[i] < hi[i]
                } else {
                    d[i] > lo[i]
                }
            })
            .collect();
        let w: f64 = free.iter().map(|&i| 1.0 / a[i]).sum();
        if free.is_empty() || w == 0.0 {
            return;
        }
        for &i in &free {
            d[i] = (d[i] + resid / (a[i] * w)).clamp(lo[i], hi[i]);
        }
    }
}

/// Minimizer of Σ βᵢdᵢ over the box with Σ dᵢ = s: start at the lower
/// bounds and raise the cheapest coordinates first.
fn linear_greedy(beta: &[f64], lo: &[f64], hi: &[f64], s: f64) -> Vec<f64> {
    let mut d = lo.to_vec();
    let mut need = s - lo.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..beta.len()).collect();
    order.sort_by(|&i, &j| beta[i].total_cmp(&beta[j]).then(i.cmp(&j)));
    for i in order {
        if need <= 0.0 {
            break;
        }
        if hi[i] - lo[i] <= need {
            d[i] = hi[i];
            need -= hi[i] - lo[i];
        } else {
            d[i] += need;
            need = 0.0;
        }
    }
    d
}

fn quad(a: &[f64], d: &[f64]) -> f64 {
    a.iter().zip(d).map(|(a, d)| a * d * d).sum()
}

/// Minimizes Σ βᵢdᵢ subject to Σ dᵢ = s, Σ aᵢdᵢ² ≤ r and lo ≤ d ≤ hi.
/// Returns `None` when the set is empty (up to a relative slack of 1e-12
/// on the quadratic constraint).
pub fn solve_convex(
    beta: &[f64],
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
    s: f64,
    r: f64,
    scale: f64,
) -> Option<ConvexSolution> {
    let n = beta.len();
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    let slack = 1e-12 * (scale * n as f64 + s.abs());
    if sum_lo > s + slack || sum_hi < s - slack {
        return None;
    }
    let zeros = vec![0.0; n];
    let min_norm = box_regularized(&zeros, a, lo, hi, s, 1.0);
    let q_min = quad(a, &min_norm);
    let r_slack = r * (1.0 + 1e-12) + 1e-300;
    if q_min > r_slack {
        return None;
    }
    let value = |d: &[f64]| beta.iter().zip(d).map(|(b, d)| b * d).sum::<f64>();
    let bmax = beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bmin = beta.iter().cloned().fold(f64::INFINITY, f64::min);
    if bmax == bmin {
        let v = value(&min_norm);
        return Some(ConvexSolution {
            d: min_norm,
            value: v,
            dual_bound: v,
        });
    }
    // the linear program without the quadratic; if its greedy solution fits,
    // it is optimal
    let lp = linear_greedy(beta, lo, hi, s);
    if quad(a, &lp) <= r {
        let v = value(&lp);
        return Some(ConvexSolution {
            d: lp,
            value: v,
            dual_bound: v,
        });
    }
    let spread = bmax - bmin;
    let amean = a.iter().sum::<f64>() / n as f64;
    let theta0 = spread / (amean * scale.max(1e-300));
    let q_at = |theta: f64| {
        let d = box_regularized(beta, a, lo, hi, s, theta);
        (quad(a, &d), d)
    };
    // find θ_lo with q > r (or conclude the quadratic is inactive) and
    // θ_hi with q ≤ r
    let (mut t_lo, mut t_hi) = (theta0, theta0);
    let (q0, d0) = q_at(theta0);
    let mut d_hi;
    if q0 <= r {
        d_hi = d0;
        loop {
            t_lo = t_hi * 0.5f64.powi(8);
            let (q, d) = q_at(t_lo);
            if q > r {
                break;
            }
            t_hi = t_lo;
            d_hi = d;
            if t_hi < theta0 * 1e-30 {
                let v = value(&d_hi);
                let bound = lagrangian_convex(beta, a, lo, hi, s, r, t_hi);
                return Some(ConvexSolution {
                    d: d_hi,
                    value: v,
                    dual_bound: bound.min(v),
                });
            }
        }
    } else {
        loop {
            t_hi = t_lo * 2f64.powi(8);
            let (q, d) = q_at(t_hi);
            if q <= r {
                d_hi = d;
                break;
            }
            t_lo = t_hi;
            if t_hi > theta0 * 1e200 {
                let v = value(&min_norm);
                return Some(ConvexSolution {
                    d: min_norm,
                    value: v,
                    dual_bound: v,
                });
            }
        }
    }
    for _ in 0..200 {
        let mid = (t_lo * t_hi).sqrt();
        if !(mid > t_lo && mid < t_hi) {
            break;
        }
        let (q, d) = q_at(mid);
        if q <= r {
            t_hi = mid;
            d_hi = d;
        } else {
            t_lo = mid;
        }
    }
    let v = value(&d_hi);
    let bound = lagrangian_convex(beta, a, lo, hi, s, r, t_hi);
    Some(ConvexSolution {
        d: d_hi,
        value: v,
        dual_bound: bound.min(v),
    })
}

/// Dual function at θ maximized over ν, for the convex case.
fn lagrangian_convex(
    beta: &[f64],
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
    s: f64,
    r: f64,
    theta: f64,
) -> f64 {
    let eval = |nu: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut sum = 0.0;
        for i in 0..beta.len() {
            let (v, d) = interval_min(beta[i] + nu, theta, a[i], lo[i], hi[i]);
            val += v;
            sum += d;
        }
        (val - nu * s - 0.5 * theta * r, sum - s)
    };
    maximize_over_nu(&eval, beta, theta, a, lo, hi)
}

/// Bisection on the supergradient Σd − s of a concave function of ν.
fn maximize_over_nu(
    eval: &dyn Fn(f64) -> (f64, f64),
    beta: &[f64],
    theta: f64,
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> f64 {
    let bmax = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let reach = (0..a.len())
        .map(|i| theta * a[i] * lo[i].abs().max(hi[i].abs()))
        .fold(0.0, f64::max);
    let mut l = -(bmax + reach) - 1.0;
    let mut h = bmax + reach + 1.0;
    let mut best = eval(l).0.max(eval(h).0);
    for _ in 0..100 {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        let (v, g) = eval(m);
        best = best.max(v);
        if g > 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    best
}

/// Result of evaluating the Lagrangian bound at a search node.
#[derive(Debug, Clone)]
pub struct NodeBound {
    pub bound: f64,
    /// Per pair, the inner minimum for each branch (+∞ when not allowed).
    pub branch_min: Vec<[f64; 2]>,
}

/// Lagrangian lower bound of the objective (without the constant) over all
/// completions of `allow`, maximized over the multipliers (ν, θ).
#[allow(clippy::needless_range_loop)]
pub fn node_bound(inst: &Instance, allow: &[Allow]) -> NodeBound {
    let n = inst.pieces.len();
    let eval_full = |nu: f64, theta: f64| -> (f64, f64, Vec<[f64; 2]>) {
        let mut val = 0.0;
        let mut sum = 0.0;
        let mut mins = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = [f64::INFINITY; 2];
            let mut arg = [0.0; 2];
            for b in 0..2 {
                let ok = match allow[i] {
                    Allow::Zero => b == 0,
                    Allow::One => b == 1,
                    Allow::Both => true,
                };
                if ok {
                    let p = inst.pieces[i][b];
                    let (v, d) = interval_min(p.beta + nu, theta, inst.a[i], p.lo, p.hi);
                    m[b] = p.alpha + v;
                    arg[b] = d;
                }
            }
            let b = if m[0] <= m[1] { 0 } else { 1 };
            val += m[b];
            sum += arg[b];
            mins.push(m);
        }
        (val - nu * inst.s - 0.5 * theta * inst.r, sum - inst.s, mins)
    };
    let betas: Vec<f64> = inst
        .pieces
        .iter()
        .map(|p| p[0].beta.abs().max(p[1].beta.abs()))
        .collect();
    let lo: Vec<f64> = inst.pieces.iter().map(|p| p[0].lo.min(p[1].lo)).collect();
    let hi: Vec<f64> = inst.pieces.iter().map(|p| p[0].hi.max(p[1].hi)).collect();
    let h = |theta: f64| -> f64 {
        let eval = |nu: f64| {
            let (v, g, _) = eval_full(nu, theta);
            (v, g)
        };
        maximize_over_nu(&eval, &betas, theta, &inst.a, &lo, &hi)
    };
    let spread = betas.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let amean = inst.a.iter().sum::<f64>() / n as f64;
    let theta0 = spread / (amean * inst.scale.max(1e-300));
    // golden-section search on log θ; h is concave in θ hence unimodal here
    let (mut x0, mut x1) = (theta0.ln() - 40.0, theta0.ln() + 40.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut xa = x1 - g * (x1 - x0);
    let mut xb = x0 + g * (x1 - x0);
    let mut fa = h(xa.exp());
    let mut fb = h(xb.exp());
    for _ in 0..80 {
        if fa < fb {
            x0 = xa;
            xa = xb;
            fa = fb;
            xb = x0 + g * (x1 - x0);
            fb = h(xb.exp());
        } else {
            x1 = xb;
            xb = xa;
            fb = fa;
            xa = x1 - g * (x1 - x0);
            fa = h(xa.exp());
        }
    }
    let (theta, best) = if fa >= fb {
        (xa.exp(), fa)
    } else {
        (xb.exp(), fb)
    };
    let best = best.max(h(0.0));
    // record branch minima at the chosen θ and its best ν
    let betas_nu = |nu: f64| {
        let (v, gr, _) = eval_full(nu, theta);
        (v, gr)
    };
    let nu = best_nu(&betas_nu, &betas, theta, &inst.a, &lo, &hi);
    let (_, _, mins) = eval_full(nu, theta);
    NodeBound {
        bound: best,
        branch_min: mins,
    }
}

fn best_nu(
    eval: &dyn Fn(f64) -> (f64, f64),
    beta: &[f64],
    theta: f64,
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> f64 {
    let bmax = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let reach = (0..a.len())
        .map(|i| theta * a[i] * lo[i].abs().max(hi[i].abs()))
        .fold(0.0, f64::max);
    let mut l = -(bmax + reach) - 1.0;
    let mut h = bmax + reach + 1.0;
    for _ in 0..100 {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        if eval(m).1 > 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    0.5 * (l + h)
}

/// Solves the convex problem for fixed indicators `w`.
pub fn solve_leaf(inst: &Instance, w: &[bool]) -> Option<(f64, Vec<f64>, f64)> {
    let n = inst.pieces.len();
    let mut beta = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut alpha = 0.0;
    for (pieces, &wi) in inst.pieces.iter().zip(w) {
        let p = pieces[wi as usize];
        beta.push(p.beta);
        lo.push(p.lo);
        hi.push(p.hi);
        alpha += p.alpha;
    }
    let sol = solve_convex(&beta, &inst.a, &lo, &hi, inst.s, inst.r, inst.scale)?;
    Some((
        inst.constant + alpha + sol.value,
        sol.d,
        inst.constant + alpha + sol.dual_bound,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_costs_give_min_norm_point() {
        let a = [1.0, 1.0, 2.0];
        let sol = solve_convex(&[0.5; 3], &a, &[-10.0; 3], &[10.0; 3], 5.0, 100.0, 1.0).unwrap();
        // min Σ a d² with Σ d = 5: d ∝ 1/a
        let expect = [2.0, 2.0, 1.0];
        for (x, y) in sol.d.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((sol.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn two_variable_closed_form() {
        // minimize d1 − d2 s.t. d1 + d2 = 0, d1² + d2² ≤ 2 → d = (−1, 1), value −2
        let sol = solve_convex(
            &[1.0, -1.0],
            &[1.0, 1.0],
            &[-5.0; 2],
            &[5.0; 2],
            0.0,
            2.0,
            1.0,
        )
        .unwrap();
        assert!((sol.value + 2.0).abs() < 1e-9);
        assert!((sol.d[0] + 1.0).abs() < 1e-6);
        assert!(sol.dual_bound <= sol.value + 1e-12 && sol.dual_bound > sol.value - 1e-8);
    }

    #[test]
    fn inactive_quadratic_is_linear_program() {
        // box binds before the ball: d ∈ [−1, 1]², d1 + d2 = 0, huge r
        let sol = solve_convex(
            &[1.0, -1.0],
            &[1.0, 1.0],
            &[-1.0; 2],
            &[1.0; 2],
            0.0,
            1e6,
            1.0,
        )
        .unwrap();
        assert!((sol.value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_cases() {
        assert!(solve_convex(&[0.0; 2], &[1.0; 2], &[0.0; 2], &[1.0; 2], 3.0, 10.0, 1.0).is_none());
        assert!(solve_convex(&[0.0; 2], &[1.0; 2], &[-5.0; 2], &[5.0; 2], 4.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn node_bound_is_below_leaves() {
        let pieces = vec![
            [
                Piece {
                    alpha: 0.0,
                    beta: 0.3,
                    lo: -4.0,
                    hi: -1e-9
                },
                Piece {
                    alpha: 0.1,
                    beta: -0.2,
                    lo: 0.0,
                    hi: 4.0
                },
            ];
            3
        ];
        let inst = Instance {
            pieces,
            a: vec![0.2, 0.25, 0.22],
            s: -1.0,
            r: 2.0,
            constant: 0.0,
            scale: 1.0,
        };
        let root = node_bound(&inst, &[Allow::Both; 3]);
        let mut best = f64::INFINITY;
        for mask in 0..8u32 {
            let w: Vec<bool> = (0..3).map(|i| mask >> i & 1 == 1).collect();
            if let Some((v, _, _)) = solve_leaf(&inst, &w) {
                best = best.min(v);
            }
        }
        assert!(root.bound <= best + 1e-9);
    }
}
