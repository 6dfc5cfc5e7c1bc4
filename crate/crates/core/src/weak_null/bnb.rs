//! Best-first branch and bound over the order indicators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::subproblem::{node_bound, solve_leaf, Allow, Instance};

#[derive(Debug, Clone)]
pub struct SearchLimits {
    pub node_limit: usize,
    /// Absolute optimality tolerance on the (unscaled) objective.
    pub gap_tol: f64,
    /// Stop as soon as the optimum is known to lie on one side of this value.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best feasible value found, +∞ if none.
    pub incumbent: f64,
    pub w: Vec<bool>,
    pub d: Vec<f64>,
    /// Proven lower bound on the optimum.
    pub lower_bound: f64,
    pub nodes: usize,
    pub hit_limit: bool,
    pub stopped_at_threshold: bool,
}

struct Node {
    bound: f64,
    id: usize,
    allow: Vec<Allow>,
    branch_min: Vec<[f64; 2]>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound first, then older node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    inst: &'a Instance,
    incumbent: f64,
    w: Vec<bool>,
    d: Vec<f64>,
    nodes: usize,
}

impl Search<'_> {
    fn try_leaf(&mut self, w: Vec<bool>) -> Option<(f64, f64)> {
        self.nodes += 1;
        let (value, d, dual) = solve_leaf(self.inst, &w)?;
        if value < self.incumbent {
            self.incumbent = value;
            self.w = w;
            self.d = d;
        }
        Some((value, dual))
    }

    /// Evaluates a node; returns `None` when it needs no further work.
    fn evaluate(&mut self, allow: Vec<Allow>, id: usize) -> Option<Node> {
        if allow.iter().all(|a| *a != Allow::Both) {
            let w: Vec<bool> = allow.iter().map(|a| *a == Allow::One).collect();
            self.try_leaf(w);
            return None;
        }
        self.nodes += 1;
        let nb = node_bound(self.inst, &allow);
        let bound = self.inst.constant + nb.bound;
        // rounding completion: each free pair takes its better branch
        let guess: Vec<bool> = allow
            .iter()
            .zip(&nb.branch_min)
            .map(|(a, m)| match a {
                Allow::Zero => false,
                Allow::One => true,
                Allow::Both => m[1] < m[0],
            })
            .collect();
        self.try_leaf(guess);
        Some(Node {
            bound,
            id,
            allow,
            branch_min: nb.branch_min,
        })
    }
}

/// Most ambiguous free pair: the smallest gap between its two branch minima,
/// ties broken by the lowest index.
fn branching_pair(node: &Node) -> usize {
    let mut best = usize::MAX;
    let mut best_gap = f64::INFINITY;
    for (i, a) in node.allow.iter().enumerate() {
        if *a == Allow::Both {
            let gap = (node.branch_min[i][0] - node.branch_min[i][1]).abs();
            if gap < best_gap || best == usize::MAX {
                best = i;
                best_gap = gap;
            }
        }
    }
    best
}

pub fn search(inst: &Instance, root_allow: Vec<Allow>, limits: &SearchLimits) -> SearchOutcome {
    let n = inst.pieces.len();
    let mut s = Search {
        inst,
        incumbent: f64::INFINITY,
        w: vec![false; n],
        d: vec![0.0; n],
        nodes: 0,
    };
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let mut hit_limit = false;
    let mut stopped = false;
    if let Some(root) = s.evaluate(root_allow, next_id) {
        heap.push(root);
    }
    next_id += 1;
    // smallest bound among nodes discarded within the gap tolerance
    let mut pruned = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if node.bound >= s.incumbent - limits.gap_tol {
            pruned = pruned.min(node.bound);
            break;
        }
        if let Some(t) = limits.threshold {
            if node.bound > t || s.incumbent < t {
                stopped = true;
                heap.push(node);
                break;
            }
        }
        if s.nodes >= limits.node_limit {
            hit_limit = true;
            heap.push(node);
            break;
        }
        let i = branching_pair(&node);
        for b in [Allow::Zero, Allow::One] {
            let mut allow = node.allow.clone();
            allow[i] = b;
            if let Some(child) = s.evaluate(allow, next_id) {
                if child.bound < s.incumbent - limits.gap_tol {
                    heap.push(child);
                } else {
                    pruned = pruned.min(child.bound);
                }
            }
            next_id += 1;
        }
    }
    let open = if hit_limit || stopped {
        heap.peek().map(|n| n.bound).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    let lower = s.incumbent.min(pruned).min(open);
    SearchOutcome {
        incumbent: s.incumbent,
        w: s.w,
        d: s.d,
        lower_bound: lower,
        nodes: s.nodes,
        hit_limit,
        stopped_at_threshold: stopped,
    }
}
