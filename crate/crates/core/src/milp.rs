//! Branch-and-bound over binary variables on top of the simplex solver.
//!
//! Best-bound node selection, most-fractional branching. Every
//! integer-feasible point met along the way is kept so callers can harvest
//! several cuts from one solve.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::lp::{solve_warm, LinearProgram, LpOptions, LpStatus, WarmStart};

#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    /// Relative gap at which the search stops.
    pub gap: f64,
    pub node_limit: usize,
    pub integrality_tol: f64,
    /// Pool keeps solutions with objective `<= pool_factor * best` when the
    /// best objective is negative.
    pub pool_factor: f64,
    /// Treated like the node limit once passed.
    pub deadline: Option<Instant>,
    pub lp: LpOptions,
}

impl MilpOptions {
    pub fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            gap: 1e-9,
            node_limit: 200_000,
            integrality_tol: 1e-6,
            pool_factor: 0.7,
            deadline: None,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    /// Gap closed or tree exhausted.
    Optimal,
    NodeLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent (`+inf` without one).
    pub upper: f64,
    /// Proven lower bound.
    pub lower: f64,
    pub pool: Vec<PoolEntry>,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub bound_trace: Vec<f64>,
    pub incumbent_trace: Vec<f64>,
}

/// Maps an LP relaxation point to an integer-feasible point, if it can.
pub type Heuristic<'a> = &'a (dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync);

struct Node {
    bound: f64,
    seq: usize,
    fixed: Vec<(usize, f64)>,
    warm: Option<WarmStart>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smaller bound and older node come first
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

pub fn gap_closed(upper: f64, lower: f64, gap: f64) -> bool {
    if !upper.is_finite() {
        return false;
    }
    let g = upper - lower;
    if g <= 1e-9 {
        return true;
    }
    if upper.abs() < 1e-12 {
        g <= gap * 1e-6
    } else {
        g / upper.abs() <= gap
    }
}

pub fn solve_milp(p: &MilpProblem, opts: &MilpOptions, heuristic: Option<Heuristic>) -> Result<MilpResult> {
    let n = p.lp.num_vars();
    for &b in &p.binaries {
        if b >= n {
            return invalid(format!("binary index {b} out of range"));
        }
        if p.lp.lower[b] < 0.0 || p.lp.upper[b] > 1.0 {
            return invalid(format!("binary {b} has bounds outside [0, 1]"));
        }
    }
    let mut res = MilpResult {
        status: MilpStatus::Infeasible,
        incumbent: None,
        upper: f64::INFINITY,
        lower: f64::NEG_INFINITY,
        pool: Vec::new(),
        nodes: 0,
        lp_iterations: 0,
        bound_trace: Vec::new(),
        incumbent_trace: Vec::new(),
    };
    let mut found: Vec<PoolEntry> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        fixed: Vec::new(),
        warm: None,
    });
    let mut lp = p.lp.clone();
    let mut limit_hit = false;
    // smallest bound among nodes dropped by the gap test
    let mut dropped = f64::INFINITY;

    while let Some(node) = heap.pop() {
        let global_lower = node.bound.min(res.upper).min(dropped);
        if global_lower > res.lower {
            res.lower = global_lower;
        }
        res.bound_trace.push(res.lower);
        if gap_closed(res.upper, node.bound, opts.gap) {
            // best-bound order: every open node is at least as bad
            dropped = dropped.min(node.bound);
            heap.clear();
            break;
        }
        if res.nodes >= opts.node_limit || (res.nodes > 0 && opts.past_deadline()) {
            heap.push(node);
            limit_hit = true;
            break;
        }
        res.nodes += 1;
        lp.lower.clone_from(&p.lp.lower);
        lp.upper.clone_from(&p.lp.upper);
        for &(j, v) in &node.fixed {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        let sol = solve_warm(&lp, &opts.lp, node.warm.as_ref())?;
        res.lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::InvalidArgument("MILP relaxation is unbounded".into())),
            LpStatus::Optimal => {}
        }
        let bound = sol.objective.max(node.bound);
        if gap_closed(res.upper, bound, opts.gap) {
            dropped = dropped.min(bound);
            continue;
        }
        // integer feasible already?
        let mut frac: Option<(usize, f64)> = None;
        for &b in &p.binaries {
            let v = sol.x[b];
            let f = (v - v.round()).abs();
            if f > opts.integrality_tol && frac.map_or(true, |(_, g)| f > g) {
                frac = Some((b, f));
            }
        }
        if let Some(h) = heuristic {
            if let Some(cand) = h(&sol.x) {
                if let Some(obj) = check_feasible(p, &cand, opts) {
                    record(&mut res, &mut found, cand, obj);
                }
            }
        }
        let Some((branch, _)) = frac else {
            let mut x = sol.x.clone();
            for &b in &p.binaries {
                x[b] = x[b].round();
            }
            let obj = p.lp.objective_value(&x);
            record(&mut res, &mut found, x, obj);
            continue;
        };
        if gap_closed(res.upper, bound, opts.gap) {
            dropped = dropped.min(bound);
            continue;
        }
        for v in [1.0, 0.0] {
            let mut fixed = node.fixed.clone();
            fixed.push((branch, v));
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                fixed,
                warm: sol.warm.clone(),
            });
        }
    }

    let open_min = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    res.lower = open_min.min(dropped).min(res.upper);
    res.bound_trace.push(res.lower);
    res.status = if res.incumbent.is_none() && !limit_hit {
        MilpStatus::Infeasible
    } else if limit_hit && !gap_closed(res.upper, res.lower, opts.gap) {
        MilpStatus::NodeLimit
    } else {
        MilpStatus::Optimal
    };
    let best = res.upper;
    res.pool = found
        .into_iter()
        .filter(|e| {
            best.is_finite() && (e.objective <= best + 1e-12 || (best < 0.0 && e.objective <= opts.pool_factor * best))
        })
        .collect();
    Ok(res)
}

fn check_feasible(p: &MilpProblem, x: &[f64], opts: &MilpOptions) -> Option<f64> {
    if x.len() != p.lp.num_vars() {
        return None;
    }
    for &b in &p.binaries {
        if (x[b] - x[b].round()).abs() > opts.integrality_tol {
            return None;
        }
    }
    if p.lp.max_violation(x) > 1e-7 {
        return None;
    }
    Some(p.lp.objective_value(x))
}

fn record(res: &mut MilpResult, found: &mut Vec<PoolEntry>, x: Vec<f64>, obj: f64) {
    if obj < res.upper {
        res.upper = obj;
        res.incumbent = Some(x.clone());
        res.incumbent_trace.push(obj);
    }
    if !found.iter().any(|e| e.x == x) {
        found.push(PoolEntry { x, objective: obj });
    }
}
