//! Global minimisation of a CPWA function over a box as a MILP.
//!
//! Positive terms become an epigraph variable above every piece. Negative
//! terms need the exact maximum, so each piece gets a binary selector and a
//! big-M slack whose constant is the closed-form box maximum of the piece
//! differences.
//!
//! When the full encoding carries many binaries the box is also split:
//! on a sub-box most pieces never attain their term's maximum and drop out,
//! and the big-M constants shrink with the box.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cpwa::{CpwaFunction, Piece, Term};
use crate::error::{invalid, Result};
use crate::lp::{LinearProgram, Relation};
use crate::milp::{gap_closed, solve_milp, MilpOptions, MilpProblem, MilpStatus};

#[derive(Debug, Clone)]
pub struct EncodingOptions {
    /// Terms whose coefficients are all within this of zero are replaced by
    /// their lower bound over the box.
    pub prune_tol: f64,
    /// Split the box once the encoding needs more binaries than this.
    pub spatial_above: usize,
    /// Branch-and-bound nodes spent on each sub-box before it is split.
    pub nodes_per_box: usize,
}

impl Default for EncodingOptions {
    fn default() -> Self {
        EncodingOptions {
            prune_tol: 1e-6,
            spatial_above: 24,
            nodes_per_box: 40,
        }
    }
}

impl EncodingOptions {
    pub fn with_prune_tol(prune_tol: f64) -> Self {
        EncodingOptions {
            prune_tol,
            ..Default::default()
        }
    }
}

/// Range of a piece over `[lower, upper]`.
fn piece_range(p: &Piece, lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (p.b, p.b);
    for ((&a, &l), &u) in p.a.iter().zip(lower).zip(upper) {
        if a >= 0.0 {
            lo += a * l;
            hi += a * u;
        } else {
            lo += a * u;
            hi += a * l;
        }
    }
    (lo, hi)
}

fn diff(q: &Piece, p: &Piece) -> Piece {
    Piece::new(q.a.iter().zip(&p.a).map(|(a, b)| a - b).collect(), q.b - p.b)
}

/// Distinct pieces that attain the maximum somewhere in the box.
fn live_pieces(t: &Term, lower: &[f64], upper: &[f64]) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    for p in &t.pieces {
        if !out.iter().any(|q| q == p) {
            out.push(p.clone());
        }
    }
    let mut i = 0;
    while i < out.len() && out.len() > 1 {
        let dominated = (0..out.len()).any(|k| k != i && piece_range(&diff(&out[k], &out[i]), lower, upper).0 >= 0.0);
        if dominated {
            out.remove(i);
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone)]
enum EncTerm {
    Positive {
        lambda: usize,
        term: Term,
    },
    Negative {
        zeta: usize,
        delta: Vec<usize>,
        iota: Vec<usize>,
        term: Term,
    },
}

#[derive(Debug, Clone)]
pub struct MinEncoding {
    pub problem: MilpProblem,
    pub d: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Constant standing in for pruned terms (a lower bound on their sum).
    pub pruned_lower: f64,
    pub pruned_terms: usize,
    terms: Vec<EncTerm>,
}

/// Builds the MILP for `min_{0 <= x <= upper} h(x) + offset`.
pub fn encode_min(h: &CpwaFunction, offset: f64, upper: &[f64], opts: &EncodingOptions) -> Result<MinEncoding> {
    if upper.len() != h.d {
        return invalid("box dimension differs from the function dimension");
    }
    if upper.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return invalid("box upper bounds must be finite and nonnegative");
    }
    encode_min_in(h, offset, &vec![0.0; h.d], upper, opts)
}

/// As [`encode_min`] over `[lower, upper]`.
fn encode_min_in(
    h: &CpwaFunction,
    offset: f64,
    lower: &[f64],
    upper: &[f64],
    opts: &EncodingOptions,
) -> Result<MinEncoding> {
    let d = h.d;
    let mut lp = LinearProgram::new();
    lp.offset = offset;
    for (&l, &u) in lower.iter().zip(upper) {
        lp.add_var(0.0, l, u);
    }
    let mut binaries = Vec::new();
    let mut terms = Vec::new();
    let mut pruned_lower = 0.0;
    let mut pruned_terms = 0;
    for t in &h.terms {
        let tiny = t
            .pieces
            .iter()
            .all(|p| p.b.abs() <= opts.prune_tol && p.a.iter().all(|a| a.abs() <= opts.prune_tol));
        if tiny && opts.prune_tol > 0.0 {
            let ranges: Vec<(f64, f64)> = t.pieces.iter().map(|p| piece_range(p, lower, upper)).collect();
            pruned_lower += if t.sign > 0 {
                ranges.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max)
            } else {
                -ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
            };
            pruned_terms += 1;
            continue;
        }
        let pieces = live_pieces(t, lower, upper);
        let sign = f64::from(t.sign);
        if pieces.len() == 1 {
            let p = &pieces[0];
            for (j, a) in p.a.iter().enumerate() {
                lp.cost[j] += sign * a;
            }
            lp.offset += sign * p.b;
            continue;
        }
        let term = Term::new(t.sign, pieces);
        let lo = term
            .pieces
            .iter()
            .map(|p| piece_range(p, lower, upper).0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = term
            .pieces
            .iter()
            .map(|p| piece_range(p, lower, upper).1)
            .fold(f64::NEG_INFINITY, f64::max);
        if t.sign > 0 {
            let lambda = lp.add_var(1.0, lo, hi);
            for p in &term.pieces {
                // negligible slopes are replaced by their box minimum, which
                // only loosens the row
                let scale = p.a.iter().fold(1.0f64, |m, a| m.max(a.abs()));
                let mut c = Vec::new();
                let mut rhs = -p.b;
                for (j, &a) in p.a.iter().enumerate() {
                    if a.abs() > 1e-13 * scale {
                        c.push((j, a));
                    } else {
                        rhs -= if a < 0.0 { a * upper[j] } else { a * lower[j] };
                    }
                }
                c.push((lambda, -1.0));
                lp.add_row(c, Relation::Le, rhs);
            }
            terms.push(EncTerm::Positive { lambda, term });
        } else {
            let zeta = lp.add_var(-1.0, lo, hi);
            let mut delta = Vec::new();
            let mut iota = Vec::new();
            for (i, p) in term.pieces.iter().enumerate() {
                let big_m = term
                    .pieces
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i)
                    .map(|(_, q)| piece_range(&diff(q, p), lower, upper).1)
                    .fold(f64::NEG_INFINITY, f64::max)
                    // a larger M only loosens; a tiny one ruins the row scaling
                    .max(1e-6);
                let dv = lp.add_var(0.0, 0.0, big_m);
                let iv = lp.add_var(0.0, 0.0, 1.0);
                binaries.push(iv);
                let mut c = piece_coeffs(p);
                c.push((dv, 1.0));
                c.push((zeta, -1.0));
                lp.add_row(c, Relation::Eq, -p.b);
                lp.add_row(vec![(dv, 1.0), (iv, big_m)], Relation::Le, big_m);
                delta.push(dv);
                iota.push(iv);
            }
            lp.add_row(iota.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
            terms.push(EncTerm::Negative {
                zeta,
                delta,
                iota,
                term,
            });
        }
    }
    lp.offset += pruned_lower;
    Ok(MinEncoding {
        problem: MilpProblem { lp, binaries },
        d,
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        pruned_lower,
        pruned_terms,
        terms,
    })
}

fn piece_coeffs(p: &Piece) -> Vec<(usize, f64)> {
    p.a.iter()
        .enumerate()
        .filter(|(_, &a)| a != 0.0)
        .map(|(j, &a)| (j, a))
        .collect()
}

impl MinEncoding {
    pub fn decode(&self, sol: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|j| sol[j].clamp(self.lower[j], self.upper[j]))
            .collect()
    }

    /// A MILP-feasible vector whose box part is `x`.
    pub fn complete(&self, x: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect();
        let mut v = vec![0.0; self.problem.lp.num_vars()];
        v[..self.d].copy_from_slice(&x);
        for t in &self.terms {
            match t {
                EncTerm::Positive { lambda, term } => {
                    v[*lambda] = term.max_value(&x);
                }
                EncTerm::Negative {
                    zeta,
                    delta,
                    iota,
                    term,
                } => {
                    let best = term.argmax(&x);
                    let top = term.pieces[best].eval(&x);
                    v[*zeta] = top;
                    for (i, p) in term.pieces.iter().enumerate() {
                        v[delta[i]] = if i == best { 0.0 } else { (top - p.eval(&x)).max(0.0) };
                        v[iota[i]] = if i == best { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct BoxMinimum {
    pub status: MilpStatus,
    /// Proven lower bound on the minimum.
    pub lower: f64,
    /// Exact value at `argmin`.
    pub upper: f64,
    pub argmin: Vec<f64>,
    /// Integer-feasible points with their exact function values.
    pub pool: Vec<(Vec<f64>, f64)>,
    pub nodes: usize,
    pub lp_iterations: usize,
}

/// `min_{0 <= x <= upper} h(x) + offset` by branch and bound.
pub fn minimize_over_box(
    h: &CpwaFunction,
    offset: f64,
    upper: &[f64],
    milp: &MilpOptions,
    enc: &EncodingOptions,
) -> Result<BoxMinimum> {
    let e = encode_min(h, offset, upper, enc)?;
    if e.problem.binaries.len() > enc.spatial_above {
        return spatial_min(h, offset, upper, milp, enc);
    }
    let heur = |v: &[f64]| Some(e.complete(&e.decode(v)));
    let r = solve_milp(&e.problem, milp, Some(&heur))?;
    let pool: Vec<(Vec<f64>, f64)> = r
        .pool
        .iter()
        .map(|p| {
            let x = e.decode(&p.x);
            let val = h.eval(&x) + offset;
            (x, val)
        })
        .collect();
    finish(pool, r.status, r.lower, r.nodes, r.lp_iterations, milp)
}

fn finish(
    mut pool: Vec<(Vec<f64>, f64)>,
    status: MilpStatus,
    lower: f64,
    nodes: usize,
    lp_iterations: usize,
    milp: &MilpOptions,
) -> Result<BoxMinimum> {
    pool.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (argmin, upper_val) = match pool.first() {
        Some((x, v)) => (x.clone(), *v),
        None => {
            return Err(crate::error::Error::Solver(
                "box minimisation found no feasible point".into(),
            ))
        }
    };
    pool.retain(|(_, v)| *v <= upper_val + 1e-12 || (upper_val < 0.0 && *v <= milp.pool_factor * upper_val));
    Ok(BoxMinimum {
        status,
        lower: lower.min(upper_val),
        upper: upper_val,
        argmin,
        pool,
        nodes,
        lp_iterations,
    })
}

struct SubBox {
    bound: f64,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for SubBox {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for SubBox {}
impl PartialOrd for SubBox {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for SubBox {
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

/// Coordinate to bisect: the widest side, weighted by how many terms still
/// have a kink across it.
fn split_axis(h: &CpwaFunction, lower: &[f64], upper: &[f64]) -> usize {
    let d = h.d;
    let mut weight = vec![0.0; d];
    for t in &h.terms {
        if t.sign > 0 {
            continue;
        }
        let live = live_pieces(t, lower, upper);
        if live.len() < 2 {
            continue;
        }
        for (j, w) in weight.iter_mut().enumerate() {
            let (lo, hi) = live.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.a[j]), hi.max(p.a[j]))
            });
            *w += hi - lo;
        }
    }
    (0..d)
        .max_by(|&a, &b| {
            let sa = weight[a] * (upper[a] - lower[a]);
            let sb = weight[b] * (upper[b] - lower[b]);
            sa.total_cmp(&sb).then(b.cmp(&a))
        })
        .unwrap_or(0)
}

/// Best-bound search over sub-boxes; each sub-box runs the MILP on its own
/// encoding with a small node budget and is bisected if that does not
/// close it.
/// Box splitting visits many sub-boxes; only the best points are returned.
const SPATIAL_POOL_CAP: usize = 100;

fn spatial_min(
    h: &CpwaFunction,
    offset: f64,
    upper: &[f64],
    milp: &MilpOptions,
    enc: &EncodingOptions,
) -> Result<BoxMinimum> {
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(SubBox {
        bound: f64::NEG_INFINITY,
        seq,
        lower: vec![0.0; h.d],
        upper: upper.to_vec(),
    });
    let mut best = f64::INFINITY;
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    let (mut nodes, mut lp_iterations) = (0usize, 0usize);
    // smallest bound among closed or dropped sub-boxes
    let mut closed = f64::INFINITY;
    let mut limit_hit = false;
    let sub_opts = MilpOptions {
        node_limit: enc.nodes_per_box.max(1),
        ..milp.clone()
    };

    while let Some(b) = heap.pop() {
        if gap_closed(best, b.bound, milp.gap) {
            closed = closed.min(b.bound);
            heap.clear();
            break;
        }
        if nodes >= milp.node_limit || (nodes > 0 && milp.past_deadline()) {
            heap.push(b);
            limit_hit = true;
            break;
        }
        let e = encode_min_in(h, offset, &b.lower, &b.upper, enc)?;
        let heur = |v: &[f64]| Some(e.complete(&e.decode(v)));
        let r = solve_milp(&e.problem, &sub_opts, Some(&heur))?;
        nodes += r.nodes.max(1);
        lp_iterations += r.lp_iterations;
        for p in &r.pool {
            let x = e.decode(&p.x);
            let val = h.eval(&x) + offset;
            best = best.min(val);
            if !found.iter().any(|(y, _)| *y == x) {
                found.push((x, val));
            }
        }
        if r.status == MilpStatus::Infeasible {
            continue;
        }
        let bound = r.lower.max(b.bound);
        if r.status == MilpStatus::Optimal || gap_closed(best, bound, milp.gap) {
            closed = closed.min(bound);
            continue;
        }
        let j = split_axis(h, &b.lower, &b.upper);
        let mid = 0.5 * (b.lower[j] + b.upper[j]);
        if !(mid > b.lower[j] && mid < b.upper[j]) {
            // cannot split further; keep the bound
            closed = closed.min(bound);
            continue;
        }
        for (lo, hi) in [(b.lower[j], mid), (mid, b.upper[j])] {
            let mut l = b.lower.clone();
            let mut u = b.upper.clone();
            l[j] = lo;
            u[j] = hi;
            seq += 1;
            heap.push(SubBox {
                bound,
                seq,
                lower: l,
                upper: u,
            });
        }
    }
    let open_min = heap.iter().map(|b| b.bound).fold(f64::INFINITY, f64::min);
    let lower = open_min.min(closed);
    found.sort_by(|a, b| a.1.total_cmp(&b.1));
    found.truncate(SPATIAL_POOL_CAP);
    let status = if limit_hit && !gap_closed(best, lower, milp.gap) {
        MilpStatus::NodeLimit
    } else {
        MilpStatus::Optimal
    };
    finish(found, status, lower, nodes, lp_iterations, milp)
}
