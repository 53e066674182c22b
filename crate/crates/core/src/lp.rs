//! Bounded-variable revised primal simplex.
//!
//! Every row `L <= <a, x> <= U` gets a logical variable `s = <a, x>` so the
//! working system is `A x - s = 0` with bounds on all columns. The basis
//! factorization only inverts the block of structural basic columns against
//! the rows whose logical is nonbasic, which keeps the cost independent of
//! the number of slack rows (cutting-plane LPs have many of those).
//! Updates between refactorizations use product-form etas.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min <cost, x> + offset` subject to rows and column bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Constraint { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Row activities `<a_i, x>`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (r, act) in self.rows.iter().zip(self.activities(x)) {
            let v = match r.relation {
                Relation::Le => act - r.rhs,
                Relation::Ge => r.rhs - act,
                Relation::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A basis that can seed a later solve of a problem with the same columns
/// and at least as many rows.
#[derive(Debug, Clone)]
pub struct WarmStart {
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    n: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row; nonnegative on active `>=` rows of a
    /// minimisation, nonpositive on active `<=` rows.
    pub row_duals: Vec<f64>,
    /// `cost_j - <duals, column_j>` for the structural columns.
    pub reduced_costs: Vec<f64>,
    /// Row multipliers of the phase-one problem when infeasible.
    pub farkas: Option<Vec<f64>>,
    /// Improving direction when unbounded.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
    pub warm: Option<WarmStart>,
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
    /// Rows whose largest to smallest nonzero ratio exceeds this are rejected.
    pub max_coeff_ratio: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            max_iterations: 200_000,
            max_coeff_ratio: 1e12,
            bland_after: 50,
        }
    }
}

pub fn solve(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
    solve_warm(lp, opts, None)
}

pub fn solve_warm(lp: &LinearProgram, opts: &LpOptions, warm: Option<&WarmStart>) -> Result<LpSolution> {
    validate(lp, opts)?;
    let mut s = Simplex::new(lp, opts);
    if let Some(w) = warm {
        s.load_warm(w);
    }
    s.run()
}

fn validate(lp: &LinearProgram, opts: &LpOptions) -> Result<()> {
    let n = lp.num_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return invalid("bound vectors do not match the number of variables");
    }
    for j in 0..n {
        if lp.lower[j].is_nan() || lp.upper[j].is_nan() || !lp.cost[j].is_finite() {
            return invalid(format!("variable {j}: NaN bound or non-finite cost"));
        }
        if lp.lower[j] > lp.upper[j] {
            return invalid(format!(
                "variable {j}: lower bound {} exceeds upper bound {}",
                lp.lower[j], lp.upper[j]
            ));
        }
    }
    for (i, r) in lp.rows.iter().enumerate() {
        if !r.rhs.is_finite() {
            return invalid(format!("row {i}: non-finite right-hand side"));
        }
        let mut big = 0.0f64;
        let mut small = f64::INFINITY;
        for &(j, v) in &r.coeffs {
            if j >= n {
                return invalid(format!("row {i}: column {j} out of range"));
            }
            if !v.is_finite() {
                return invalid(format!("row {i}: non-finite coefficient"));
            }
            if v != 0.0 {
                big = big.max(v.abs());
                small = small.min(v.abs());
            }
        }
        if big > 0.0 && big / small > opts.max_coeff_ratio {
            return Err(Error::Conditioning(format!(
                "row {i}: coefficient ratio {:.3e} exceeds {:.1e}",
                big / small,
                opts.max_coeff_ratio
            )));
        }
    }
    Ok(())
}

const NONE: usize = usize::MAX;
const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
/// A ray must lower the objective by this much relative to its size.
const RAY_TOL: f64 = 1e-7;

struct DenseLu {
    k: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// On a (numerically) singular matrix returns the failing column and the
    /// original row left without a pivot.
    fn factor(mut a: Vec<f64>, k: usize) -> std::result::Result<DenseLu, (usize, usize)> {
        let mut perm: Vec<usize> = (0..k).collect();
        for c in 0..k {
            let mut p = c;
            let mut best = a[c * k + c].abs();
            for r in c + 1..k {
                let v = a[r * k + c].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-11 {
                return Err((c, perm[c]));
            }
            if p != c {
                for j in 0..k {
                    a.swap(c * k + j, p * k + j);
                }
                perm.swap(c, p);
            }
            let piv = a[c * k + c];
            for r in c + 1..k {
                let f = a[r * k + c] / piv;
                if f != 0.0 {
                    a[r * k + c] = f;
                    for j in c + 1..k {
                        a[r * k + j] -= f * a[c * k + j];
                    }
                } else {
                    a[r * k + c] = 0.0;
                }
            }
        }
        Ok(DenseLu { k, lu: a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..k {
            let mut s = y[r];
            for c in 0..r {
                s -= self.lu[r * k + c] * y[c];
            }
            y[r] = s;
        }
        for r in (0..k).rev() {
            let mut s = y[r];
            for c in r + 1..k {
                s -= self.lu[r * k + c] * y[c];
            }
            y[r] = s / self.lu[r * k + r];
        }
        y
    }

    fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut z = b.to_vec();
        for r in 0..k {
            let mut s = z[r];
            for c in 0..r {
                s -= self.lu[c * k + r] * z[c];
            }
            z[r] = s / self.lu[r * k + r];
        }
        for r in (0..k).rev() {
            let mut s = z[r];
            for c in r + 1..k {
                s -= self.lu[c * k + r] * z[c];
            }
            z[r] = s;
        }
        let mut out = vec![0.0; k];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = z[i];
        }
        out
    }
}

struct Eta {
    r: usize,
    col: Vec<f64>,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a LpOptions,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    // factorization of the basis as it was at the last refactor
    s_cols: Vec<usize>,
    s_pos: Vec<usize>,
    r_rows: Vec<usize>,
    pos_kind: Vec<(bool, usize)>,
    lu: Option<DenseLu>,
    etas: Vec<Eta>,
    iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, opts: &'a LpOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols = vec![Vec::new(); n];
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, v) in &r.coeffs {
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }
        // merge duplicate entries in a column
        for c in cols.iter_mut() {
            c.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
            for &(i, v) in c.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += v,
                    _ => merged.push((i, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            *c = merged;
        }
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for r in &lp.rows {
            let (l, u) = match r.relation {
                Relation::Le => (f64::NEG_INFINITY, r.rhs),
                Relation::Ge => (r.rhs, f64::INFINITY),
                Relation::Eq => (r.rhs, r.rhs),
            };
            lo.push(l);
            hi.push(u);
        }
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = nonbasic_value(lo[j], hi[j], false);
        }
        let basis: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![NONE; n + m];
        for (p, &v) in basis.iter().enumerate() {
            pos[v] = p;
        }
        Simplex {
            lp,
            opts,
            m,
            n,
            cols,
            lo,
            hi,
            x,
            basis,
            pos,
            s_cols: Vec::new(),
            s_pos: Vec::new(),
            r_rows: Vec::new(),
            pos_kind: Vec::new(),
            lu: None,
            etas: Vec::new(),
            iterations: 0,
        }
    }

    fn load_warm(&mut self, w: &WarmStart) {
        if w.n != self.n || w.basis.len() > self.m {
            return;
        }
        let old_m = w.basis.len();
        let mut basis = Vec::with_capacity(self.m);
        for &v in &w.basis {
            // logical columns keep their row index
            basis.push(if v >= w.n { v - w.n + self.n } else { v });
        }
        for i in old_m..self.m {
            basis.push(self.n + i);
        }
        let mut pos = vec![NONE; self.n + self.m];
        for (p, &v) in basis.iter().enumerate() {
            if v >= self.n + self.m || pos[v] != NONE {
                return;
            }
            pos[v] = p;
        }
        let saved = (self.basis.clone(), self.pos.clone(), self.x.clone());
        self.basis = basis;
        self.pos = pos;
        for j in 0..self.n + self.m {
            if self.pos[j] == NONE {
                let up = if j < self.n {
                    w.at_upper.get(j).copied().unwrap_or(false)
                } else {
                    w.at_upper.get(j - self.n + w.n).copied().unwrap_or(false)
                };
                self.x[j] = nonbasic_value(self.lo[j], self.hi[j], up);
            }
        }
        if !self.refactor() {
            self.basis = saved.0;
            self.pos = saved.1;
            self.x = saved.2;
            self.lu = None;
        }
    }

    fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                v[i] = a;
            }
        } else {
            v[j - self.n] = -1.0;
        }
        v
    }

    /// Factor the current basis, swapping dependent structural columns for
    /// logicals when it is singular. Returns false only if that fails.
    fn refactor(&mut self) -> bool {
        for _ in 0..=self.m {
            match self.try_factor() {
                Ok(()) => return true,
                Err((p, row)) => {
                    let j = self.basis[p];
                    let v = self.x[j];
                    let (lo, hi) = (self.lo[j], self.hi[j]);
                    self.x[j] = if lo.is_finite() && hi.is_finite() {
                        if v - lo <= hi - v {
                            lo
                        } else {
                            hi
                        }
                    } else {
                        nonbasic_value(lo, hi, hi.is_finite())
                    };
                    self.pos[j] = NONE;
                    self.basis[p] = self.n + row;
                    self.pos[self.n + row] = p;
                }
            }
        }
        false
    }

    /// On failure returns the basis position to drop and the row whose
    /// logical replaces it.
    fn try_factor(&mut self) -> std::result::Result<(), (usize, usize)> {
        let n = self.n;
        let m = self.m;
        let mut s_cols = Vec::new();
        let mut s_pos = Vec::new();
        let mut slack_basic = vec![false; m];
        let mut pos_kind = vec![(false, 0); m];
        for (p, &v) in self.basis.iter().enumerate() {
            if v < n {
                pos_kind[p] = (true, s_cols.len());
                s_cols.push(v);
                s_pos.push(p);
            } else {
                slack_basic[v - n] = true;
                pos_kind[p] = (false, v - n);
            }
        }
        let r_rows: Vec<usize> = (0..m).filter(|&i| !slack_basic[i]).collect();
        let k = s_cols.len();
        assert_eq!(r_rows.len(), k, "basis size mismatch");
        let mut row_index = vec![NONE; m];
        for (ri, &i) in r_rows.iter().enumerate() {
            row_index[i] = ri;
        }
        let mut kmat = vec![0.0; k * k];
        for (si, &j) in s_cols.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                let ri = row_index[i];
                if ri != NONE {
                    kmat[ri * k + si] = a;
                }
            }
        }
        let lu = DenseLu::factor(kmat, k).map_err(|(si, ri)| (s_pos[si], r_rows[ri]))?;
        self.s_cols = s_cols;
        self.s_pos = s_pos;
        self.r_rows = r_rows;
        self.pos_kind = pos_kind;
        self.lu = Some(lu);
        self.etas.clear();
        self.recompute_basics();
        Ok(())
    }

    fn ftran_base(&self, r: &[f64]) -> Vec<f64> {
        let lu = self.lu.as_ref().expect("factored");
        let rhs: Vec<f64> = self.r_rows.iter().map(|&i| r[i]).collect();
        let zs = lu.solve(&rhs);
        let mut v = vec![0.0; self.m];
        for (si, &j) in self.s_cols.iter().enumerate() {
            let z = zs[si];
            if z != 0.0 {
                for &(i, a) in &self.cols[j] {
                    v[i] += a * z;
                }
            }
        }
        let mut out = vec![0.0; self.m];
        for p in 0..self.m {
            let (structural, idx) = self.pos_kind[p];
            out[p] = if structural { zs[idx] } else { v[idx] - r[idx] };
        }
        out
    }

    fn ftran(&self, r: &[f64]) -> Vec<f64> {
        let mut z = self.ftran_base(r);
        for e in &self.etas {
            let zr = z[e.r] / e.col[e.r];
            if zr != 0.0 {
                for (i, &a) in e.col.iter().enumerate() {
                    if i != e.r {
                        z[i] -= a * zr;
                    }
                }
            }
            z[e.r] = zr;
        }
        z
    }

    fn btran(&self, c: &[f64]) -> Vec<f64> {
        let mut c = c.to_vec();
        for e in self.etas.iter().rev() {
            let mut s = c[e.r];
            for (i, &a) in e.col.iter().enumerate() {
                if i != e.r {
                    s -= a * c[i];
                }
            }
            c[e.r] = s / e.col[e.r];
        }
        let lu = self.lu.as_ref().expect("factored");
        let mut w = vec![0.0; self.m];
        for p in 0..self.m {
            let (structural, idx) = self.pos_kind[p];
            if !structural {
                w[idx] = -c[p];
            }
        }
        let rhs: Vec<f64> = self
            .s_cols
            .iter()
            .zip(&self.s_pos)
            .map(|(&j, &p)| c[p] - self.cols[j].iter().map(|&(i, a)| a * w[i]).sum::<f64>())
            .collect();
        let wr = lu.solve_transpose(&rhs);
        for (ri, &i) in self.r_rows.iter().enumerate() {
            w[i] = wr[ri];
        }
        w
    }

    fn recompute_basics(&mut self) {
        // B x_B = -sum_{nonbasic} col_j x_j
        let mut r = vec![0.0; self.m];
        for j in 0..self.n {
            if self.pos[j] == NONE && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for i in 0..self.m {
            let j = self.n + i;
            if self.pos[j] == NONE {
                r[i] += self.x[j];
            }
        }
        let mut z = self.ftran(&r);
        // one step of iterative refinement
        let mut res = r.clone();
        for (p, &v) in self.basis.iter().enumerate() {
            if v < self.n {
                for &(i, a) in &self.cols[v] {
                    res[i] -= a * z[p];
                }
            } else {
                res[v - self.n] += z[p];
            }
        }
        if res.iter().any(|v| v.abs() > 1e-14) {
            let dz = self.ftran(&res);
            for p in 0..self.m {
                z[p] += dz[p];
            }
        }
        for (p, &v) in self.basis.iter().enumerate() {
            self.x[v] = z[p];
        }
    }

    fn tol(&self, bound: f64) -> f64 {
        self.opts.feasibility_tol * bound.abs().max(1.0)
    }

    fn infeasibility(&self) -> f64 {
        let mut s = 0.0;
        for &v in &self.basis {
            let x = self.x[v];
            if x < self.lo[v] - self.tol(self.lo[v]) {
                s += self.lo[v] - x;
            } else if x > self.hi[v] + self.tol(self.hi[v]) {
                s += x - self.hi[v];
            }
        }
        s
    }

    fn phase_costs(&self, phase1: bool) -> Vec<f64> {
        self.basis
            .iter()
            .map(|&v| {
                if phase1 {
                    let x = self.x[v];
                    if x < self.lo[v] - self.tol(self.lo[v]) {
                        -1.0
                    } else if x > self.hi[v] + self.tol(self.hi[v]) {
                        1.0
                    } else {
                        0.0
                    }
                } else if v < self.n {
                    self.lp.cost[v]
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn reduced_cost(&self, j: usize, w: &[f64], phase1: bool) -> f64 {
        if j < self.n {
            let c = if phase1 { 0.0 } else { self.lp.cost[j] };
            c - self.cols[j].iter().map(|&(i, a)| a * w[i]).sum::<f64>()
        } else {
            w[j - self.n]
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, w: &[f64], phase1: bool, bland: bool, skip: &[usize]) -> Option<(usize, f64, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            if self.pos[j] != NONE || self.lo[j] == self.hi[j] || skip.contains(&j) {
                continue;
            }
            let d = self.reduced_cost(j, w, phase1);
            let can_up = self.x[j] < self.hi[j];
            let can_down = self.x[j] > self.lo[j];
            let dir = if d < -tol && can_up {
                1.0
            } else if d > tol && can_down {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir, d));
            }
            let score = d.abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir, d));
            }
        }
        best
    }

    fn run(&mut self) -> Result<LpSolution> {
        if self.lu.is_none() && !self.refactor() {
            return Err(Error::Solver("slack basis is singular".into()));
        }
        let mut degenerate = 0usize;
        let mut rechecks = 0usize;
        // columns whose improving ray turned out to be rounding noise
        let mut skip: Vec<usize> = Vec::new();
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::ResourceLimit(format!(
                    "simplex iteration limit {} reached",
                    self.opts.max_iterations
                )));
            }
            if self.etas.len() >= REFACTOR_EVERY && !self.refactor() {
                self.reset_to_slack_basis();
            }
            let phase1 = self.infeasibility() > 0.0;
            let cb = self.phase_costs(phase1);
            let w = self.btran(&cb);
            let bland = degenerate > self.opts.bland_after;
            let Some((q, dir, _d)) = self.price(&w, phase1, bland, &skip) else {
                // verify on a fresh factorization before concluding
                if !self.refactor() {
                    self.reset_to_slack_basis();
                    continue;
                }
                let still1 = self.infeasibility() > 0.0;
                if still1 != phase1 && rechecks < 5 {
                    rechecks += 1;
                    continue;
                }
                if phase1 {
                    return Ok(self.finish(LpStatus::Infeasible, Some(w), None));
                }
                let cb = self.phase_costs(false);
                let w2 = self.btran(&cb);
                if self.price(&w2, false, false, &skip).is_some() && rechecks < 5 {
                    rechecks += 1;
                    continue;
                }
                return Ok(self.finish(LpStatus::Optimal, None, None));
            };
            self.iterations += 1;
            let alpha = self.ftran(&self.column_dense(q));
            // rate of change of each basic variable per unit step
            let delta: Vec<f64> = alpha.iter().map(|a| -dir * a).collect();
            let (leave, theta) = self.ratio_test(&delta, phase1, bland);
            let span = self.hi[q] - self.lo[q];
            let flip = span.is_finite() && leave.map_or(true, |(_, t, _)| span <= t);
            if leave.is_none() && !flip {
                if phase1 {
                    return Err(Error::Solver("phase one ray without blocking variable".into()));
                }
                if !self.etas.is_empty() {
                    // retry on a fresh factorization
                    if !self.refactor() {
                        self.reset_to_slack_basis();
                    }
                    self.iterations -= 1;
                    continue;
                }
                let mut ray = vec![0.0; self.n];
                if q < self.n {
                    ray[q] = dir;
                }
                for (p, &v) in self.basis.iter().enumerate() {
                    if v < self.n {
                        ray[v] = delta[p];
                    }
                }
                let gain = self.lp.objective_value(&ray);
                let size = ray.iter().map(|v| v.abs()).fold(1.0, f64::max)
                    * self.lp.cost.iter().map(|v| v.abs()).fold(1.0, f64::max);
                if gain > -RAY_TOL * size {
                    skip.push(q);
                    self.iterations -= 1;
                    continue;
                }
                return Ok(self.finish(LpStatus::Unbounded, None, Some(ray)));
            }
            skip.clear();
            let step = if flip { span } else { theta };
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.x[q] += dir * step;
            for (p, &v) in self.basis.iter().enumerate() {
                self.x[v] += step * delta[p];
            }
            if flip {
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                continue;
            }
            let (r, _, to_upper) = leave.expect("leaving row");
            let out = self.basis[r];
            self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
            self.basis[r] = q;
            self.pos[out] = NONE;
            self.pos[q] = r;
            self.etas.push(Eta { r, col: alpha });
        }
    }

    fn reset_to_slack_basis(&mut self) {
        for j in 0..self.n + self.m {
            self.pos[j] = NONE;
        }
        for i in 0..self.m {
            self.basis[i] = self.n + i;
            self.pos[self.n + i] = i;
        }
        for j in 0..self.n {
            let v = self.x[j];
            self.x[j] = if v >= self.hi[j] {
                nonbasic_value(self.lo[j], self.hi[j], true)
            } else {
                nonbasic_value(self.lo[j], self.hi[j], false)
            };
        }
        let ok = self.refactor();
        debug_assert!(ok);
    }

    /// Returns (position, step, leaves at upper bound).
    fn ratio_test(&self, delta: &[f64], phase1: bool, bland: bool) -> (Option<(usize, f64, bool)>, f64) {
        struct Cand {
            p: usize,
            exact: f64,
            relaxed: f64,
            to_upper: bool,
            mag: f64,
        }
        let mut cands = Vec::new();
        let pivot_tol = PIVOT_TOL * delta.iter().fold(1.0f64, |a, d| a.max(d.abs()));
        for (p, &dl) in delta.iter().enumerate() {
            if dl.abs() < pivot_tol {
                continue;
            }
            let v = self.basis[p];
            let x = self.x[v];
            let (lo, hi) = (self.lo[v], self.hi[v]);
            let tlo = self.tol(lo);
            let thi = self.tol(hi);
            if phase1 && x < lo - tlo {
                if dl > 0.0 {
                    let t = (lo - x) / dl;
                    cands.push(Cand {
                        p,
                        exact: t,
                        relaxed: t,
                        to_upper: false,
                        mag: dl.abs(),
                    });
                }
            } else if phase1 && x > hi + thi {
                if dl < 0.0 {
                    let t = (x - hi) / -dl;
                    cands.push(Cand {
                        p,
                        exact: t,
                        relaxed: t,
                        to_upper: true,
                        mag: dl.abs(),
                    });
                }
            } else if dl > 0.0 && hi.is_finite() {
                cands.push(Cand {
                    p,
                    exact: ((hi - x) / dl).max(0.0),
                    relaxed: (hi + thi - x) / dl,
                    to_upper: true,
                    mag: dl,
                });
            } else if dl < 0.0 && lo.is_finite() {
                cands.push(Cand {
                    p,
                    exact: ((x - lo) / -dl).max(0.0),
                    relaxed: (x - lo + tlo) / -dl,
                    to_upper: false,
                    mag: -dl,
                });
            }
        }
        if cands.is_empty() {
            return (None, f64::INFINITY);
        }
        let chosen = if bland {
            let tmin = cands.iter().map(|c| c.exact).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.exact <= tmin + 1e-12)
                .min_by_key(|c| self.basis[c.p])
                .expect("nonempty")
        } else {
            let tmax = cands.iter().map(|c| c.relaxed).fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.exact <= tmax)
                .max_by(|a, b| a.mag.partial_cmp(&b.mag).expect("finite"))
                .expect("nonempty")
        };
        (Some((chosen.p, chosen.exact, chosen.to_upper)), chosen.exact)
    }

    fn finish(&mut self, status: LpStatus, farkas: Option<Vec<f64>>, ray: Option<Vec<f64>>) -> LpSolution {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let cb = self.phase_costs(false);
        let w = self.btran(&cb);
        let reduced: Vec<f64> = (0..self.n)
            .map(|j| {
                if self.pos[j] != NONE {
                    0.0
                } else {
                    self.reduced_cost(j, &w, false)
                }
            })
            .collect();
        let objective = match status {
            LpStatus::Optimal => self.lp.objective_value(&x),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        let at_upper: Vec<bool> = (0..self.n + self.m)
            .map(|j| {
                self.pos[j] == NONE && self.hi[j].is_finite() && self.x[j] == self.hi[j] && self.lo[j] != self.hi[j]
            })
            .collect();
        LpSolution {
            status,
            x,
            objective,
            row_duals: w,
            reduced_costs: reduced,
            farkas,
            ray,
            iterations: self.iterations,
            warm: Some(WarmStart {
                basis: self.basis.clone(),
                at_upper,
                n: self.n,
            }),
        }
    }
}

fn nonbasic_value(lo: f64, hi: f64, prefer_upper: bool) -> f64 {
    if prefer_upper && hi.is_finite() {
        hi
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

/// Half-space `<coeffs, v> >= rhs`. `scale` is the factor multiplying the
/// radius in the Chebyshev problem; `None` means the Euclidean norm of
/// `coeffs`.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChebyshevCenter {
    pub center: Vec<f64>,
    pub radius: f64,
    pub iterations: usize,
}

/// Centre and radius of the largest ball inside
/// `{v : lower <= v <= upper, <a_i, v> >= b_i}`. Finite bounds enter as
/// rows of unit scale. `Ok(None)` when the set is empty.
pub fn chebyshev_center(
    rows: &[HalfSpace],
    lower: &[f64],
    upper: &[f64],
    opts: &LpOptions,
) -> Result<Option<ChebyshevCenter>> {
    let n = lower.len();
    if upper.len() != n {
        return invalid("bound vectors differ in length");
    }
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    }
    let rho = lp.add_var(-1.0, 0.0, f64::INFINITY);
    for j in 0..n {
        if lower[j].is_finite() {
            lp.add_row(vec![(j, 1.0), (rho, -1.0)], Relation::Ge, lower[j]);
        }
        if upper[j].is_finite() {
            lp.add_row(vec![(j, -1.0), (rho, -1.0)], Relation::Ge, -upper[j]);
        }
    }
    for (i, h) in rows.iter().enumerate() {
        if h.coeffs.len() != n {
            return invalid(format!("half-space {i} has wrong dimension"));
        }
        let scale = h
            .scale
            .unwrap_or_else(|| h.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut c: Vec<(usize, f64)> = h
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v))
            .collect();
        if scale > 0.0 {
            c.push((rho, -scale));
        }
        lp.add_row(c, Relation::Ge, h.rhs);
    }
    let sol = solve(&lp, opts)?;
    match sol.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::InvalidArgument(
            "polytope is unbounded; Chebyshev radius is infinite".into(),
        )),
        LpStatus::Optimal => Ok(Some(ChebyshevCenter {
            center: sol.x[..n].to_vec(),
            radius: sol.x[rho],
            iterations: sol.iterations,
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LpOptions {
        LpOptions::default()
    }

    #[test]
    fn small_textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-3.0, 0.0, f64::INFINITY);
        let y = lp.add_var(-5.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Relation::Le, 4.0);
        lp.add_row(vec![(y, 2.0)], Relation::Le, 12.0);
        lp.add_row(vec![(x, 3.0), (y, 2.0)], Relation::Le, 18.0);
        let s = solve(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[x] - 2.0).abs() < 1e-9 && (s.x[y] - 6.0).abs() < 1e-9);
        // duals of a min problem on <= rows are nonpositive
        assert!(s.row_duals.iter().all(|&w| w <= 1e-12));
        let dual_obj: f64 = s.row_duals.iter().zip([4.0, 12.0, 18.0]).map(|(w, b)| w * b).sum();
        assert!((dual_obj - s.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0)], Relation::Ge, 3.0);
        lp.add_row(vec![(x, 1.0)], Relation::Le, 2.0);
        let s = solve(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.farkas.is_some());

        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        let s = solve(&lp, &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
        let r = s.ray.unwrap();
        assert!(r[x] > 0.0 && r[x] - r[y] <= 1e-12);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x - 3| written with free x and t >= x - 3, t >= 3 - x
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        let t = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![(t, 1.0), (x, -1.0)], Relation::Ge, -3.0);
        lp.add_row(vec![(t, 1.0), (x, 1.0)], Relation::Ge, 3.0);
        let s = solve(&lp, &opts()).unwrap();
        assert!(s.objective.abs() < 1e-9);
        assert!((s.x[x] - 3.0).abs() < 1e-9);

        let mut lp = LinearProgram::new();
        let a = lp.add_var(1.0, 0.0, 10.0);
        let b = lp.add_var(2.0, 0.0, 10.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Relation::Eq, 12.0);
        let s = solve(&lp, &opts()).unwrap();
        assert!((s.objective - 14.0).abs() < 1e-9);
    }

    #[test]
    fn conditioning_rejected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        let y = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(vec![(x, 1e13), (y, 1.0)], Relation::Ge, 0.0);
        assert!(matches!(solve(&lp, &opts()), Err(Error::Conditioning(_))));
    }

    #[test]
    fn chebyshev_of_square() {
        let c = chebyshev_center(&[], &[0.0, 0.0], &[2.0, 4.0], &opts())
            .unwrap()
            .unwrap();
        assert!((c.radius - 1.0).abs() < 1e-9);
        assert!((c.center[0] - 1.0).abs() < 1e-9);
        let h = HalfSpace {
            coeffs: vec![-1.0, 0.0],
            rhs: 1.0,
            scale: None,
        };
        assert!(chebyshev_center(&[h], &[0.0, 0.0], &[2.0, 4.0], &opts())
            .unwrap()
            .is_none());
    }

    #[test]
    fn warm_start_after_adding_rows() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, 10.0);
        let y = lp.add_var(-1.0, 0.0, 10.0);
        lp.add_row(vec![(x, 1.0), (y, 2.0)], Relation::Le, 8.0);
        let s = solve(&lp, &opts()).unwrap();
        lp.add_row(vec![(x, 2.0), (y, 1.0)], Relation::Le, 8.0);
        let cold = solve(&lp, &opts()).unwrap();
        let warm = solve_warm(&lp, &opts(), s.warm.as_ref()).unwrap();
        assert!((cold.objective - warm.objective).abs() < 1e-9);
        assert!((cold.objective + 16.0 / 3.0).abs() < 1e-9);
    }
}
