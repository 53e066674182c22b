//! Linear constraints on `y` equivalent to the radial slack being
//! nonnegative on `R_+^d`.
//!
//! Each choice of one piece per term fixes a cone on which the radial slack
//! is linear. Cones with empty interior are skipped; for the others the
//! gradient must lie in the dual cone of the difference vectors, which is
//! expressed with auxiliary nonnegative multipliers.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpOptions, LpStatus, Relation};
use crate::slack::SlackTemplate;

/// `<y_coeffs, y> - sum_v eta_v * coeff_v >= rhs`.
#[derive(Debug, Clone)]
pub struct RadialRow {
    pub y_coeffs: Vec<f64>,
    pub eta: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct RadialSystem {
    pub m: usize,
    pub num_eta: usize,
    pub rows: Vec<RadialRow>,
    pub tuples_checked: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone)]
pub struct RadialOptions {
    pub max_rows: usize,
    pub max_tuples: usize,
    pub lp: LpOptions,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            max_rows: 100_000,
            max_tuples: 2_000_000,
            lp: LpOptions::default(),
        }
    }
}

fn dominated(a: &[f64], b: &[f64]) -> bool {
    a != b && a.iter().zip(b).all(|(x, y)| x <= y)
}

/// True when some convex combination of `vs` is componentwise `<= 0`,
/// i.e. the cone `{z >= 0 : <v, z> > 0 for all v}` has empty interior.
fn empty_interior(vs: &[Vec<f64>], d: usize, lp_opts: &LpOptions) -> Result<bool> {
    if vs.is_empty() {
        return Ok(false);
    }
    let mut lp = LinearProgram::new();
    for _ in vs {
        lp.add_var(0.0, 0.0, f64::INFINITY);
    }
    lp.add_row((0..vs.len()).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for l in 0..d {
        let c: Vec<(usize, f64)> = vs
            .iter()
            .enumerate()
            .filter(|(_, v)| v[l] != 0.0)
            .map(|(i, v)| (i, v[l]))
            .collect();
        lp.add_row(c, Relation::Le, 0.0);
    }
    Ok(solve(&lp, lp_opts)?.status == LpStatus::Optimal)
}

fn key_of(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

pub fn radial_constraints(template: &SlackTemplate, opts: &RadialOptions) -> Result<RadialSystem> {
    let rt = template.radial();
    let d = rt.d;
    let m = rt.m;
    // pieces that can be the strict maximum on an open cone
    let candidates: Vec<Vec<usize>> = rt
        .terms
        .iter()
        .map(|t| {
            (0..t.pieces.len())
                .filter(|&i| !t.pieces.iter().any(|q| dominated(&t.pieces[i].a, &q.a)))
                .collect()
        })
        .collect();
    let mut total: f64 = 1.0;
    for c in &candidates {
        total *= c.len() as f64;
    }
    if total > opts.max_tuples as f64 {
        return Err(Error::ResourceLimit(format!(
            "radial enumeration needs {total:.3e} piece tuples (limit {})",
            opts.max_tuples
        )));
    }
    let mut sys = RadialSystem {
        m,
        num_eta: 0,
        rows: Vec::new(),
        tuples_checked: 0,
        blocks: 0,
    };
    if candidates.iter().any(|c| c.is_empty()) {
        return Ok(sys);
    }
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut idx = vec![0usize; candidates.len()];
    loop {
        sys.tuples_checked += 1;
        let choice: Vec<usize> = idx.iter().zip(&candidates).map(|(&i, c)| c[i]).collect();
        let mut vs: Vec<Vec<f64>> = Vec::new();
        for (k, t) in rt.terms.iter().enumerate() {
            let top = &t.pieces[choice[k]].a;
            for (i, p) in t.pieces.iter().enumerate() {
                if i == choice[k] {
                    continue;
                }
                let v: Vec<f64> = top.iter().zip(&p.a).map(|(a, b)| a - b).collect();
                if v.iter().any(|x| *x != 0.0) && !vs.contains(&v) {
                    vs.push(v);
                }
            }
        }
        vs.sort_by(|a, b| key_of(a).cmp(&key_of(b)));
        // gradient of the radial slack on this cone, affine in y
        let mut rows_y = vec![vec![0.0; m]; d];
        let mut rhs = vec![0.0; d];
        for (k, t) in rt.terms.iter().enumerate() {
            let a = &t.pieces[choice[k]].a;
            for l in 0..d {
                if a[l] == 0.0 {
                    continue;
                }
                for &(j, w) in &t.weights {
                    rows_y[l][j] += w * a[l];
                }
                rhs[l] -= t.offset * a[l];
            }
        }
        let mut key: Vec<u64> = Vec::new();
        for l in 0..d {
            key.extend(key_of(&rows_y[l]));
            key.push((rhs[l] + 0.0).to_bits());
        }
        key.push(u64::MAX);
        for v in &vs {
            key.extend(key_of(v));
        }
        if !seen.contains(&key) {
            seen.insert(key);
            if !empty_interior(&vs, d, &opts.lp)? {
                if sys.rows.len() + d > opts.max_rows {
                    return Err(Error::ResourceLimit(format!(
                        "radial constraint rows exceed {}",
                        opts.max_rows
                    )));
                }
                let base = sys.num_eta;
                sys.num_eta += vs.len();
                sys.blocks += 1;
                for l in 0..d {
                    let eta: Vec<(usize, f64)> = vs
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v[l] != 0.0)
                        .map(|(i, v)| (base + i, v[l]))
                        .collect();
                    let row = RadialRow {
                        y_coeffs: rows_y[l].clone(),
                        eta,
                        rhs: rhs[l],
                    };
                    if row.eta.is_empty() && row.y_coeffs.iter().all(|c| *c == 0.0) {
                        if row.rhs > 0.0 {
                            // 0 >= positive: no y works
                            sys.rows.push(row);
                        }
                        continue;
                    }
                    sys.rows.push(row);
                }
            }
        }
        // next tuple
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(sys);
            }
            idx[k] += 1;
            if idx[k] < candidates[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Whether some multipliers make every row hold at this `y`.
pub fn radial_feasible(sys: &RadialSystem, y: &[f64], lp_opts: &LpOptions) -> Result<bool> {
    let mut lp = LinearProgram::new();
    for _ in 0..sys.num_eta {
        lp.add_var(0.0, 0.0, f64::INFINITY);
    }
    for r in &sys.rows {
        let fixed: f64 = r.y_coeffs.iter().zip(y).map(|(a, b)| a * b).sum();
        if r.eta.is_empty() {
            if fixed < r.rhs - 1e-9 * r.rhs.abs().max(1.0) {
                return Ok(false);
            }
            continue;
        }
        let c: Vec<(usize, f64)> = r.eta.iter().map(|&(i, v)| (i, -v)).collect();
        lp.add_row(c, Relation::Ge, r.rhs - fixed);
    }
    Ok(solve(&lp, lp_opts)?.status == LpStatus::Optimal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpwa::{asset, vanilla_call};
    use crate::slack::slack_template;

    #[test]
    fn call_against_forward_needs_unit_position() {
        // y x - (x - 1)^+ >= 0 asymptotically iff y >= 1
        let g = vec![asset(1, 0).unwrap()];
        let f = vanilla_call(1, 0, 1.0).unwrap();
        let t = slack_template(&g, &f).unwrap();
        let sys = radial_constraints(&t, &RadialOptions::default()).unwrap();
        let o = LpOptions::default();
        assert!(radial_feasible(&sys, &[1.0], &o).unwrap());
        assert!(radial_feasible(&sys, &[1.5], &o).unwrap());
        assert!(!radial_feasible(&sys, &[0.99], &o).unwrap());
    }

    #[test]
    fn dominated_pieces_are_not_enumerated() {
        let g: Vec<_> = (0..12).map(|i| vanilla_call(1, 0, i as f64).unwrap()).collect();
        let f = vanilla_call(1, 0, 3.5).unwrap();
        let t = slack_template(&g, &f).unwrap();
        let sys = radial_constraints(&t, &RadialOptions::default()).unwrap();
        assert_eq!(sys.tuples_checked, 1);
    }
}
