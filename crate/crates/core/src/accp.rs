//! Analytic-centre style cutting plane method with cut removal.
//!
//! The search region is a box in `(c, y+, y-)` intersected with an
//! objective slab `[lower, phi]` and the feasibility cuts. Its Chebyshev
//! centre is queried against an inexact MILP oracle: a feasible centre
//! tightens the upper bound, an empty region raises the lower bound, and
//! cuts that stay far from a shrinking centre are dropped.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::bounds::{lower_phi, snap, Algorithm, BoundsResult, BoundsStatus, TracePoint, ARBITRAGE_TOL};
use crate::cpwa::CpwaFunction;
use crate::encoding::{minimize_over_box, EncodingOptions};
use crate::error::{invalid, Error, Result};
use crate::instance::MarketInstance;
use crate::lp::{chebyshev_center, solve, HalfSpace, LinearProgram, LpOptions, LpStatus, Relation};
use crate::milp::{MilpOptions, MilpStatus};
use crate::slack::slack_template;

#[derive(Debug, Clone)]
pub struct AccpOptions {
    pub epsilon: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Relative MILP gap accepted by the oracle.
    pub zeta: f64,
    pub delta: f64,
    pub c_bar: f64,
    /// Position bound per instrument; `100` each when unset.
    pub y_bar: Option<Vec<f64>>,
    pub phi_lower: Option<f64>,
    /// A superhedge `(c, y)` to start from; cash at `max f` when unset.
    pub initial: Option<(f64, Vec<f64>)>,
    pub initial_points: Vec<Vec<f64>>,
    pub max_iterations: usize,
    pub node_limit: usize,
    /// Wall-clock budget; exceeding it is a resource-limit error.
    pub time_limit: Option<Duration>,
    pub encoding: EncodingOptions,
    pub lp: LpOptions,
}

impl Default for AccpOptions {
    fn default() -> Self {
        AccpOptions {
            epsilon: 1e-3,
            tau: 1.0,
            gamma: 0.1,
            zeta: 0.8,
            delta: 0.7,
            c_bar: 100.0,
            y_bar: None,
            phi_lower: None,
            initial: None,
            initial_points: Vec::new(),
            max_iterations: 5000,
            node_limit: 200_000,
            time_limit: None,
            encoding: EncodingOptions::default(),
            lp: LpOptions::default(),
        }
    }
}

struct Point {
    x: Vec<f64>,
    gx: Vec<f64>,
    fx: f64,
    norm: f64,
    active: bool,
    removable: bool,
    generation: usize,
}

pub fn accp(inst: &MarketInstance, f: &CpwaFunction, opts: &AccpOptions) -> Result<BoundsResult> {
    inst.validate()?;
    if f.d != inst.d {
        return invalid(format!("target has dimension {}, market has {}", f.d, inst.d));
    }
    let Some(upper) = inst.box_upper().map(|u| u.to_vec()) else {
        return invalid("the ACCP method needs a bounded box domain");
    };
    if !(opts.tau > opts.epsilon) {
        return invalid("tau must exceed epsilon");
    }
    let m = inst.m();
    let c_bar = opts.c_bar;
    let y_bar = opts.y_bar.clone().unwrap_or_else(|| vec![100.0; m]);
    if y_bar.len() != m {
        return invalid("y_bar length differs from the instrument count");
    }
    let phi_floor = match opts.phi_lower {
        Some(v) => v,
        None => lower_phi(inst, f, None, None)?,
    };
    let template = slack_template(&inst.g, f)?;
    let deadline = opts.time_limit.map(|t| Instant::now() + t);
    let exact = MilpOptions {
        gap: 1e-9,
        node_limit: opts.node_limit,
        deadline,
        ..MilpOptions::default()
    };
    let oracle = MilpOptions {
        gap: opts.zeta,
        node_limit: opts.node_limit,
        deadline,
        pool_factor: opts.delta,
        ..MilpOptions::default()
    };

    let (mut c_star, mut y_star) = match &opts.initial {
        Some((c, y)) => {
            if y.len() != m {
                return invalid("initial portfolio has the wrong length");
            }
            let s = minimize_over_box(&template.instantiate(y), *c, &upper, &exact, &opts.encoding)?;
            if s.lower < -1e-9 {
                return invalid(format!(
                    "initial portfolio is not a superhedge (shortfall {:.3e})",
                    -s.lower
                ));
            }
            (*c, y.clone())
        }
        None => {
            let s = minimize_over_box(&f.neg(), 0.0, &upper, &exact, &opts.encoding)?;
            (-s.lower, vec![0.0; m])
        }
    };
    if c_star.abs() > c_bar - 1.0 || y_star.iter().zip(&y_bar).any(|(y, b)| y.abs() > b - 1.0) {
        return invalid("initial portfolio must lie at least one unit inside the position box");
    }

    let n = 1 + 2 * m;
    let mut lower = vec![0.0; n];
    let mut upper_v = vec![0.0; n];
    lower[0] = -c_bar;
    upper_v[0] = c_bar;
    for j in 0..m {
        upper_v[1 + j] = y_bar[j];
        upper_v[1 + m + j] = y_bar[j];
    }
    let mut obj = vec![0.0; n];
    obj[0] = 1.0;
    for j in 0..m {
        obj[1 + j] = inst.ask[j];
        obj[1 + m + j] = -inst.bid[j];
    }

    let mut points: Vec<Point> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut generations: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), f64::INFINITY)];
    let mut add_point = |points: &mut Vec<Point>, x: Vec<f64>, gen: usize, removable: bool| -> usize {
        let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        if let Some(&i) = index.get(&key) {
            let p = &mut points[i];
            p.active = true;
            p.removable = removable;
            p.generation = gen;
            return i;
        }
        let gx: Vec<f64> = inst.g.iter().map(|g| snap(g.eval(&x))).collect();
        let norm = (1.0 + gx.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let fx = f.eval(&x);
        points.push(Point {
            x,
            gx,
            fx,
            norm,
            active: true,
            removable,
            generation: gen,
        });
        index.insert(key, points.len() - 1);
        points.len() - 1
    };
    for x in &opts.initial_points {
        if x.len() != inst.d {
            return invalid("initial point has wrong dimension");
        }
        let i = add_point(&mut points, x.clone(), 0, true);
        generations[0].0.push(i);
    }

    let mut lb = phi_floor - opts.tau;
    let mut ub = c_star + inst.price(&y_star);
    let mut flag = false;
    let mut trace = vec![TracePoint { lower: lb, upper: ub }];
    let mut lp_count = 0;
    let mut milp_count = 0;
    let mut support: Vec<Vec<f64>> = Vec::new();
    let mut support_interior = false;
    let mut heuristic_assisted = false;
    let mut r = 0usize;

    let cut = |p: &Point| -> (Vec<f64>, f64) {
        let mut a = vec![0.0; n];
        a[0] = 1.0;
        for j in 0..m {
            a[1 + j] = p.gx[j];
            a[1 + m + j] = -p.gx[j];
        }
        (a, p.fx)
    };

    while ub - lb > opts.epsilon {
        r += 1;
        if oracle.past_deadline() {
            return Err(Error::ResourceLimit(format!(
                "time limit reached after {} iterations; bounds so far [{lb:.6}, {ub:.6}]",
                r - 1
            )));
        }
        if r > opts.max_iterations {
            return Err(Error::ResourceLimit(format!(
                "no convergence within {} iterations (gap {:.3e})",
                opts.max_iterations,
                ub - lb
            )));
        }
        let mut phi = 0.5 * (lb + ub);
        if flag {
            phi = 0.5 * (lb + phi);
        }
        let active: Vec<usize> = (0..points.len()).filter(|&i| points[i].active).collect();
        let mut rows: Vec<HalfSpace> = Vec::with_capacity(active.len() + 2);
        rows.push(HalfSpace {
            coeffs: obj.clone(),
            rhs: lb,
            scale: None,
        });
        rows.push(HalfSpace {
            coeffs: obj.iter().map(|v| -v).collect(),
            rhs: -phi,
            scale: None,
        });
        for &i in &active {
            let (a, b) = cut(&points[i]);
            rows.push(HalfSpace {
                coeffs: a,
                rhs: b,
                scale: Some(points[i].norm),
            });
        }
        let center = chebyshev_center(&rows, &lower, &upper_v, &opts.lp)?;
        lp_count += 1;
        let Some(center) = center else {
            // region empty: the LP over the cuts alone gives a new lower bound
            let mut lp = LinearProgram::new();
            for k in 0..n {
                lp.add_var(obj[k], lower[k], upper_v[k]);
            }
            for &i in &active {
                let (a, b) = cut(&points[i]);
                let c: Vec<(usize, f64)> = a
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(k, v)| (k, *v))
                    .collect();
                lp.add_row(c, Relation::Ge, b);
            }
            let sol = solve(&lp, &opts.lp)?;
            lp_count += 1;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Solver(format!("lower-bound LP status {:?}", sol.status)));
            }
            lb = sol.objective;
            let tol = 1e-7;
            support_interior = sol.x[0].abs() < c_bar - tol
                && (0..m).all(|j| sol.x[1 + j] < y_bar[j] - tol && sol.x[1 + m + j] < y_bar[j] - tol);
            support = active.iter().map(|&i| points[i].x.clone()).collect();
            for (l, (gen, _)) in generations.iter().enumerate() {
                if l >= 1 {
                    for &i in gen {
                        points[i].removable = true;
                    }
                }
            }
            generations.push((Vec::new(), -1.0));
            trace.push(TracePoint { lower: lb, upper: ub });
            continue;
        };
        let v = &center.center;
        let rho = center.radius;
        let c = v[0];
        let y: Vec<f64> = (0..m).map(|j| v[1 + j] - v[1 + m + j]).collect();
        let bm = minimize_over_box(&template.instantiate(&y), c, &upper, &oracle, &opts.encoding)?;
        milp_count += 1;
        let s_up = bm.upper;
        let mut s_low = bm.lower;
        if bm.status == MilpStatus::NodeLimit && s_up >= 0.0 {
            // trust the incumbent so the objective cut can fire
            s_low = s_low.max(s_up);
            heuristic_assisted = true;
        }
        let gen = generations.len();
        let mut members = Vec::new();
        for (x, val) in &bm.pool {
            if *val <= opts.delta * s_up && *val < 0.0 {
                members.push(add_point(&mut points, x.clone(), gen, true));
            }
        }
        // a point moved from an older generation leaves that list
        for (list, _) in generations.iter_mut() {
            list.retain(|i| points[*i].generation != gen);
        }
        generations.push((members.clone(), rho));

        let candidate = c + inst.price(&y) - s_low;
        // a feasible center always improves by at least half the gap; taking
        // it avoids cycling once the gap is between eps and 4/3 eps
        if candidate < ub - opts.epsilon || (s_low >= 0.0 && candidate < ub) {
            ub = candidate;
            c_star = c - s_low;
            y_star = y.clone();
            if ub < phi_floor - ARBITRAGE_TOL * phi_floor.abs().max(1.0) {
                // below the a priori floor: the unbounded case, no need to go on
                trace.push(TracePoint { lower: lb, upper: ub });
                break;
            }
            if s_low >= 0.0 {
                for (list, _) in &generations {
                    for &i in list {
                        points[i].removable = true;
                    }
                }
                trace.push(TracePoint { lower: lb, upper: ub });
                continue;
            }
        }
        trace.push(TracePoint { lower: lb, upper: ub });
        if flag {
            flag = false;
            for &i in &members {
                points[i].removable = false;
            }
            continue;
        }
        flag = true;
        for (list, rho_l) in &generations {
            if !(rho < opts.gamma * rho_l) {
                continue;
            }
            for &i in list {
                let p = &mut points[i];
                if !(p.active && p.removable) {
                    continue;
                }
                let lhs = c + p.gx.iter().zip(&y).map(|(g, y)| g * y).sum::<f64>() - p.norm * rho;
                if lhs > p.fx {
                    p.active = false;
                }
            }
        }
    }

    let status = if ub < phi_floor - ARBITRAGE_TOL * phi_floor.abs().max(1.0) {
        BoundsStatus::Arbitrage
    } else {
        BoundsStatus::Converged
    };
    Ok(BoundsResult {
        algorithm: Algorithm::Accp,
        status,
        phi_lower: lb,
        phi_upper: ub,
        c_star,
        y_star,
        lp_count,
        milp_count,
        iterations: r,
        trace,
        support,
        support_interior,
        heuristic_assisted,
        truncation: None,
        caveats: Vec::new(),
        phi_floor,
    })
}
