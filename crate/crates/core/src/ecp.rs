//! Exchange-type cutting plane method (Kelley style).
//!
//! Each round solves the LP relaxation on the points found so far, then a
//! MILP finds the most violated point of the resulting portfolio. The
//! relaxation value is a lower bound; shifting the cash position by the
//! violation turns the LP portfolio into a superhedge and gives the upper
//! bound.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::bounds::{
    exact_milp, lower_phi, search_box, snap, Algorithm, BoundsResult, BoundsStatus, TracePoint, ARBITRAGE_TOL,
};
use crate::cpwa::CpwaFunction;
use crate::encoding::{minimize_over_box, EncodingOptions};
use crate::error::{Error, Result};
use crate::instance::{Domain, MarketInstance};
use crate::lp::{solve, LinearProgram, LpOptions, LpStatus, Relation};
use crate::milp::{MilpOptions, MilpStatus};
use crate::radial::{radial_constraints, RadialOptions};
use crate::slack::slack_template;

#[derive(Debug, Clone)]
pub struct EcpOptions {
    pub epsilon: f64,
    pub tau: f64,
    pub delta: f64,
    /// Truncation level for `R_+^d`; ten times the largest strike when unset.
    pub xbar: Option<f64>,
    /// Known lower bound on the answer; derived from the payoff when unset.
    pub phi_lower: Option<f64>,
    pub initial_points: Vec<Vec<f64>>,
    pub max_iterations: usize,
    /// Grid to which new points are rounded before becoming cuts.
    pub round_step: f64,
    /// Wall-clock budget; exceeding it is a resource-limit error.
    pub time_limit: Option<Duration>,
    pub milp: MilpOptions,
    pub encoding: EncodingOptions,
    pub radial: RadialOptions,
    pub lp: LpOptions,
}

impl Default for EcpOptions {
    fn default() -> Self {
        EcpOptions {
            epsilon: 1e-3,
            tau: 0.1,
            delta: 0.7,
            xbar: None,
            phi_lower: None,
            initial_points: Vec::new(),
            max_iterations: 1000,
            round_step: 1e-4,
            time_limit: None,
            milp: exact_milp(),
            encoding: EncodingOptions::default(),
            radial: RadialOptions::default(),
            lp: LpOptions::default(),
        }
    }
}

pub(crate) struct CutSet {
    rounded: HashSet<Vec<i64>>,
    exact: HashSet<Vec<u64>>,
    pub points: Vec<Vec<f64>>,
}

impl CutSet {
    pub(crate) fn new() -> Self {
        CutSet {
            rounded: HashSet::new(),
            exact: HashSet::new(),
            points: Vec::new(),
        }
    }

    pub(crate) fn round(x: &[f64], step: f64, upper: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(upper)
            .map(|(v, u)| ((v / step).round() * step).clamp(0.0, *u))
            .collect()
    }

    /// Adds the point unless an equal one is present.
    pub(crate) fn insert(&mut self, x: Vec<f64>, step: f64) -> bool {
        let rk: Vec<i64> = x.iter().map(|v| (v / step).round() as i64).collect();
        let on_grid = x
            .iter()
            .zip(&rk)
            .all(|(v, k)| (*k as f64 * step - v).abs() <= 1e-12 * v.abs().max(1.0));
        let fresh = if on_grid {
            self.rounded.insert(rk)
        } else {
            self.exact.insert(x.iter().map(|v| v.to_bits()).collect())
        };
        if fresh {
            self.points.push(x);
        }
        fresh
    }
}

/// Row `c + <g(x), y+ - y-> >= f(x)`.
pub(crate) fn cut_row(inst: &MarketInstance, f: &CpwaFunction, x: &[f64], m: usize) -> (Vec<(usize, f64)>, f64) {
    let mut c = vec![(0usize, 1.0)];
    for (j, g) in inst.g.iter().enumerate() {
        let v = snap(g.eval(x));
        if v != 0.0 {
            c.push((1 + j, v));
            c.push((1 + m + j, -v));
        }
    }
    (c, f.eval(x))
}

pub fn ecp(inst: &MarketInstance, f: &CpwaFunction, opts: &EcpOptions) -> Result<BoundsResult> {
    inst.validate()?;
    if f.d != inst.d {
        return Err(Error::InvalidArgument(format!(
            "target has dimension {}, market has {}",
            f.d, inst.d
        )));
    }
    let m = inst.m();
    let deadline = opts.time_limit.map(|t| Instant::now() + t);
    let milp = MilpOptions {
        deadline: deadline.or(opts.milp.deadline),
        ..opts.milp.clone()
    };
    let (upper, truncated) = search_box(inst, f, opts.xbar);
    let phi_floor = match opts.phi_lower {
        Some(v) => v,
        None => lower_phi(inst, f, None, opts.xbar)?,
    };
    let template = slack_template(&inst.g, f)?;

    let mut lp = LinearProgram::new();
    lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..m {
        lp.add_var(inst.ask[j], 0.0, f64::INFINITY);
    }
    for j in 0..m {
        lp.add_var(-inst.bid[j], 0.0, f64::INFINITY);
    }
    let mut floor = vec![(0usize, 1.0)];
    for j in 0..m {
        floor.push((1 + j, inst.ask[j]));
        floor.push((1 + m + j, -inst.bid[j]));
    }
    lp.add_row(floor, Relation::Ge, phi_floor - opts.tau);

    let mut caveats = Vec::new();
    if let Domain::PositiveOrthant = inst.domain {
        let sys = radial_constraints(&template, &opts.radial)?;
        let eta0 = lp.num_vars();
        for _ in 0..sys.num_eta {
            lp.add_var(0.0, 0.0, f64::INFINITY);
        }
        for r in &sys.rows {
            let mut c = Vec::new();
            for (j, &a) in r.y_coeffs.iter().enumerate() {
                if a != 0.0 {
                    c.push((1 + j, a));
                    c.push((1 + m + j, -a));
                }
            }
            for &(i, v) in &r.eta {
                c.push((eta0 + i, -v));
            }
            lp.add_row(c, Relation::Ge, r.rhs);
        }
        caveats.push(format!(
            "separation searched the truncated box [0, {}]^{}",
            upper[0], inst.d
        ));
    }

    let mut cuts = CutSet::new();
    for x in &opts.initial_points {
        if x.len() != inst.d {
            return Err(Error::InvalidArgument("initial point has wrong dimension".into()));
        }
        let xr = CutSet::round(x, opts.round_step, &upper);
        if cuts.insert(xr.clone(), opts.round_step) {
            let (c, rhs) = cut_row(inst, f, &xr, m);
            lp.add_row(c, Relation::Ge, rhs);
        }
    }

    let mut trace = Vec::new();
    let mut lp_count = 0;
    let mut milp_count = 0;
    for it in 0..opts.max_iterations {
        let sol = solve(&lp, &opts.lp)?;
        lp_count += 1;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver(format!(
                "relaxation LP ended with status {:?} at iteration {it}",
                sol.status
            )));
        }
        let lb = sol.objective;
        let c = sol.x[0];
        let y: Vec<f64> = (0..m).map(|j| sol.x[1 + j] - sol.x[1 + m + j]).collect();
        let s = template.instantiate(&y);
        let bm = minimize_over_box(&s, c, &upper, &milp, &opts.encoding)?;
        milp_count += 1;
        trace.push(TracePoint {
            lower: lb,
            upper: lb - bm.lower,
        });
        if bm.lower >= -opts.epsilon {
            let ub = lb - bm.lower;
            let status = if ub < phi_floor - ARBITRAGE_TOL * phi_floor.abs().max(1.0) {
                BoundsStatus::Arbitrage
            } else {
                BoundsStatus::Converged
            };
            return Ok(BoundsResult {
                algorithm: Algorithm::Ecp,
                status,
                phi_lower: lb,
                phi_upper: ub,
                c_star: c - bm.lower,
                y_star: y,
                lp_count,
                milp_count,
                iterations: it + 1,
                trace,
                support: cuts.points,
                support_interior: true,
                heuristic_assisted: false,
                truncation: truncated.then(|| upper.clone()),
                caveats,
                phi_floor,
            });
        }
        if milp.past_deadline() {
            let ub = trace.iter().map(|t: &TracePoint| t.upper).fold(f64::INFINITY, f64::min);
            return Err(Error::ResourceLimit(format!(
                "time limit reached after {} iterations; bounds so far [{lb:.6}, {ub:.6}]",
                it + 1
            )));
        }
        if bm.status == MilpStatus::NodeLimit && bm.upper >= -opts.epsilon {
            return Err(Error::ResourceLimit(
                "separation MILP hit its node limit before certifying a violated point".into(),
            ));
        }
        let threshold = opts.delta * bm.upper;
        let mut added = 0;
        for (x, val) in &bm.pool {
            if *val > threshold.min(-1e-12) {
                continue;
            }
            let mut xr = CutSet::round(x, opts.round_step, &upper);
            // rounding must not turn a violated point into a satisfied one
            if template.eval(&y, &xr) + c > 0.5 * val {
                xr = x.clone();
            }
            if cuts.insert(xr.clone(), opts.round_step) {
                let (row, rhs) = cut_row(inst, f, &xr, m);
                lp.add_row(row, Relation::Ge, rhs);
                added += 1;
            }
        }
        if added == 0 {
            // fall back to the exact minimiser
            let x = bm.argmin.clone();
            if cuts.insert(x.clone(), opts.round_step) {
                let (row, rhs) = cut_row(inst, f, &x, m);
                lp.add_row(row, Relation::Ge, rhs);
            } else {
                return Err(Error::Solver(
                    "separation returned a point that is already a cut".into(),
                ));
            }
        }
    }
    Err(Error::ResourceLimit(format!(
        "no convergence within {} iterations",
        opts.max_iterations
    )))
}
