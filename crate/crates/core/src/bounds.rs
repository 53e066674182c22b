//! Result types and helpers shared by the two cutting-plane algorithms.

use serde::{Deserialize, Serialize};

use crate::cpwa::CpwaFunction;
use crate::encoding::{minimize_over_box, EncodingOptions};
use crate::error::{invalid, Error, Result};
use crate::instance::{Domain, MarketInstance};
use crate::lp::{solve, LinearProgram, LpOptions, LpStatus, Relation};
use crate::milp::MilpOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ecp,
    Accp,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ecp => "ecp",
            Algorithm::Accp => "accp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsStatus {
    Converged,
    /// The upper bound fell below the known lower bound, so the market
    /// admits arbitrage and the superhedging problem is unbounded.
    Arbitrage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsResult {
    pub algorithm: Algorithm,
    pub status: BoundsStatus,
    pub phi_lower: f64,
    pub phi_upper: f64,
    /// Cash position of the returned superhedge.
    pub c_star: f64,
    /// Instrument positions of the returned superhedge.
    pub y_star: Vec<f64>,
    pub lp_count: usize,
    pub milp_count: usize,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    /// Points whose cuts define the final lower-bound LP.
    pub support: Vec<Vec<f64>>,
    /// Whether the lower-bound LP optimiser sat strictly inside the
    /// position box (always true without a box).
    pub support_interior: bool,
    /// The node-limit fallback raised a MILP bound to its incumbent.
    pub heuristic_assisted: bool,
    /// Truncation box used for the separation MILP on `R_+^d`.
    pub truncation: Option<Vec<f64>>,
    pub caveats: Vec<String>,
    /// The a priori lower bound the run started from.
    pub phi_floor: f64,
}

impl BoundsResult {
    pub fn gap(&self) -> f64 {
        self.phi_upper - self.phi_lower
    }
}

/// The box the separation MILP searches.
pub fn search_box(inst: &MarketInstance, f: &CpwaFunction, xbar: Option<f64>) -> (Vec<f64>, bool) {
    match &inst.domain {
        Domain::Box { upper } => (upper.clone(), false),
        Domain::PositiveOrthant => {
            let x = xbar.unwrap_or_else(|| 10.0 * inst.max_abs_offset().max(f.max_abs_offset()).max(1.0));
            (vec![x; inst.d], true)
        }
    }
}

pub(crate) fn exact_milp() -> MilpOptions {
    MilpOptions {
        gap: 1e-9,
        ..MilpOptions::default()
    }
}

/// Lower bound on `min_x (c + <y, g(x)> + sign * f(x))` over `[0, upper]`.
fn portfolio_min(inst: &MarketInstance, f: &CpwaFunction, c: f64, y: &[f64], upper: &[f64]) -> Result<f64> {
    let mut h = CpwaFunction::constant(inst.d, c);
    for (g, &w) in inst.g.iter().zip(y) {
        if w != 0.0 {
            h = h.add(&g.scale(w))?;
        }
    }
    h = h.add(f)?;
    // pruning only ever lowers the bound, so a tiny tolerance keeps it valid
    let r = minimize_over_box(&h, 0.0, upper, &exact_milp(), &EncodingOptions::with_prune_tol(1e-12))?;
    Ok(r.lower)
}

/// `phi_lower = -c0 - pi(y0)` for a portfolio with `c0 + <y0, g> + f >= 0`.
///
/// Without a portfolio: `0` when `f >= 0`, otherwise (box domains only) the
/// cash position `-min f`.
pub fn lower_phi(
    inst: &MarketInstance,
    f: &CpwaFunction,
    portfolio: Option<(f64, &[f64])>,
    xbar: Option<f64>,
) -> Result<f64> {
    let (upper, truncated) = search_box(inst, f, xbar);
    if let Some((c0, y0)) = portfolio {
        if y0.len() != inst.m() {
            return invalid("portfolio length differs from the instrument count");
        }
        let lo = portfolio_min(inst, f, c0, y0, &upper)?;
        if lo < -1e-7 {
            return invalid(format!(
                "portfolio does not dominate -f: minimum of c0 + <y0,g> + f is {lo:.3e}"
            ));
        }
        return Ok(-c0 - inst.price(y0));
    }
    let zero = vec![0.0; inst.m()];
    let fmin = portfolio_min(inst, f, 0.0, &zero, &upper)?;
    let radial_ok = if truncated {
        let unit = vec![1.0; inst.d];
        minimize_over_box(
            &f.radial(),
            0.0,
            &unit,
            &exact_milp(),
            &EncodingOptions::with_prune_tol(0.0),
        )?
        .lower
            >= -1e-9
    } else {
        true
    };
    if fmin >= -1e-9 && radial_ok {
        return Ok(0.0);
    }
    if truncated {
        return invalid("target is not nonnegative on R_+^d; supply a portfolio dominating -f");
    }
    Ok(fmin)
}

/// Minimum over the box of `c + <y, g> - f`, computed from the payoffs
/// directly rather than through the slack template.
pub fn hedge_shortfall(inst: &MarketInstance, f: &CpwaFunction, c: f64, y: &[f64], upper: &[f64]) -> Result<f64> {
    portfolio_min(inst, &f.neg(), c, y, upper)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measure {
    pub atoms: Vec<Atom>,
    /// `sum mass * f(x)`.
    pub value: f64,
}

impl Measure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn integrate(&self, h: &CpwaFunction) -> f64 {
        self.atoms.iter().map(|a| a.mass * h.eval(&a.x)).sum()
    }
}

/// A discrete pricing measure on `support` maximising `E f` within the
/// quotes.
pub fn extract_measure(
    inst: &MarketInstance,
    f: &CpwaFunction,
    support: &[Vec<f64>],
    lp_opts: &LpOptions,
) -> Result<Measure> {
    if support.is_empty() {
        return invalid("empty support");
    }
    let mut lp = LinearProgram::new();
    let fx: Vec<f64> = support.iter().map(|x| f.eval(x)).collect();
    for v in &fx {
        lp.add_var(-v, 0.0, f64::INFINITY);
    }
    lp.add_row((0..support.len()).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for (j, g) in inst.g.iter().enumerate() {
        let c: Vec<(usize, f64)> = support
            .iter()
            .enumerate()
            .map(|(i, x)| (i, snap(g.eval(x))))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        if inst.bid[j] == inst.ask[j] {
            lp.add_row(c, Relation::Eq, inst.bid[j]);
        } else {
            lp.add_row(c.clone(), Relation::Ge, inst.bid[j]);
            lp.add_row(c, Relation::Le, inst.ask[j]);
        }
    }
    let sol = solve(&lp, lp_opts)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("measure LP ended with status {:?}", sol.status)));
    }
    let atoms: Vec<Atom> = support
        .iter()
        .zip(&sol.x)
        .filter(|(_, &m)| m > 0.0)
        .map(|(x, &m)| Atom { x: x.clone(), mass: m })
        .collect();
    let value = atoms.iter().map(|a| a.mass * f.eval(&a.x)).sum();
    Ok(Measure { atoms, value })
}

/// Coefficients this close to zero come from rounding noise.
pub(crate) fn snap(v: f64) -> f64 {
    if v.abs() < 1e-10 {
        0.0
    } else {
        v
    }
}

/// `phi(f) - phi_lower` must never be negative up to this tolerance.
pub(crate) const ARBITRAGE_TOL: f64 = 1e-7;

/// Model-free price band of `f`: the upper end is `phi(f)`, the lower end
/// `-phi(-f)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceBand {
    pub lower: f64,
    pub upper: f64,
    pub upper_run: BoundsResult,
    pub lower_run: BoundsResult,
}

pub fn price_band(
    inst: &MarketInstance,
    f: &CpwaFunction,
    algorithm: Algorithm,
    ecp_opts: &crate::ecp::EcpOptions,
    accp_opts: &crate::accp::AccpOptions,
) -> Result<PriceBand> {
    let run = |h: &CpwaFunction| match algorithm {
        Algorithm::Ecp => crate::ecp::ecp(inst, h, ecp_opts),
        Algorithm::Accp => crate::accp::accp(inst, h, accp_opts),
    };
    let upper_run = run(f)?;
    let lower_run = run(&f.neg())?;
    Ok(PriceBand {
        lower: -lower_run.phi_upper,
        upper: upper_run.phi_upper,
        upper_run,
        lower_run,
    })
}
