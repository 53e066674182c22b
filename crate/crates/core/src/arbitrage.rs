//! Arbitrage detection for general instances and quote repair for
//! single-asset option chains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accp::{accp, AccpOptions};
use crate::bounds::{hedge_shortfall, search_box, BoundsResult, BoundsStatus};
use crate::cpwa::{vanilla_call, vanilla_put, CpwaFunction};
use crate::ecp::{ecp, EcpOptions};
use crate::error::{invalid, Error, Result};
use crate::instance::{Domain, MarketInstance};
use crate::lp::{solve, LinearProgram, LpOptions, LpStatus, Relation};

#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    pub accp: AccpOptions,
    pub ecp: EcpOptions,
}

/// A portfolio with nonnegative payoff and negative cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Strategy {
    pub c: f64,
    pub y: Vec<f64>,
    /// `c + pi(y)`.
    pub cost: f64,
    /// Minimum of `c + <y, g(x)>` over the searched box.
    pub min_payoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    pub arbitrage_free: bool,
    pub strategy: Option<Strategy>,
    pub bounds: BoundsResult,
}

/// Superhedges the zero payoff with a zero floor. A final upper bound below
/// zero is the unbounded case; its portfolio is rechecked by a separate MILP
/// and the cash shifted by any shortfall before it is reported.
pub fn detect(inst: &MarketInstance, opts: &DetectOptions) -> Result<Detection> {
    inst.validate()?;
    let zero = CpwaFunction::zero(inst.d);
    let bounds = match inst.domain {
        Domain::Box { .. } => {
            let o = AccpOptions {
                phi_lower: Some(0.0),
                ..opts.accp.clone()
            };
            accp(inst, &zero, &o)?
        }
        Domain::PositiveOrthant => {
            let o = EcpOptions {
                phi_lower: Some(0.0),
                ..opts.ecp.clone()
            };
            ecp(inst, &zero, &o)?
        }
    };
    if bounds.status != BoundsStatus::Arbitrage {
        return Ok(Detection {
            arbitrage_free: true,
            strategy: None,
            bounds,
        });
    }
    let (upper, _) = search_box(inst, &zero, opts.ecp.xbar);
    let y = bounds.y_star.clone();
    let short = hedge_shortfall(inst, &zero, bounds.c_star, &y, &upper)?;
    let c = bounds.c_star - short.min(0.0);
    let cost = c + inst.price(&y);
    if cost >= -crate::bounds::ARBITRAGE_TOL {
        return Err(Error::Solver(format!(
            "solver reported arbitrage but the certified portfolio costs {cost:.3e}"
        )));
    }
    Ok(Detection {
        arbitrage_free: false,
        strategy: Some(Strategy {
            c,
            y,
            cost,
            min_payoff: short.max(0.0),
        }),
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quotes {
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
}

/// Calls and puts on one asset at a common strike grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionChain {
    pub strikes: Vec<f64>,
    pub call: Quotes,
    pub put: Quotes,
    /// Upper end of the price range; twice the largest strike when absent.
    #[serde(default)]
    pub xbar: Option<f64>,
}

impl OptionChain {
    pub fn validate(&self) -> Result<()> {
        let m = self.strikes.len();
        if m == 0 {
            return invalid("chain has no strikes");
        }
        if self.strikes[0] <= 0.0 || self.strikes.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("strikes must be positive and strictly increasing");
        }
        for (name, q) in [("call", &self.call), ("put", &self.put)] {
            if q.bid.len() != m || q.ask.len() != m {
                return invalid(format!("{name} quotes must have one entry per strike"));
            }
            if q.bid
                .iter()
                .zip(&q.ask)
                .any(|(b, a)| !(b <= a) || !b.is_finite() || !a.is_finite())
            {
                return invalid(format!("{name} quotes need finite bid <= ask"));
            }
        }
        if self.xbar() <= self.strikes[m - 1] {
            return invalid("xbar must exceed the largest strike");
        }
        Ok(())
    }

    pub fn xbar(&self) -> f64 {
        self.xbar.unwrap_or(2.0 * self.strikes[self.strikes.len() - 1])
    }

    /// Support points `0, strikes, xbar`.
    pub fn support(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.strikes.len() + 2);
        s.push(0.0);
        s.extend_from_slice(&self.strikes);
        s.push(self.xbar());
        s
    }
}

/// The chain as a one-asset instance on `[0, xbar]`: calls first, then puts.
pub fn chain_to_instance(chain: &OptionChain) -> Result<MarketInstance> {
    chain.validate()?;
    let mut g = Vec::new();
    let mut labels = Vec::new();
    let (mut bid, mut ask) = (Vec::new(), Vec::new());
    for (j, &k) in chain.strikes.iter().enumerate() {
        g.push(vanilla_call(1, 0, k)?);
        labels.push(format!("call({k})"));
        bid.push(chain.call.bid[j]);
        ask.push(chain.call.ask[j]);
    }
    for (j, &k) in chain.strikes.iter().enumerate() {
        g.push(vanilla_put(1, 0, k)?);
        labels.push(format!("put({k})"));
        bid.push(chain.put.bid[j]);
        ask.push(chain.put.ask[j]);
    }
    Ok(MarketInstance::new(
        1,
        Domain::Box {
            upper: vec![chain.xbar()],
        },
        g,
        bid,
        ask,
    )?
    .with_labels(labels))
}

#[derive(Debug, Clone)]
pub struct RepairOptions {
    /// Lower bound on every atom of the certificate.
    pub eta: f64,
    /// Drop quotes whose mid breaks parity with the median forward by more
    /// than this before repairing.
    pub outlier_threshold: Option<f64>,
    pub lp: LpOptions,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            eta: 1e-6,
            outlier_threshold: None,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairResult {
    pub call_minus: Vec<f64>,
    pub call_plus: Vec<f64>,
    pub put_minus: Vec<f64>,
    pub put_plus: Vec<f64>,
    pub adjusted: OptionChain,
    /// `(point, mass)` pairs on `0, strikes, xbar`.
    pub certificate: Vec<(f64, f64)>,
    pub total_adjustment: f64,
    pub min_mass: f64,
    /// Quotes excluded by the outlier filter; their adjusted band collapses
    /// to the certificate price.
    pub dropped: Vec<(OptionKind, usize)>,
}

impl RepairResult {
    /// Number of individual bid or ask prices moved by more than `tol`.
    pub fn adjusted_count(&self, tol: f64) -> usize {
        [&self.call_minus, &self.call_plus, &self.put_minus, &self.put_plus]
            .iter()
            .flat_map(|v| v.iter())
            .filter(|v| **v > tol)
            .count()
    }

    pub fn max_adjustment(&self) -> f64 {
        [&self.call_minus, &self.call_plus, &self.put_minus, &self.put_plus]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |a, v| a.max(*v))
    }

    pub fn certificate_price(&self, kind: OptionKind, k: f64) -> f64 {
        certificate_price(&self.certificate, kind, k)
    }
}

pub fn certificate_price(cert: &[(f64, f64)], kind: OptionKind, k: f64) -> f64 {
    cert.iter()
        .map(|(x, p)| match kind {
            OptionKind::Call => p * (x - k).max(0.0),
            OptionKind::Put => p * (k - x).max(0.0),
        })
        .sum()
}

fn outliers(chain: &OptionChain, threshold: f64) -> Vec<(OptionKind, usize)> {
    let m = chain.strikes.len();
    let mid = |q: &Quotes, j: usize| 0.5 * (q.bid[j] + q.ask[j]);
    let mut fwd: Vec<f64> = (0..m)
        .map(|j| mid(&chain.call, j) - mid(&chain.put, j) + chain.strikes[j])
        .collect();
    fwd.sort_by(|a, b| a.total_cmp(b));
    let f = fwd[m / 2];
    let xbar = chain.xbar();
    let mut out = Vec::new();
    for j in 0..m {
        let k = chain.strikes[j];
        let c = mid(&chain.call, j);
        let p = mid(&chain.put, j);
        let parity = (c - p - (f - k)).abs();
        let call_bad = c < (f - k).max(0.0) - threshold || c > xbar - k + threshold;
        let put_bad = p < (k - f).max(0.0) - threshold || p > k + threshold;
        if call_bad || (parity > threshold && !put_bad) {
            out.push((OptionKind::Call, j));
        }
        if put_bad {
            out.push((OptionKind::Put, j));
        }
    }
    out
}

/// Smallest total widening of the quotes that some probability measure on
/// `0, strikes, xbar` with every atom at least `eta` fits.
pub fn repair_chain(chain: &OptionChain, opts: &RepairOptions) -> Result<RepairResult> {
    chain.validate()?;
    let m = chain.strikes.len();
    let pts = chain.support();
    let np = pts.len();
    if !(opts.eta >= 0.0) || opts.eta * np as f64 > 1.0 {
        return invalid(format!(
            "eta = {} leaves no probability vector on {np} points",
            opts.eta
        ));
    }
    let dropped = match opts.outlier_threshold {
        Some(t) => outliers(chain, t),
        None => Vec::new(),
    };
    let is_dropped = |kind: OptionKind, j: usize| dropped.contains(&(kind, j));

    let mut lp = LinearProgram::new();
    for _ in 0..np {
        lp.add_var(0.0, opts.eta, f64::INFINITY);
    }
    // v^{call-}, v^{call+}, v^{put-}, v^{put+}
    let v0 = np;
    for _ in 0..4 * m {
        lp.add_var(1.0, 0.0, f64::INFINITY);
    }
    lp.add_row((0..np).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for (kind, q, base) in [
        (OptionKind::Call, &chain.call, 0usize),
        (OptionKind::Put, &chain.put, 2usize),
    ] {
        for j in 0..m {
            if is_dropped(kind, j) {
                continue;
            }
            let k = chain.strikes[j];
            let price: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let v = match kind {
                        OptionKind::Call => (x - k).max(0.0),
                        OptionKind::Put => (k - x).max(0.0),
                    };
                    (i, v)
                })
                .filter(|(_, v)| *v != 0.0)
                .collect();
            let mut lo = price.clone();
            lo.push((v0 + base * m + j, 1.0));
            lp.add_row(lo, Relation::Ge, q.bid[j]);
            let mut hi = price;
            hi.push((v0 + (base + 1) * m + j, -1.0));
            lp.add_row(hi, Relation::Le, q.ask[j]);
        }
    }
    let sol = solve(&lp, &opts.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return invalid("repair LP is infeasible for this eta"),
        s => return Err(Error::Solver(format!("repair LP ended with status {s:?}"))),
    }
    let clean = |v: f64| if v < 1e-12 { 0.0 } else { v };
    let take = |b: usize| -> Vec<f64> { (0..m).map(|j| clean(sol.x[v0 + b * m + j])).collect() };
    let (call_minus, call_plus, put_minus, put_plus) = (take(0), take(1), take(2), take(3));
    let certificate: Vec<(f64, f64)> = pts.iter().zip(&sol.x[..np]).map(|(x, p)| (*x, *p)).collect();
    let min_mass = sol.x[..np].iter().cloned().fold(f64::INFINITY, f64::min);

    let mut adjusted = chain.clone();
    for j in 0..m {
        let k = chain.strikes[j];
        for (kind, q, minus, plus) in [
            (OptionKind::Call, &mut adjusted.call, &call_minus, &call_plus),
            (OptionKind::Put, &mut adjusted.put, &put_minus, &put_plus),
        ] {
            let fair = certificate_price(&certificate, kind, k);
            if is_dropped(kind, j) {
                q.bid[j] = fair;
                q.ask[j] = fair;
                continue;
            }
            q.bid[j] -= minus[j];
            q.ask[j] += plus[j];
            // absorb LP round-off so the certificate sits inside the band
            q.bid[j] = q.bid[j].min(fair);
            q.ask[j] = q.ask[j].max(fair);
        }
    }
    Ok(RepairResult {
        total_adjustment: sol.objective,
        call_minus,
        call_plus,
        put_minus,
        put_plus,
        adjusted,
        certificate,
        min_mass,
        dropped,
    })
}

/// Repairs chains independently in parallel.
pub fn repair_chains(chains: &[OptionChain], opts: &RepairOptions) -> Vec<Result<RepairResult>> {
    chains.par_iter().map(|c| repair_chain(c, opts)).collect()
}
