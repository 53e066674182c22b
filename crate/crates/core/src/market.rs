//! Synthetic markets: truncated log-normal marginals glued by a factor
//! t-copula. Several models priced side by side give bid and ask quotes as
//! the smallest and largest model price.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::cpwa::CpwaFunction;
use crate::error::{invalid, Result};
use crate::instance::{Domain, MarketInstance};
use crate::payoff::PayoffSpec;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Log-normal law with parameters `(mu, sigma2)` conditioned on `[0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedLogNormal {
    pub mu: f64,
    pub sigma2: f64,
    pub upper: f64,
}

impl TruncatedLogNormal {
    pub fn new(mu: f64, sigma2: f64, upper: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && upper > 0.0 && mu.is_finite()) {
            return invalid("truncated log-normal needs sigma2 > 0 and upper > 0");
        }
        Ok(TruncatedLogNormal { mu, sigma2, upper })
    }

    fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    fn z(&self, x: f64) -> f64 {
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (x.ln() - self.mu) / self.sigma()
        }
    }

    fn mass(&self) -> f64 {
        std_normal().cdf(self.z(self.upper))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= self.upper {
            1.0
        } else {
            std_normal().cdf(self.z(x)) / self.mass()
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x > self.upper {
            return 0.0;
        }
        let s = self.sigma();
        let z = self.z(x);
        (-0.5 * z * z).exp() / (x * s * (2.0 * std::f64::consts::PI).sqrt()) / self.mass()
    }

    pub fn inv_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(1e-16, 1.0 - 1e-16);
        let p = u * self.mass();
        (self.mu + self.sigma() * std_normal().inverse_cdf(p))
            .exp()
            .min(self.upper)
    }

    /// `E[X 1{X <= level}]` under the untruncated law.
    fn partial_first_moment(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        (self.mu + 0.5 * self.sigma2).exp() * std_normal().cdf(self.z(level) - self.sigma())
    }

    pub fn mean(&self) -> f64 {
        self.partial_first_moment(self.upper) / self.mass()
    }

    /// `E[(X - k)^+]`.
    pub fn call_price(&self, k: f64) -> f64 {
        if k >= self.upper {
            return 0.0;
        }
        if k <= 0.0 {
            return self.mean() - k;
        }
        let n = std_normal();
        let first = self.partial_first_moment(self.upper) - self.partial_first_moment(k);
        let prob = n.cdf(self.z(self.upper)) - n.cdf(self.z(k));
        ((first - k * prob) / self.mass()).max(0.0)
    }

    /// `E[(k - X)^+]` by put-call parity.
    pub fn put_price(&self, k: f64) -> f64 {
        (self.call_price(k) - self.mean() + k).max(0.0)
    }
}

/// Correlation `C = L D L^T + Psi` with `nu` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCopula {
    /// `d x k` loadings.
    pub loadings: Vec<Vec<f64>>,
    /// Diagonal of `D`.
    pub factor_var: Vec<f64>,
    /// Diagonal of `Psi`.
    pub idio: Vec<f64>,
    pub dof: f64,
}

impl FactorCopula {
    /// Unit factor variances, idiosyncratic part filling the diagonal to one.
    pub fn from_loadings(loadings: Vec<Vec<f64>>, dof: f64) -> Result<Self> {
        let k = loadings.first().map_or(0, |r| r.len());
        let idio = loadings
            .iter()
            .map(|r| 1.0 - r.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let c = FactorCopula {
            loadings,
            factor_var: vec![1.0; k],
            idio,
            dof,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn independent(d: usize, dof: f64) -> Self {
        FactorCopula {
            loadings: vec![Vec::new(); d],
            factor_var: Vec::new(),
            idio: vec![1.0; d],
            dof,
        }
    }

    pub fn dim(&self) -> usize {
        self.loadings.len()
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let mut v: f64 = self.loadings[i]
                .iter()
                .zip(&self.loadings[j])
                .zip(&self.factor_var)
                .map(|((a, b), s)| a * b * s)
                .sum();
            if i == j {
                v += self.idio[i];
            }
            v
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let k = self.factor_var.len();
        if self.idio.len() != d || self.loadings.iter().any(|r| r.len() != k) {
            return invalid("copula factor dimensions are inconsistent");
        }
        if !(self.dof > 0.0) {
            return invalid("degrees of freedom must be positive");
        }
        if self.factor_var.iter().chain(&self.idio).any(|v| *v < 0.0) {
            return invalid("factor and idiosyncratic variances must be nonnegative");
        }
        let c = self.correlation();
        for i in 0..d {
            if (c[(i, i)] - 1.0).abs() > 1e-9 {
                return invalid(format!("correlation diagonal entry {i} is {}", c[(i, i)]));
            }
        }
        if c.cholesky().is_none() {
            return invalid("correlation matrix is not positive definite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub marginals: Vec<TruncatedLogNormal>,
    pub copula: FactorCopula,
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        if self.marginals.len() != self.copula.dim() {
            return invalid("marginal count differs from copula dimension");
        }
        self.copula.validate()
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PricingMode {
    /// Single-asset payoffs in closed form, the rest by Monte Carlo.
    #[default]
    ClosedFormSingles,
    /// Everything from the same simulated sample, so each model's price
    /// vector is exactly the expectation under one discrete measure.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModelFamily {
    pub models: Vec<MarketModel>,
    pub mc_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub pricing: PricingMode,
}

const BLOCK: usize = 4096;

/// `n` joint draws from the model. Deterministic for a given seed and
/// independent of the thread count.
pub fn sample_joint(model: &MarketModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let d = model.dim();
    let k = model.copula.factor_var.len();
    let t = StudentsT::new(0.0, 1.0, model.copula.dof)
        .map_err(|e| crate::Error::InvalidArgument(format!("t distribution: {e}")))?;
    let chi =
        ChiSquared::new(model.copula.dof).map_err(|e| crate::Error::InvalidArgument(format!("chi-squared: {e}")))?;
    let fsd: Vec<f64> = model.copula.factor_var.iter().map(|v| v.sqrt()).collect();
    let isd: Vec<f64> = model.copula.idio.iter().map(|v| v.sqrt()).collect();
    let blocks = n.div_ceil(BLOCK);
    let out: Vec<Vec<Vec<f64>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(n - b * BLOCK);
            let mut rows = Vec::with_capacity(count);
            let mut fac = vec![0.0; k];
            for _ in 0..count {
                for (f, s) in fac.iter_mut().zip(&fsd) {
                    let z: f64 = rng.sample(StandardNormal);
                    *f = z * s;
                }
                let w: f64 = chi.sample(&mut rng);
                let scale = (w / model.copula.dof).sqrt();
                let row: Vec<f64> = (0..d)
                    .map(|i| {
                        let e: f64 = rng.sample(StandardNormal);
                        let g = model.copula.loadings[i]
                            .iter()
                            .zip(&fac)
                            .map(|(l, f)| l * f)
                            .sum::<f64>()
                            + isd[i] * e;
                        let u = t.cdf(g / scale);
                        model.marginals[i].inv_cdf(u)
                    })
                    .collect();
                rows.push(row);
            }
            rows
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Sample mean and its standard error.
pub fn mc_estimate(h: &CpwaFunction, samples: &[Vec<f64>]) -> (f64, f64) {
    let n = samples.len() as f64;
    let vals: Vec<f64> = samples.iter().map(|x| h.eval(x)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

pub fn price_payoff(model: &MarketModel, h: &CpwaFunction, n: usize, seed: u64) -> Result<(f64, f64)> {
    let s = sample_joint(model, n, seed)?;
    Ok(mc_estimate(h, &s))
}

fn closed_form(model: &MarketModel, spec: &PayoffSpec) -> Option<f64> {
    match spec {
        PayoffSpec::Asset { asset } => Some(model.marginals[*asset].mean()),
        PayoffSpec::Call { asset, strike } => Some(model.marginals[*asset].call_price(*strike)),
        PayoffSpec::Put { asset, strike } => Some(model.marginals[*asset].put_price(*strike)),
        _ => None,
    }
}

/// Quotes for the instruments: bid and ask are the extreme model prices.
pub fn build_market(family: &MarketModelFamily, instruments: &[(String, PayoffSpec)]) -> Result<MarketInstance> {
    let Some(first) = family.models.first() else {
        return invalid("model family is empty");
    };
    let d = first.dim();
    let upper: Vec<f64> = first.marginals.iter().map(|m| m.upper).collect();
    for m in &family.models {
        m.validate()?;
        if m.dim() != d || m.marginals.iter().map(|m| m.upper).collect::<Vec<_>>() != upper {
            return invalid("models in a family must share dimension and truncation");
        }
    }
    let g: Vec<CpwaFunction> = instruments.iter().map(|(_, s)| s.to_cpwa(d)).collect::<Result<_>>()?;
    let need_mc =
        family.pricing == PricingMode::MonteCarlo || instruments.iter().any(|(_, s)| s.single_asset().is_none());
    let mut bid = vec![f64::INFINITY; g.len()];
    let mut ask = vec![f64::NEG_INFINITY; g.len()];
    for (mi, model) in family.models.iter().enumerate() {
        let samples = if need_mc {
            sample_joint(model, family.mc_samples, family.seed.wrapping_add(mi as u64))?
        } else {
            Vec::new()
        };
        for (j, (_, spec)) in instruments.iter().enumerate() {
            let p = match (family.pricing, closed_form(model, spec)) {
                (PricingMode::ClosedFormSingles, Some(p)) => p,
                _ => mc_estimate(&g[j], &samples).0,
            };
            bid[j] = bid[j].min(p);
            ask[j] = ask[j].max(p);
        }
    }
    let labels = instruments.iter().map(|(l, _)| l.clone()).collect();
    Ok(MarketInstance::new(d, Domain::Box { upper }, g, bid, ask)?.with_labels(labels))
}

fn label(spec: &PayoffSpec) -> String {
    match spec {
        PayoffSpec::Asset { asset } => format!("asset({})", asset + 1),
        PayoffSpec::Call { asset, strike } => format!("call({},{strike})", asset + 1),
        PayoffSpec::Put { asset, strike } => format!("put({},{strike})", asset + 1),
        PayoffSpec::Basket { weights, strike } => format!(
            "basket({};{strike})",
            weights.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(",")
        ),
        PayoffSpec::Spread { long, short, strike } => format!("spread({};{};{strike})", join1(long), join1(short)),
        PayoffSpec::CallOnMax { assets, strike } => format!("call-on-max({};{strike})", join1(assets)),
        PayoffSpec::CallOnMin { assets, strike } => format!("call-on-min({};{strike})", join1(assets)),
        PayoffSpec::PutOnMin { assets, strike } => format!("put-on-min({};{strike})", join1(assets)),
        PayoffSpec::BestOfCalls { legs } => format!(
            "best-of-calls({})",
            legs.iter()
                .map(|(a, k)| format!("{}:{k}", a + 1))
                .collect::<Vec<_>>()
                .join(",")
        ),
    }
}

fn join1(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

pub fn labelled(specs: Vec<PayoffSpec>) -> Vec<(String, PayoffSpec)> {
    specs.into_iter().map(|s| (label(&s), s)).collect()
}

/// Instrument groups of the five-asset call-on-max study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exp1Group {
    Assets,
    Vanilla,
    Basket,
    Spread,
    Rainbow,
}

/// The 439 instruments of the five-asset study, tagged by group.
pub fn exp1_instruments() -> Vec<(Exp1Group, PayoffSpec)> {
    let mut out = Vec::new();
    for i in 0..5 {
        out.push((Exp1Group::Assets, PayoffSpec::Asset { asset: i }));
    }
    for i in 0..5 {
        for k in 1..=10 {
            out.push((
                Exp1Group::Vanilla,
                PayoffSpec::Call {
                    asset: i,
                    strike: k as f64,
                },
            ));
        }
    }
    let q = 0.25;
    let t = 1.0 / 3.0;
    let baskets: [[f64; 5]; 12] = [
        [0.2; 5],
        [q, q, q, q, 0.0],
        [q, q, q, 0.0, q],
        [q, q, 0.0, q, q],
        [q, 0.0, q, q, q],
        [0.0, q, q, q, q],
        [t, t, t, 0.0, 0.0],
        [0.0, t, t, t, 0.0],
        [0.0, 0.0, t, t, t],
        [0.0, 0.5, 0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0, 0.5, 0.0],
        [0.0, 0.0, 0.5, 0.5, 0.0],
    ];
    for w in baskets {
        for k in 1..=10 {
            out.push((
                Exp1Group::Basket,
                PayoffSpec::Basket {
                    weights: w.to_vec(),
                    strike: k as f64,
                },
            ));
        }
    }
    let spreads: [(usize, usize); 18] = [
        (1, 2),
        (1, 3),
        (1, 4),
        (2, 3),
        (2, 4),
        (2, 5),
        (3, 4),
        (3, 5),
        (4, 5),
        (2, 1),
        (3, 1),
        (4, 1),
        (3, 2),
        (4, 2),
        (5, 2),
        (4, 3),
        (5, 3),
        (5, 4),
    ];
    for (a, b) in spreads {
        for k in -5..=5 {
            out.push((
                Exp1Group::Spread,
                PayoffSpec::Spread {
                    long: vec![a - 1],
                    short: vec![b - 1],
                    strike: k as f64,
                },
            ));
        }
    }
    let groups: [&[usize]; 6] = [
        &[0, 1, 2, 3, 4],
        &[0, 1, 2, 3],
        &[1, 2, 3, 4],
        &[1, 2],
        &[1, 3],
        &[2, 3],
    ];
    for g in groups {
        for k in 0..=10 {
            out.push((
                Exp1Group::Rainbow,
                PayoffSpec::CallOnMax {
                    assets: g.to_vec(),
                    strike: k as f64,
                },
            ));
        }
    }
    out
}

/// Four models: two marginal groups times two tail parameters, all on
/// `[0, 100]^5`. The two-factor loadings are fixed illustrative values.
pub fn exp1_family(seed: u64, mc_samples: usize) -> Result<MarketModelFamily> {
    let group1 = [(0.5, 0.2), (1.0, 0.4), (1.0, 0.2), (0.5, 0.4), (0.5, 0.2)];
    let group2 = [(0.5, 0.21), (1.0, 0.42), (1.0, 0.21), (0.5, 0.42), (0.5, 0.21)];
    let loadings = vec![
        vec![0.6, 0.3],
        vec![0.5, -0.2],
        vec![0.4, 0.4],
        vec![0.7, 0.1],
        vec![0.3, -0.5],
    ];
    let mut models = Vec::new();
    for group in [group1, group2] {
        let marginals: Vec<TruncatedLogNormal> = group
            .iter()
            .map(|&(mu, s2)| TruncatedLogNormal::new(mu, s2, 100.0))
            .collect::<Result<_>>()?;
        for dof in [3.0, 4.0] {
            models.push(MarketModel {
                marginals: marginals.clone(),
                copula: FactorCopula::from_loadings(loadings.clone(), dof)?,
            });
        }
    }
    Ok(MarketModelFamily {
        models,
        mc_samples,
        seed,
        pricing: PricingMode::ClosedFormSingles,
    })
}

/// Random family in the style of the high-dimensional study: `mu` in
/// `[-0.3, 0.1]`, `sigma2` in `[0.2, 0.8]` plus up to `0.1` in the second
/// group, three factors, tail parameters 3 and 20.
pub fn random_family(d: usize, upper: f64, seed: u64, mc_samples: usize) -> Result<MarketModelFamily> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.1)).collect();
    let s1: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..0.8)).collect();
    let s2: Vec<f64> = s1.iter().map(|s| s + rng.gen_range(0.0..0.1)).collect();
    let make_loadings = |rng: &mut ChaCha20Rng| -> Vec<Vec<f64>> {
        (0..d)
            .map(|_| {
                let mut r: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let n: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.9 {
                    r.iter_mut().for_each(|v| *v *= 0.9 / n);
                }
                r
            })
            .collect()
    };
    let base = make_loadings(&mut rng);
    let bumped: Vec<Vec<f64>> = base
        .iter()
        .map(|r| {
            let mut r: Vec<f64> = r.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
            let n: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.9 {
                r.iter_mut().for_each(|v| *v *= 0.9 / n);
            }
            r
        })
        .collect();
    let mut models = Vec::new();
    for sig in [&s1, &s2] {
        let marginals: Vec<TruncatedLogNormal> = mu
            .iter()
            .zip(sig.iter())
            .map(|(&m, &s)| TruncatedLogNormal::new(m, s, upper))
            .collect::<Result<_>>()?;
        for (load, dof) in [(&base, 3.0), (&bumped, 20.0)] {
            models.push(MarketModel {
                marginals: marginals.clone(),
                copula: FactorCopula::from_loadings(load.clone(), dof)?,
            });
        }
    }
    Ok(MarketModelFamily {
        models,
        mc_samples,
        seed: seed.wrapping_add(1),
        pricing: PricingMode::ClosedFormSingles,
    })
}

/// Instrument mix of the high-dimensional study: every asset, three calls
/// per asset, three baskets, spreads between random pairs and call-on-min
/// options on random groups.
pub fn random_instruments(
    d: usize,
    calls_per_asset: usize,
    baskets: usize,
    spreads: usize,
    call_on_min: usize,
    seed: u64,
) -> Vec<PayoffSpec> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..d {
        out.push(PayoffSpec::Asset { asset: i });
    }
    for i in 0..d {
        for c in 0..calls_per_asset {
            out.push(PayoffSpec::Call {
                asset: i,
                strike: 0.5 + c as f64 * 0.5,
            });
        }
    }
    for _ in 0..baskets {
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        out.push(PayoffSpec::Basket {
            weights: w.iter().map(|v| v / s).collect(),
            strike: rng.gen_range(0.5..2.0),
        });
    }
    if d >= 2 {
        for _ in 0..spreads {
            let a = rng.gen_range(0..d);
            let mut b = rng.gen_range(0..d - 1);
            if b >= a {
                b += 1;
            }
            out.push(PayoffSpec::Spread {
                long: vec![a],
                short: vec![b],
                strike: rng.gen_range(-1.0..1.0),
            });
        }
        for _ in 0..call_on_min {
            let size = rng.gen_range(2..=d.min(5));
            let mut idx: Vec<usize> = (0..d).collect();
            for i in 0..size {
                let j = rng.gen_range(i..d);
                idx.swap(i, j);
            }
            idx.truncate(size);
            idx.sort_unstable();
            out.push(PayoffSpec::CallOnMin {
                assets: idx,
                strike: rng.gen_range(0.2..1.0),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1_has_439_instruments() {
        assert_eq!(exp1_instruments().len(), 439);
    }

    #[test]
    fn closed_form_call_matches_quadrature() {
        let m = TruncatedLogNormal::new(1.0, 0.4, 100.0).unwrap();
        for k in [0.0, 1.0, 3.0, 7.5, 20.0] {
            // Simpson on a fine grid of the density
            let n = 200_000;
            let h = 100.0 / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let x = i as f64 * h;
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                s += w * (x - k).max(0.0) * m.pdf(x);
            }
            s *= h / 3.0;
            assert!((s - m.call_price(k)).abs() < 1e-6, "k={k}: {s} vs {}", m.call_price(k));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let fam = exp1_family(7, 100).unwrap();
        let a = sample_joint(&fam.models[0], 5000, 11).unwrap();
        let b = sample_joint(&fam.models[0], 5000, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..=100.0).contains(v)));
    }

    #[test]
    fn copula_validation() {
        assert!(FactorCopula::from_loadings(vec![vec![1.2], vec![0.1]], 3.0).is_err());
        assert!(FactorCopula::from_loadings(vec![vec![0.5], vec![0.1]], 3.0).is_ok());
    }
}
