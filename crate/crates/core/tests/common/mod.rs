#![allow(dead_code)]

use modelfree::cpwa::{
    asset, basket_call, call_on_max, call_on_min, spread_call, vanilla_call, vanilla_put, Piece, Term,
};
use modelfree::lp::{solve, LinearProgram, LpOptions, LpStatus, Relation};
use modelfree::market::{build_market, labelled, random_family, random_instruments, PricingMode};
use modelfree::{CpwaFunction, Domain, MarketInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random consistent box market with `d` assets on `[0, 20]^d` and at most
/// 30 instruments. Every model price is an exact sample average, so the
/// quotes always admit a pricing measure.
pub fn random_box_market(seed: u64, d: usize) -> MarketInstance {
    let mut rng = rng(seed);
    let calls = rng.gen_range(1..=4);
    let baskets = rng.gen_range(0..=3);
    let spreads = if d > 1 { rng.gen_range(1..=4) } else { 0 };
    let com = if d > 1 { rng.gen_range(0..=3) } else { 0 };
    let mut fam = random_family(d, 20.0, seed, 4000).unwrap();
    fam.pricing = PricingMode::MonteCarlo;
    let specs = random_instruments(d, calls, baskets, spreads, com, seed ^ 0x5eed);
    build_market(&fam, &labelled(specs)).unwrap()
}

pub fn random_target(seed: u64, d: usize) -> CpwaFunction {
    let mut rng = rng(seed.wrapping_mul(31).wrapping_add(7));
    let mut idx: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.7)).collect();
    if idx.is_empty() {
        idx.push(rng.gen_range(0..d));
    }
    call_on_max(d, &idx, rng.gen_range(0.0..2.0)).unwrap()
}

/// Random CPWA function with up to four terms of up to four pieces.
pub fn random_cpwa(rng: &mut ChaCha8Rng, d: usize) -> CpwaFunction {
    let k = rng.gen_range(1..=4);
    let terms = (0..k)
        .map(|_| {
            let n = rng.gen_range(1..=4);
            let pieces = (0..n)
                .map(|_| {
                    Piece::new(
                        (0..d)
                            .map(|_| (rng.gen_range(-4.0..4.0f64) * 4.0).round() / 4.0)
                            .collect(),
                        rng.gen_range(-5.0..5.0),
                    )
                })
                .collect();
            Term::new(if rng.gen_bool(0.5) { 1 } else { -1 }, pieces)
        })
        .collect();
    CpwaFunction::new(d, terms).unwrap()
}

/// Solves the square system `a x = b` by Gaussian elimination.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Hyperplanes `<a, x> = b` where pieces of one term cross.
fn breakpoint_planes(h: &CpwaFunction) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    for t in &h.terms {
        for i in 0..t.pieces.len() {
            for j in i + 1..t.pieces.len() {
                let p = &t.pieces[i];
                let q = &t.pieces[j];
                let a: Vec<f64> = p.a.iter().zip(&q.a).map(|(x, y)| x - y).collect();
                if a.iter().any(|v| v.abs() > 1e-12) {
                    out.push((a, q.b - p.b));
                }
            }
        }
    }
    out
}

/// Exact minimum of `h` over `[0, upper]` for `d <= 2`: the minimum of a
/// CPWA function sits at a vertex of the arrangement formed by its
/// breakpoint hyperplanes and the box faces. A dense grid is added as a
/// second line of defence.
pub fn brute_min_box(h: &CpwaFunction, upper: &[f64], grid: usize) -> f64 {
    let d = h.d;
    assert!(d <= 2);
    let mut planes = breakpoint_planes(h);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, upper[i]));
    }
    let inside = |x: &[f64]| x.iter().zip(upper).all(|(v, u)| *v >= -1e-9 && *v <= u + 1e-9);
    let clamp = |x: Vec<f64>| -> Vec<f64> { x.iter().zip(upper).map(|(v, u)| v.clamp(0.0, *u)).collect() };
    let mut best = f64::INFINITY;
    if d == 1 {
        for (a, b) in &planes {
            let x = vec![b / a[0]];
            if inside(&x) {
                best = best.min(h.eval(&clamp(x)));
            }
        }
    } else {
        for i in 0..planes.len() {
            for j in i + 1..planes.len() {
                let (a1, b1) = &planes[i];
                let (a2, b2) = &planes[j];
                if let Some(x) = solve_dense(vec![a1.clone(), a2.clone()], vec![*b1, *b2]) {
                    if inside(&x) {
                        best = best.min(h.eval(&clamp(x)));
                    }
                }
            }
        }
    }
    let steps = grid.max(1);
    let count = (steps + 1).pow(d as u32);
    for idx in 0..count {
        let mut r = idx;
        let x: Vec<f64> = (0..d)
            .map(|i| {
                let k = r % (steps + 1);
                r /= steps + 1;
                upper[i] * k as f64 / steps as f64
            })
            .collect();
        best = best.min(h.eval(&x));
    }
    best
}

/// Minimum of a positively homogeneous CPWA function over the standard
/// simplex (`d <= 3`): arrangement vertices of the breakpoint planes and
/// coordinate faces within the simplex, plus a simplex grid.
pub fn brute_min_simplex(h: &CpwaFunction, grid: usize) -> f64 {
    let d = h.d;
    let mut planes: Vec<Vec<f64>> = breakpoint_planes(h).into_iter().map(|(a, _)| a).collect();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        planes.push(e);
    }
    let ones = vec![1.0; d];
    let mut best = f64::INFINITY;
    let mut consider = |x: Vec<f64>| {
        if x.iter().all(|v| *v >= -1e-10) {
            let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
            best = best.min(h.eval(&x));
        }
    };
    match d {
        1 => consider(vec![1.0]),
        2 => {
            for a in &planes {
                if let Some(x) = solve_dense(vec![a.clone(), ones.clone()], vec![0.0, 1.0]) {
                    consider(x);
                }
            }
        }
        3 => {
            for i in 0..planes.len() {
                for j in i + 1..planes.len() {
                    if let Some(x) = solve_dense(
                        vec![planes[i].clone(), planes[j].clone(), ones.clone()],
                        vec![0.0, 0.0, 1.0],
                    ) {
                        consider(x);
                    }
                }
            }
        }
        _ => panic!("simplex oracle supports d <= 3"),
    }
    // simplex grid
    let n = grid;
    let mut stack = vec![(Vec::<usize>::new(), n)];
    while let Some((prefix, left)) = stack.pop() {
        if prefix.len() == d - 1 {
            let mut x: Vec<f64> = prefix.iter().map(|k| *k as f64 / n as f64).collect();
            x.push(left as f64 / n as f64);
            consider(x);
            continue;
        }
        for k in 0..=left {
            let mut p = prefix.clone();
            p.push(k);
            stack.push((p, left - k));
        }
    }
    best
}

/// Random Setting-1 market: calls, puts, spreads, baskets and call-on-max
/// payoffs on `R_+^d`. Quotes are only used for their shape here.
pub fn random_orthant_market(rng: &mut ChaCha8Rng, d: usize) -> (MarketInstance, CpwaFunction) {
    let mut g = Vec::new();
    for i in 0..d {
        if rng.gen_bool(0.7) {
            g.push(asset(d, i).unwrap());
        }
        for _ in 0..rng.gen_range(0..=2) {
            g.push(vanilla_call(d, i, rng.gen_range(1..=5) as f64).unwrap());
        }
        if rng.gen_bool(0.3) {
            g.push(vanilla_put(d, i, rng.gen_range(1..=5) as f64).unwrap());
        }
    }
    if d > 1 {
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(0..d);
            let b = (a + rng.gen_range(1..d)) % d;
            g.push(spread_call(d, &[a], &[b], rng.gen_range(-2..=2) as f64).unwrap());
        }
        if rng.gen_bool(0.5) {
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..1.0)).collect();
            g.push(basket_call(&w, 2.0).unwrap());
        }
        if rng.gen_bool(0.5) {
            g.push(call_on_min(d, &(0..d).collect::<Vec<_>>(), 1.0).unwrap());
        }
    }
    if g.is_empty() {
        g.push(asset(d, 0).unwrap());
    }
    let m = g.len();
    let inst = MarketInstance::new(d, Domain::PositiveOrthant, g, vec![0.0; m], vec![1.0; m]).unwrap();
    let f = call_on_max(d, &(0..d).collect::<Vec<_>>(), rng.gen_range(0..=3) as f64).unwrap();
    (inst, f)
}

/// `max sum mu f` over measures on the given points pricing every
/// instrument inside its band. With points containing every vertex of the
/// payoffs' common linearity arrangement this is the exact bound.
pub fn grid_bound(inst: &MarketInstance, f: &CpwaFunction, points: &[Vec<f64>]) -> Option<f64> {
    let mut lp = LinearProgram::new();
    for x in points {
        lp.add_var(-f.eval(x), 0.0, f64::INFINITY);
    }
    lp.add_row((0..points.len()).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);
    for (j, g) in inst.g.iter().enumerate() {
        let c: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, x)| (i, g.eval(x)))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        lp.add_row(c.clone(), Relation::Ge, inst.bid[j]);
        lp.add_row(c, Relation::Le, inst.ask[j]);
    }
    let sol = solve(&lp, &LpOptions::default()).unwrap();
    (sol.status == LpStatus::Optimal).then(|| -sol.objective)
}

/// Points of the regular grid with spacing `h` on `[0, upper]^d`.
pub fn grid_points(d: usize, upper: f64, h: f64) -> Vec<Vec<f64>> {
    let n = (upper / h).round() as usize;
    let count = (n + 1).pow(d as u32);
    (0..count)
        .map(|mut r| {
            (0..d)
                .map(|_| {
                    let k = r % (n + 1);
                    r /= n + 1;
                    k as f64 * h
                })
                .collect()
        })
        .collect()
}

use modelfree::arbitrage::{OptionChain, Quotes};

/// Consistent call and put chain on strikes `1..=5` priced by a measure on
/// the integers `0..=10`, quoted `price -+ half_spread`.
pub fn integer_chain(weights: &[f64], half_spread: f64) -> OptionChain {
    assert_eq!(weights.len(), 11);
    let s: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / s).collect();
    let strikes: Vec<f64> = (1..=5).map(f64::from).collect();
    let price = |pay: &dyn Fn(f64) -> f64| -> f64 { p.iter().enumerate().map(|(i, q)| q * pay(i as f64)).sum() };
    let calls: Vec<f64> = strikes.iter().map(|k| price(&|x| (x - k).max(0.0))).collect();
    let puts: Vec<f64> = strikes.iter().map(|k| price(&|x| (k - x).max(0.0))).collect();
    let band = |v: &[f64]| Quotes {
        bid: v.iter().map(|x| (x - half_spread).max(0.0)).collect(),
        ask: v.iter().map(|x| x + half_spread).collect(),
    };
    OptionChain {
        strikes,
        call: band(&calls),
        put: band(&puts),
        xbar: Some(10.0),
    }
}

/// Two single-asset chains as one two-asset instance on `[0, 10]^2`.
pub fn chains_instance(chains: &[OptionChain; 2]) -> MarketInstance {
    let mut g = Vec::new();
    let (mut bid, mut ask, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, ch) in chains.iter().enumerate() {
        for (j, &k) in ch.strikes.iter().enumerate() {
            g.push(vanilla_call(2, i, k).unwrap());
            bid.push(ch.call.bid[j]);
            ask.push(ch.call.ask[j]);
            labels.push(format!("call({},{k})", i + 1));
            g.push(vanilla_put(2, i, k).unwrap());
            bid.push(ch.put.bid[j]);
            ask.push(ch.put.ask[j]);
            labels.push(format!("put({},{k})", i + 1));
        }
    }
    MarketInstance::new(
        2,
        Domain::Box {
            upper: vec![10.0, 10.0],
        },
        g,
        bid,
        ask,
    )
    .unwrap()
    .with_labels(labels)
}

pub fn with_instrument(inst: &MarketInstance, g: CpwaFunction, bid: f64, ask: f64) -> MarketInstance {
    let mut out = inst.clone();
    out.g.push(g);
    out.bid.push(bid);
    out.ask.push(ask);
    if !out.labels.is_empty() {
        out.labels.push(format!("extra{}", out.g.len()));
    }
    out.validate().unwrap();
    out
}

/// Range of `E f` over measures on the integer grid of `[0, 10]^2` that
/// price the instance within its quotes. Exact because every kink of the
/// payoffs lies on integer coordinates.
pub fn integer_grid_range(inst: &MarketInstance, f: &CpwaFunction) -> Option<(f64, f64)> {
    let pts = grid_points(2, 10.0, 1.0);
    let hi = grid_bound(inst, f, &pts)?;
    let lo = -grid_bound(inst, &f.neg(), &pts)?;
    Some((lo, hi))
}

/// Cheapest portfolio with `|y_j| <= 1` whose payoff is nonnegative on the
/// integer grid; by the vertex argument it is then nonnegative on the box.
/// Returns `(cost, c, y)`.
pub fn grid_arbitrage(inst: &MarketInstance) -> (f64, f64, Vec<f64>) {
    let m = inst.m();
    let pts = grid_points(2, 10.0, 1.0);
    let mut lp = LinearProgram::new();
    lp.add_var(1.0, -100.0, 100.0);
    for j in 0..m {
        lp.add_var(inst.ask[j], 0.0, 1.0);
    }
    for j in 0..m {
        lp.add_var(-inst.bid[j], 0.0, 1.0);
    }
    for x in &pts {
        let mut c = vec![(0usize, 1.0)];
        for (j, g) in inst.g.iter().enumerate() {
            let v = g.eval(x);
            if v != 0.0 {
                c.push((1 + j, v));
                c.push((1 + m + j, -v));
            }
        }
        lp.add_row(c, Relation::Ge, 0.0);
    }
    let sol = solve(&lp, &LpOptions::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    let y: Vec<f64> = (0..m).map(|j| sol.x[1 + j] - sol.x[1 + m + j]).collect();
    (sol.objective, sol.x[0], y)
}

pub struct ExoticFixture {
    pub chains: [OptionChain; 2],
    /// Call on the minimum, strike 1.
    pub exotic_a: CpwaFunction,
    pub quote_a: (f64, f64),
    /// Put on the minimum, strike 4.
    pub exotic_b: CpwaFunction,
    pub quote_b: (f64, f64),
}

impl ExoticFixture {
    pub fn base(&self) -> MarketInstance {
        chains_instance(&self.chains)
    }
    pub fn only_a(&self) -> MarketInstance {
        with_instrument(&self.base(), self.exotic_a.clone(), self.quote_a.0, self.quote_a.1)
    }
    pub fn only_b(&self) -> MarketInstance {
        with_instrument(&self.base(), self.exotic_b.clone(), self.quote_b.0, self.quote_b.1)
    }
    pub fn both(&self) -> MarketInstance {
        with_instrument(&self.only_a(), self.exotic_b.clone(), self.quote_b.0, self.quote_b.1)
    }
}

/// Two consistent chains plus a call-on-min and a put-on-min whose quotes
/// are each attainable alone but not together. The quotes are placed with
/// the integer-grid LP: the call-on-min sits at the top of its range, and
/// the put-on-min just outside the range left over once that is imposed.
pub fn exotic_fixture() -> ExoticFixture {
    let w1 = [1.0, 3.0, 5.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.5];
    let w2 = [2.0, 4.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.5];
    let chains = [integer_chain(&w1, 0.02), integer_chain(&w2, 0.02)];
    let base = chains_instance(&chains);
    let exotic_a = call_on_min(2, &[0, 1], 1.0).unwrap();
    let exotic_b = modelfree::cpwa::put_on_min(2, &[0, 1], 4.0).unwrap();
    let (_, a_hi) = integer_grid_range(&base, &exotic_a).unwrap();
    let quote_a = (a_hi - 0.02, a_hi);
    let (b_lo, b_hi) = integer_grid_range(&base, &exotic_b).unwrap();
    let with_a = with_instrument(&base, exotic_a.clone(), quote_a.0, quote_a.1);
    let (bc_lo, bc_hi) = integer_grid_range(&with_a, &exotic_b).unwrap();
    let quote_b = if b_hi - bc_hi > 0.06 {
        (bc_hi + 0.02, bc_hi + 0.04)
    } else if bc_lo - b_lo > 0.06 {
        (bc_lo - 0.04, bc_lo - 0.02)
    } else {
        panic!("fixture chains do not separate the exotics: [{b_lo}, {b_hi}] vs [{bc_lo}, {bc_hi}]");
    };
    ExoticFixture {
        chains,
        exotic_a,
        quote_a,
        exotic_b,
        quote_b,
    }
}
