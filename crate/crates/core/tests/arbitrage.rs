mod common;

use common::{exotic_fixture, grid_arbitrage, integer_chain};
use modelfree::arbitrage::{
    certificate_price, chain_to_instance, detect, repair_chain, repair_chains, DetectOptions, OptionChain, OptionKind,
    Quotes, RepairOptions,
};
use modelfree::cpwa::{asset, vanilla_call};
use modelfree::market::TruncatedLogNormal;
use modelfree::{Domain, MarketInstance};
use rand::Rng;

fn check_certificate(r: &modelfree::RepairResult) {
    let mass: f64 = r.certificate.iter().map(|p| p.1).sum();
    assert!((mass - 1.0).abs() <= 1e-9);
    let ch = &r.adjusted;
    for (j, &k) in ch.strikes.iter().enumerate() {
        // direct evaluation of the certificate prices
        let c: f64 = r.certificate.iter().map(|(x, p)| p * (x - k).max(0.0)).sum();
        let p: f64 = r.certificate.iter().map(|(x, p)| p * (k - x).max(0.0)).sum();
        assert!(c >= ch.call.bid[j] - 1e-9 && c <= ch.call.ask[j] + 1e-9);
        assert!(p >= ch.put.bid[j] - 1e-9 && p <= ch.put.ask[j] + 1e-9);
    }
}

fn noisy_chain(seed: u64) -> OptionChain {
    let mut rng = common::rng(seed);
    let m = TruncatedLogNormal::new(rng.gen_range(1.5..2.5), 0.1, 40.0).unwrap();
    let strikes: Vec<f64> = (1..=8).map(|k| k as f64 * 1.5).collect();
    let mut q = |price: f64| {
        let mid = (price + rng.gen_range(-0.4..0.4f64)).max(0.0);
        let h = rng.gen_range(0.0..0.05);
        ((mid - h).max(0.0), mid + h)
    };
    let calls: Vec<(f64, f64)> = strikes.iter().map(|&k| q(m.call_price(k))).collect();
    let puts: Vec<(f64, f64)> = strikes.iter().map(|&k| q(m.put_price(k))).collect();
    OptionChain {
        strikes,
        call: Quotes {
            bid: calls.iter().map(|c| c.0).collect(),
            ask: calls.iter().map(|c| c.1).collect(),
        },
        put: Quotes {
            bid: puts.iter().map(|c| c.0).collect(),
            ask: puts.iter().map(|c| c.1).collect(),
        },
        xbar: None,
    }
}

#[test]
fn consistent_market_is_arbitrage_free() {
    let ch = integer_chain(&[1.0, 2.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0, 0.5, 0.5, 0.5], 0.01);
    let inst = chain_to_instance(&ch).unwrap();
    let d = detect(&inst, &DetectOptions::default()).unwrap();
    assert!(d.arbitrage_free);
    assert!(d.bounds.phi_lower > -1e-3);
    assert!(d.bounds.phi_upper.abs() <= 1e-12);
}

#[test]
fn call_below_intrinsic_value_is_detected() {
    // forward at 5, call struck at 2 offered at 2.5
    let g = vec![asset(1, 0).unwrap(), vanilla_call(1, 0, 2.0).unwrap()];
    let box_inst = MarketInstance::new(
        1,
        Domain::Box { upper: vec![20.0] },
        g.clone(),
        vec![5.0, 2.4],
        vec![5.0, 2.5],
    )
    .unwrap();
    let orth = MarketInstance::new(1, Domain::PositiveOrthant, g, vec![5.0, 2.4], vec![5.0, 2.5]).unwrap();
    for inst in [box_inst, orth] {
        let d = detect(&inst, &DetectOptions::default()).unwrap();
        assert!(!d.arbitrage_free);
        let s = d.strategy.unwrap();
        assert!(s.cost < 0.0);
        // the certified portfolio never pays a negative amount
        for i in 0..=400 {
            let x = [i as f64 * 0.05];
            assert!(inst.portfolio_value(s.c, &s.y, &x) >= -1e-9);
        }
    }
}

#[test]
fn monotonicity_violation_is_repaired() {
    let ch = OptionChain {
        strikes: vec![1.0, 2.0],
        call: Quotes {
            bid: vec![0.4, 0.6],
            ask: vec![0.5, 0.7],
        },
        put: Quotes {
            bid: vec![0.0, 0.0],
            ask: vec![5.0, 5.0],
        },
        xbar: None,
    };
    assert!(
        !detect(&chain_to_instance(&ch).unwrap(), &DetectOptions::default())
            .unwrap()
            .arbitrage_free
    );
    let r = repair_chain(&ch, &RepairOptions::default()).unwrap();
    // on the support {0, 1, 2, 4}: C(1) = p2 + 3 p4 and C(2) = 2 p4, where
    // p2 and p4 are the masses at 2 and 4; brute force over both
    let mut best = f64::INFINITY;
    for i in 0..=1000 {
        for k in 0..=200 {
            let (p4, p2) = (i as f64 / 1000.0, k as f64 / 1000.0);
            if p4 + p2 > 1.0 {
                continue;
            }
            let (c1, c2) = (p2 + 3.0 * p4, 2.0 * p4);
            let cost = (c1 - 0.5).max(0.0) + (0.4 - c1).max(0.0) + (c2 - 0.7).max(0.0) + (0.6 - c2).max(0.0);
            best = best.min(cost);
        }
    }
    assert!((best - 4.0 / 15.0).abs() < 1e-3);
    assert!(
        (r.total_adjustment - 4.0 / 15.0).abs() <= 1e-4,
        "{}",
        r.total_adjustment
    );
    check_certificate(&r);
    assert!(r.min_mass >= 1e-6 - 1e-15);
    let d = detect(&chain_to_instance(&r.adjusted).unwrap(), &DetectOptions::default()).unwrap();
    assert!(d.arbitrage_free);
}

#[test]
fn repair_is_idempotent_and_minimal() {
    let chains: Vec<OptionChain> = (0..10).map(noisy_chain).collect();
    let results = repair_chains(&chains, &RepairOptions::default());
    for (ch, r) in chains.iter().zip(results) {
        let r = r.unwrap();
        check_certificate(&r);
        let again = repair_chain(&r.adjusted, &RepairOptions::default()).unwrap();
        assert!(
            again.total_adjustment <= 1e-9,
            "second repair moved {}",
            again.total_adjustment
        );
        // narrowing any moved quote by 1e-4 pushes the certificate outside
        for (j, &k) in ch.strikes.iter().enumerate() {
            let c = certificate_price(&r.certificate, OptionKind::Call, k);
            let p = certificate_price(&r.certificate, OptionKind::Put, k);
            if r.call_minus[j] > 1e-4 {
                assert!(c < r.adjusted.call.bid[j] + 1e-4);
            }
            if r.call_plus[j] > 1e-4 {
                assert!(c > r.adjusted.call.ask[j] - 1e-4);
            }
            if r.put_minus[j] > 1e-4 {
                assert!(p < r.adjusted.put.bid[j] + 1e-4);
            }
            if r.put_plus[j] > 1e-4 {
                assert!(p > r.adjusted.put.ask[j] - 1e-4);
            }
        }
        let total: f64 = [&r.call_minus, &r.call_plus, &r.put_minus, &r.put_plus]
            .iter()
            .flat_map(|v| v.iter())
            .sum();
        assert!((total - r.total_adjustment).abs() <= 1e-9);
    }
}

#[test]
fn outlier_filter_drops_a_wild_quote() {
    let mut ch = integer_chain(&[1.0, 2.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0, 0.5, 0.5, 0.5], 0.01);
    ch.call.bid[2] = 6.0;
    ch.call.ask[2] = 6.1;
    let plain = repair_chain(&ch, &RepairOptions::default()).unwrap();
    let filtered = repair_chain(
        &ch,
        &RepairOptions {
            outlier_threshold: Some(0.5),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(filtered.dropped.contains(&(OptionKind::Call, 2)));
    assert!(filtered.total_adjustment < plain.total_adjustment);
    check_certificate(&filtered);
}

#[test]
fn exotic_fixture_needs_both_quotes() {
    let fx = exotic_fixture();
    // oracle: the grid LP finds a negative-cost portfolio only for the pair
    assert!(grid_arbitrage(&fx.only_a()).0 > -1e-9);
    assert!(grid_arbitrage(&fx.only_b()).0 > -1e-9);
    let (cost, c, y) = grid_arbitrage(&fx.both());
    assert!(cost < -1e-4);
    let both = fx.both();
    for x in common::grid_points(2, 10.0, 0.25) {
        assert!(both.portfolio_value(c, &y, &x) >= -1e-9);
    }
    let opts = DetectOptions::default();
    assert!(detect(&fx.only_a(), &opts).unwrap().arbitrage_free);
    assert!(detect(&fx.only_b(), &opts).unwrap().arbitrage_free);
    let d = detect(&both, &opts).unwrap();
    assert!(!d.arbitrage_free);
    assert!(d.strategy.unwrap().cost < 0.0);
}
