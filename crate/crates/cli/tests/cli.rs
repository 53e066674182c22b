use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use modelfree::cpwa::{asset, vanilla_call};
use modelfree::{Domain, MarketInstance};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modelfree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_instance(path: &Path, inst: &MarketInstance) {
    fs::write(path, serde_json::to_vec(inst).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn random_market_sweep_writes_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("m.json");
    let fam = dir.path().join("fam.json");
    let csv = dir.path().join("b.csv");
    let out = run(&[
        "gen-market",
        "--preset",
        "random",
        "--dim",
        "2",
        "--calls-per-asset",
        "2",
        "--baskets",
        "1",
        "--spreads",
        "1",
        "--calls-on-min",
        "0",
        "--mc-samples",
        "2000",
        "--seed",
        "3",
        "--out",
        s(&inst),
        "--family-out",
        s(&fam),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "bounds",
        "--instance",
        s(&inst),
        "--payoff",
        "call-on-max(1,2;K)",
        "--algo",
        "both",
        "--sweep",
        "0:10:5",
        "--reference",
        s(&fam),
        "--workers",
        "2",
        "--out",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "strike",
            "LB",
            "UB",
            "reference_bid",
            "reference_ask",
            "algorithm",
            "lp_count",
            "milp_count",
            "agreement",
            "status"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let strikes: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(strikes.windows(2).all(|w| w[0] <= w[1]));
    for r in &rows {
        let (lb, ub): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let (rb, ra): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(lb <= ub + 1e-9);
        // the reference models price inside the model-free band
        assert!(rb >= lb - 2e-3 && ra <= ub + 2e-3, "{r:?}");
    }
}

#[test]
fn single_model_preset_has_no_spread() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let out = run(&[
        "gen-market",
        "--preset",
        "single",
        "--mc-samples",
        "500",
        "--out",
        s(&path),
    ]);
    assert!(out.status.success());
    let inst: MarketInstance = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert_eq!(inst.d, 5);
    assert!(inst.bid.iter().zip(&inst.ask).all(|(b, a)| b == a));
}

#[test]
fn detect_exit_code_tracks_arbitrage() {
    let dir = tempfile::tempdir().unwrap();
    let g = vec![asset(1, 0).unwrap(), vanilla_call(1, 0, 2.0).unwrap()];
    let dom = Domain::Box { upper: vec![20.0] };
    let bad = MarketInstance::new(1, dom.clone(), g.clone(), vec![5.0, 2.4], vec![5.0, 2.5]).unwrap();
    let good = MarketInstance::new(1, dom, g, vec![5.0, 3.0], vec![5.0, 3.2]).unwrap();
    let (pb, pg) = (dir.path().join("bad.json"), dir.path().join("good.json"));
    write_instance(&pb, &bad);
    write_instance(&pg, &good);
    let out = run(&["detect", "--instance", s(&pb)]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["detect", "--instance", s(&pg)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no arbitrage"));
}

#[test]
fn repair_reports_adjustments() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("c.json");
    fs::write(
        &chain,
        r#"{"strikes":[1,2],"call":{"bid":[0.4,0.6],"ask":[0.5,0.7]},"put":{"bid":[0,0],"ask":[5,5]}}"#,
    )
    .unwrap();
    let out = run(&["repair", "--chain", s(&chain)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("adjusted"), "{text}");
}

#[test]
fn bad_input_is_a_usage_error() {
    let out = run(&["bounds", "--instance", "/nonexistent.json", "--payoff", "call(1;K)"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["repair"]);
    assert_eq!(out.status.code(), Some(2));
}
