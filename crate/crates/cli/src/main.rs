use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use modelfree::arbitrage::{repair_chains, DetectOptions, RepairOptions};
use modelfree::market::{exp1_family, exp1_instruments, labelled, random_family, random_instruments};
use modelfree::{
    accp, build_market, detect, ecp, extract_measure, price_band, AccpOptions, Algorithm, BoundsStatus, CpwaFunction,
    Domain, EcpOptions, Error, MarketInstance, MarketModelFamily, OptionChain, PayoffSpec,
};

#[derive(Parser)]
#[command(
    name = "modelfree",
    version,
    about = "Model-free price bounds and arbitrage checks for multi-asset options"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a market instance from a model family.
    GenMarket(GenArgs),
    /// Lower and upper price bounds of a payoff, optionally over a strike sweep.
    Bounds(BoundsArgs),
    /// Check a market instance for static arbitrage.
    Detect(DetectArgs),
    /// Minimally adjust single-asset option chains to remove arbitrage.
    Repair(RepairArgs),
    /// Extract a pricing measure attaining the upper bound.
    Measure(MeasureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Five assets on [0, 100], 439 instruments, four models.
    Exp1,
    /// As exp1 with only the first model (zero spreads).
    Single,
    /// Random parameters in the documented ranges.
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, conflicts_with = "family")]
    preset: Option<Preset>,
    /// JSON file with `family` (model family) and `instruments` (payoff list).
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Number of assets for the random preset.
    #[arg(long, default_value_t = 5)]
    dim: usize,
    /// Truncation level for the random preset.
    #[arg(long, default_value_t = 20.0)]
    upper: f64,
    #[arg(long, default_value_t = 4)]
    calls_per_asset: usize,
    #[arg(long, default_value_t = 2)]
    baskets: usize,
    #[arg(long, default_value_t = 2)]
    spreads: usize,
    #[arg(long, default_value_t = 1)]
    calls_on_min: usize,
    /// Also write the model family used, for reference pricing.
    #[arg(long)]
    family_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct FamilySpec {
    family: MarketModelFamily,
    instruments: Vec<PayoffSpec>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoChoice {
    Ecp,
    Accp,
    Both,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Defaults to 0.1 for ECP and 1 for ACCP.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.7)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.8)]
    zeta: f64,
    /// Truncation level of the separation box on the positive orthant.
    #[arg(long)]
    xbar: Option<f64>,
    /// Wall-clock budget per solve, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl SolverArgs {
    fn ecp(&self) -> EcpOptions {
        let d = EcpOptions::default();
        EcpOptions {
            epsilon: self.epsilon,
            tau: self.tau.unwrap_or(d.tau),
            delta: self.delta,
            xbar: self.xbar,
            time_limit: self.time_limit(),
            ..d
        }
    }

    fn accp(&self) -> AccpOptions {
        let d = AccpOptions::default();
        AccpOptions {
            epsilon: self.epsilon,
            tau: self.tau.unwrap_or(d.tau),
            delta: self.delta,
            gamma: self.gamma,
            zeta: self.zeta,
            time_limit: self.time_limit(),
            ..d
        }
    }

    fn time_limit(&self) -> Option<Duration> {
        self.time_limit.filter(|t| *t > 0.0).map(Duration::from_secs_f64)
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Payoff in text form, e.g. `call-on-max(1,2,3;K)`; `K` is the swept strike.
    #[arg(long)]
    payoff: String,
    #[arg(long, value_enum, default_value = "ecp")]
    algo: AlgoChoice,
    #[command(flatten)]
    solver: SolverArgs,
    /// Strike sweep `start:stop:step`, inclusive of `stop`.
    #[arg(long)]
    sweep: Option<String>,
    /// Model family JSON used for the reference bid/ask columns.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Overrides the reference family's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Solve every strike from scratch instead of reusing the support found
    /// at the first strike.
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the full detection report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    /// A chain JSON object or an array of them.
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    eta: f64,
    #[arg(long)]
    outlier_threshold: Option<f64>,
    /// Prices moved by more than this count as adjusted.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    payoff: String,
    #[arg(long, value_enum, default_value = "ecp")]
    algo: AlgoChoice,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Limit(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Limit(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serialisable");
    s.push(b'\n');
    s
}

fn thread_pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn gen_market(a: &GenArgs) -> CliResult<()> {
    let (family, specs) = match (a.preset, &a.family) {
        (_, Some(path)) => {
            let spec: FamilySpec = read_json(path)?;
            (spec.family, spec.instruments)
        }
        (Some(Preset::Exp1), None) | (Some(Preset::Single), None) => {
            let mut fam = exp1_family(a.seed, a.mc_samples)?;
            if matches!(a.preset, Some(Preset::Single)) {
                fam.models.truncate(1);
            }
            (fam, exp1_instruments().into_iter().map(|(_, s)| s).collect())
        }
        (Some(Preset::Random), None) => {
            let fam = random_family(a.dim, a.upper, a.seed, a.mc_samples)?;
            let specs = random_instruments(
                a.dim,
                a.calls_per_asset,
                a.baskets,
                a.spreads,
                a.calls_on_min,
                a.seed.wrapping_add(1),
            );
            (fam, specs)
        }
        (None, None) => return Err(Failure::Usage("give --preset or --family".into())),
    };
    let inst = build_market(&family, &labelled(specs))?;
    if let Some(p) = &a.family_out {
        fs::write(p, to_json(&family))?;
    }
    write_out(a.out.as_deref(), &to_json(&inst))?;
    eprintln!("{} assets, {} instruments", inst.d, inst.m());
    Ok(())
}

fn parse_sweep(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad sweep: {text}")))
        })
        .collect::<CliResult<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(Failure::Usage(format!("sweep must be start:stop:step, got {text}")));
    };
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(Failure::Usage(format!("empty or unbounded sweep: {text}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[derive(Serialize)]
struct BoundsRow {
    strike: Option<f64>,
    #[serde(rename = "LB")]
    lb: Option<f64>,
    #[serde(rename = "UB")]
    ub: Option<f64>,
    reference_bid: Option<f64>,
    reference_ask: Option<f64>,
    algorithm: String,
    lp_count: usize,
    milp_count: usize,
    agreement: Option<f64>,
    status: String,
}

struct Solved {
    ub: f64,
    lb: f64,
    lp: usize,
    milp: usize,
    status: String,
}

fn run_band(
    inst: &MarketInstance,
    f: &CpwaFunction,
    algo: Algorithm,
    solver: &SolverArgs,
    support: &[Vec<f64>],
) -> std::result::Result<Solved, Error> {
    let mut eo = solver.ecp();
    let mut ao = solver.accp();
    eo.initial_points = support.to_vec();
    ao.initial_points = support.to_vec();
    let b = price_band(inst, f, algo, &eo, &ao)?;
    let arb = [b.upper_run.status, b.lower_run.status].contains(&BoundsStatus::Arbitrage);
    Ok(Solved {
        ub: b.upper,
        lb: b.lower,
        lp: b.upper_run.lp_count + b.lower_run.lp_count,
        milp: b.upper_run.milp_count + b.lower_run.milp_count,
        status: if arb { "arbitrage".into() } else { "ok".into() },
    })
}

fn bounds(a: &BoundsArgs) -> CliResult<bool> {
    let inst: MarketInstance = read_json(&a.instance)?;
    inst.validate()?;
    let algos: Vec<Algorithm> = match a.algo {
        AlgoChoice::Ecp => vec![Algorithm::Ecp],
        AlgoChoice::Accp => vec![Algorithm::Accp],
        AlgoChoice::Both => vec![Algorithm::Ecp, Algorithm::Accp],
    };
    if algos.contains(&Algorithm::Accp) && inst.domain == Domain::PositiveOrthant {
        return Err(Failure::Usage("accp needs a box domain".into()));
    }
    let strikes: Vec<Option<f64>> = match &a.sweep {
        Some(s) => parse_sweep(s)?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let specs: Vec<PayoffSpec> = strikes
        .iter()
        .map(|k| PayoffSpec::parse(&a.payoff, *k))
        .collect::<modelfree::Result<_>>()?;
    let targets: Vec<CpwaFunction> = specs
        .iter()
        .map(|s| s.to_cpwa(inst.d))
        .collect::<modelfree::Result<_>>()?;
    let reference: Option<MarketModelFamily> = match &a.reference {
        Some(p) => {
            let mut fam: MarketModelFamily = read_json(p)?;
            if let Some(s) = a.seed {
                fam.seed = s;
            }
            Some(fam)
        }
        None => None,
    };
    let pool = thread_pool(a.workers)?;

    // the support found at the first strike seeds every other strike
    let support: Vec<Vec<f64>> = if a.no_warm_start || targets.len() < 2 {
        Vec::new()
    } else {
        let eo = a.solver.ecp();
        let ao = a.solver.accp();
        match algos[0] {
            Algorithm::Ecp => ecp(&inst, &targets[0], &eo).map(|r| r.support).unwrap_or_default(),
            Algorithm::Accp => accp(&inst, &targets[0], &ao).map(|r| r.support).unwrap_or_default(),
        }
    };

    let results: Vec<(Vec<std::result::Result<Solved, Error>>, Option<(f64, f64)>)> = pool.install(|| {
        targets
            .par_iter()
            .zip(&specs)
            .map(|(f, spec)| {
                let runs = algos
                    .iter()
                    .map(|&al| run_band(&inst, f, al, &a.solver, &support))
                    .collect();
                let refq = reference.as_ref().and_then(|fam| {
                    build_market(fam, &[("target".to_string(), spec.clone())])
                        .ok()
                        .map(|m| (m.bid[0], m.ask[0]))
                });
                (runs, refq)
            })
            .collect()
    });

    let mut order: Vec<usize> = (0..strikes.len()).collect();
    order.sort_by(|&i, &j| strikes[i].unwrap_or(0.0).total_cmp(&strikes[j].unwrap_or(0.0)));
    let mut limit_hit = false;
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in order {
        let (runs, refq) = &results[i];
        let agreement = match runs.as_slice() {
            [Ok(e), Ok(c)] => Some((e.ub - c.ub).abs()),
            _ => None,
        };
        for (al, run) in algos.iter().zip(runs) {
            let row = match run {
                Ok(s) => BoundsRow {
                    strike: strikes[i],
                    lb: Some(s.lb),
                    ub: Some(s.ub),
                    reference_bid: refq.map(|q| q.0),
                    reference_ask: refq.map(|q| q.1),
                    algorithm: al.to_string(),
                    lp_count: s.lp,
                    milp_count: s.milp,
                    agreement,
                    status: s.status.clone(),
                },
                Err(e) => {
                    limit_hit |= matches!(e, Error::ResourceLimit(_));
                    BoundsRow {
                        strike: strikes[i],
                        lb: None,
                        ub: None,
                        reference_bid: refq.map(|q| q.0),
                        reference_ask: refq.map(|q| q.1),
                        algorithm: al.to_string(),
                        lp_count: 0,
                        milp_count: 0,
                        agreement,
                        status: format!("error: {e}"),
                    }
                }
            };
            w.serialize(row).map_err(|e| Failure::Usage(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    write_out(a.out.as_deref(), &bytes)?;
    Ok(limit_hit)
}

fn detect_cmd(a: &DetectArgs) -> CliResult<bool> {
    let inst: MarketInstance = read_json(&a.instance)?;
    let opts = DetectOptions {
        ecp: a.solver.ecp(),
        accp: a.solver.accp(),
    };
    let d = detect(&inst, &opts)?;
    if let Some(p) = &a.out {
        fs::write(p, to_json(&d))?;
    }
    match &d.strategy {
        None => println!("no arbitrage"),
        Some(s) => io::stdout().write_all(&to_json(s))?,
    }
    Ok(!d.arbitrage_free)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChainInput {
    One(OptionChain),
    Many(Vec<OptionChain>),
}

fn repair(a: &RepairArgs) -> CliResult<()> {
    let (chains, single) = match read_json::<ChainInput>(&a.chain)? {
        ChainInput::One(c) => (vec![c], true),
        ChainInput::Many(v) => (v, false),
    };
    let opts = RepairOptions {
        eta: a.eta,
        outlier_threshold: a.outlier_threshold,
        ..Default::default()
    };
    let pool = thread_pool(a.workers)?;
    let results = pool.install(|| repair_chains(&chains, &opts));
    let mut repaired = Vec::with_capacity(results.len());
    let (mut count, mut total, mut largest) = (0, 0, 0.0f64);
    for (i, r) in results.into_iter().enumerate() {
        let r = r.map_err(|e| match e {
            Error::InvalidArgument(m) => Failure::Usage(format!("chain {i}: {m}")),
            e => Failure::Limit(format!("chain {i}: {e}")),
        })?;
        count += r.adjusted_count(a.tol);
        total += 4 * chains[i].strikes.len();
        largest = largest.max(r.max_adjustment());
        if r.min_mass < a.eta * (1.0 - 1e-9) {
            eprintln!("chain {i}: certificate minimum mass {:.3e} below eta", r.min_mass);
        }
        repaired.push(r);
    }
    println!("adjusted {count} of {total} prices, largest change {largest:.6}");
    let bytes = if single {
        to_json(&repaired[0])
    } else {
        to_json(&repaired)
    };
    write_out(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct MeasureReport {
    algorithm: Algorithm,
    phi_lower: f64,
    phi_upper: f64,
    value: f64,
    atoms: Vec<modelfree::bounds::Atom>,
}

fn measure(a: &MeasureArgs) -> CliResult<()> {
    let inst: MarketInstance = read_json(&a.instance)?;
    let f = PayoffSpec::parse(&a.payoff, None)?.to_cpwa(inst.d)?;
    let r = match a.algo {
        AlgoChoice::Ecp => ecp(&inst, &f, &a.solver.ecp())?,
        AlgoChoice::Accp => accp(&inst, &f, &a.solver.accp())?,
        AlgoChoice::Both => return Err(Failure::Usage("measure takes a single algorithm".into())),
    };
    if !r.support_interior {
        eprintln!("warning: position box was active, the measure may not attain the bound");
    }
    let mu = extract_measure(&inst, &f, &r.support, &Default::default())?;
    let report = MeasureReport {
        algorithm: r.algorithm,
        phi_lower: r.phi_lower,
        phi_upper: r.phi_upper,
        value: mu.value,
        atoms: mu.atoms,
    };
    write_out(a.out.as_deref(), &to_json(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenMarket(a) => gen_market(a).map(|_| 0),
        Command::Bounds(a) => bounds(a).map(|limit| if limit { 3 } else { 0 }),
        Command::Detect(a) => detect_cmd(a).map(|arb| if arb { 1 } else { 0 }),
        Command::Repair(a) => repair(a).map(|_| 0),
        Command::Measure(a) => measure(a).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Limit(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
