//! Batch orchestration: flag/config-file parsing, seed derivation,
//! experiment dispatch, CSV emission, and the structured run report.
//!
//! Outputs are a pure function of `(config, seed)`: replicates fan out
//! over a worker pool but merge by replicate index, so parallel and
//! serial runs emit byte-identical files. The exit status encodes the
//! statistical outcome (0 pass, 1 statistical failure, 2 usage error,
//! 3 runtime/data error) so CI can gate on it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heavytraffic::{
    lambda_n, run_mm1_tandem_stage, scaled_departure, HeavyTrafficConfig, COMMUTATION_TOL,
    MACRO_DT,
};
use crate::paths::{
    counting_path, make_grid, sample_brownian, sample_poisson_events, ArrivalSpec, Path, Seed,
};
use crate::reflection::{brute_force_reflect, reflect_under, skorokhod_reflect, EPS_FP};
use crate::stats::{
    increment_normality, independence_check, ks_test, moment_check, CdfRef, TestReport,
};
use crate::tandem::{run_burke, run_coupling, run_tandem, sup_distance, TandemConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_STAT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Burke,
    Tandem,
    Couple,
    Heavy,
    Selftest,
}

impl Experiment {
    fn name(&self) -> &'static str {
        match self {
            Experiment::Burke => "burke",
            Experiment::Tandem => "tandem",
            Experiment::Couple => "couple",
            Experiment::Heavy => "heavy",
            Experiment::Selftest => "selftest",
        }
    }
}

/// Fully resolved run configuration, after merging defaults, config
/// file, and flags (flags win).
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub c: f64,
    pub dt: f64,
    pub horizon: f64,
    pub stations: usize,
    pub replicates: usize,
    pub arrival: ArrivalSpec<f64>,
    pub scaling_n: usize,
    pub seed: u64,
    /// Not echoed into the report: outputs must be byte-identical no
    /// matter where they are written.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub alpha: f64,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Service drift / workload parameter c.
    #[arg(long = "c")]
    c: Option<f64>,
    /// Grid step.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of tandem stations.
    #[arg(long)]
    stations: Option<usize>,
    /// Number of Monte Carlo replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Initial arrival process: zero | bm | drifted:MU,SIGMA | ou:THETA,SIGMA |
    /// sin:AMP,PERIOD | file:PATH.
    #[arg(long)]
    arrival: Option<String>,
    /// Heavy-traffic scaling index n.
    #[arg(long = "scaling-n")]
    scaling_n: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significance level for distributional tests.
    #[arg(long)]
    alpha: Option<f64>,
    /// Flat key = value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(
    name = "tandemq",
    about = "Monte Carlo experiments for tandem Brownian queues"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary Brownian queue: departure law and queue/departure independence.
    Burke(CommonArgs),
    /// Tandem chain: recentered final departure vs the Brownian limit.
    Tandem(CommonArgs),
    /// Two-chain coupling experiment with per-station sup-distances.
    Couple(CommonArgs),
    /// Discrete M/M/1 stage, diffusive rescaling, commutation identity.
    Heavy(CommonArgs),
    /// Deterministic reflection-kernel verification suites.
    Selftest(CommonArgs),
}

fn parse_kv_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InputData(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InputData(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn file_value<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::InvalidArgument(format!("config key `{key}`: cannot parse `{raw}`"))
        }),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "c",
    "dt",
    "horizon",
    "stations",
    "replicates",
    "arrival",
    "scaling-n",
    "seed",
    "out",
    "alpha",
];

/// Merge defaults, config-file values, and flags into a validated
/// [`RunConfig`]. Flags override file values.
pub fn parse_config(experiment: Experiment, args: &CommonArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => parse_kv_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(unknown) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "config file: unknown key `{unknown}`"
        )));
    }

    let c = args.c.or(file_value(&file, "c")?).unwrap_or(1.0);
    let dt = args.dt.or(file_value(&file, "dt")?).unwrap_or(1e-3);
    let horizon = args.horizon.or(file_value(&file, "horizon")?).unwrap_or(1.0);
    let stations = args.stations.or(file_value(&file, "stations")?).unwrap_or(100);
    let replicates = args
        .replicates
        .or(file_value(&file, "replicates")?)
        .unwrap_or(1000);
    let arrival_str: Option<String> = args.arrival.clone().or(file.get("arrival").cloned());
    let arrival = match arrival_str {
        Some(s) => ArrivalSpec::parse(&s)?,
        None => ArrivalSpec::Zero,
    };
    let scaling_n = args
        .scaling_n
        .or(file_value(&file, "scaling-n")?)
        .unwrap_or(10_000);
    let seed = args.seed.or(file_value(&file, "seed")?).unwrap_or(0);
    let out_dir = args
        .out
        .clone()
        .or(file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tandemq-out"));
    let alpha = args.alpha.or(file_value(&file, "alpha")?).unwrap_or(0.01);

    let config = RunConfig {
        experiment,
        c,
        dt,
        horizon,
        stations,
        replicates,
        arrival,
        scaling_n,
        seed,
        out_dir,
        alpha,
    };
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(config: &RunConfig) -> Result<()> {
    if !(config.c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {}", config.c)));
    }
    make_grid(config.dt, config.horizon)?;
    if config.stations == 0 {
        return Err(Error::InvalidArgument("stations must be at least 1".into()));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {}",
            config.alpha
        )));
    }
    if config.experiment == Experiment::Heavy {
        lambda_n(config.c, config.scaling_n)?;
        if config.horizon < MACRO_DT {
            return Err(Error::InvalidArgument(format!(
                "heavy horizon must be at least {MACRO_DT}"
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    experiment: &'static str,
    config: &'a RunConfig,
    reports: &'a [TestReport],
    all_pass: bool,
    wall_clock_secs: f64,
}

fn fmt_value(v: f64) -> String {
    // 17 significant digits: round-trips every f64 exactly.
    format!("{v:.16e}")
}

fn write_paths_csv(dir: &std::path::Path, name: &str, paths: &[Path<f64>]) -> Result<()> {
    let file = fs::File::create(dir.join(format!("paths_{name}.csv")))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "replicate,t,value")?;
    for (rep, path) in paths.iter().enumerate() {
        for i in 0..path.len() {
            writeln!(
                w,
                "{},{},{}",
                rep,
                fmt_value(path.grid().time_at(i)),
                fmt_value(path.at(i))
            )?;
        }
    }
    Ok(())
}

fn write_report(dir: &std::path::Path, config: &RunConfig, reports: &[TestReport], started: Instant) -> Result<bool> {
    let all_pass = reports.iter().all(|r| r.pass);
    let report = RunReport {
        experiment: config.experiment.name(),
        config,
        reports,
        all_pass,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InputData(format!("report serialization: {e}")))?;
    fs::write(dir.join("report.json"), text + "\n")?;
    Ok(all_pass)
}

/// Run the experiment and write its outputs. Returns the process exit
/// status.
pub fn run_experiment(config: &RunConfig) -> i32 {
    match run_experiment_inner(config) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_STAT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn run_experiment_inner(config: &RunConfig) -> Result<bool> {
    let started = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let reports = match config.experiment {
        Experiment::Burke => burke_experiment(config)?,
        Experiment::Tandem => tandem_experiment(config)?,
        Experiment::Couple => couple_experiment(config)?,
        Experiment::Heavy => heavy_experiment(config)?,
        Experiment::Selftest => selftest_reports(Seed::new(config.seed)),
    };
    write_report(&config.out_dir, config, &reports, started)
}

fn burke_experiment(config: &RunConfig) -> Result<Vec<TestReport>> {
    let grid = make_grid(config.dt, config.horizon)?;
    let seed = Seed::new(config.seed);
    let results: Vec<_> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| run_burke(0.0, config.c, grid, seed.child(&[rep as u64])))
        .collect::<Result<_>>()?;

    let recentered: Vec<Path<f64>> = results
        .iter()
        .map(|r| r.recentered_departure.clone())
        .collect();
    let half = config.horizon / 2.0;
    let mut reports = vec![
        increment_normality(&recentered, (0.0, half), 0.0, 1.0, config.alpha)?,
        increment_normality(&recentered, (half, config.horizon), 0.0, 1.0, config.alpha)?,
    ];
    let first_half: Vec<f64> = recentered
        .iter()
        .map(|p| p.value_at(half).unwrap() - p.first())
        .collect();
    let second_half: Vec<f64> = recentered.iter().map(|p| p.last() - p.value_at(half).unwrap()).collect();
    reports.push(moment_check(&first_half, 0.0, half)?);
    reports.push(moment_check(&second_half, 0.0, half)?);
    let q_final: Vec<f64> = results.iter().map(|r| r.queue_length.last()).collect();
    let mut indep = independence_check(&q_final, &first_half)?;
    indep.name = "independence of Q_T and pre-T departure increment".to_string();
    reports.push(indep);

    write_paths_csv(&config.out_dir, "recentered_departure", &recentered)?;
    Ok(reports)
}

fn tandem_experiment(config: &RunConfig) -> Result<Vec<TestReport>> {
    let grid = make_grid(config.dt, config.horizon)?;
    let tandem_config = TandemConfig {
        c: config.c,
        n_stations: config.stations,
        grid,
        arrival: config.arrival.clone(),
        seed: Seed::new(config.seed),
        replicates: config.replicates,
    };
    let finals: Vec<Path<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let cfg = tandem_config.for_replicate(rep);
            let chain = run_tandem(&cfg)?;
            let last = chain.last().unwrap();
            // Recenter by the cumulative workload: A^N(0) = -sum E^i.
            last.shift(-last.first())
        })
        .collect::<Result<_>>()?;

    let half = config.horizon / 2.0;
    let reports = vec![
        increment_normality(&finals, (0.0, half), 0.0, 1.0, config.alpha)?,
        increment_normality(&finals, (half, config.horizon), 0.0, 1.0, config.alpha)?,
        moment_check(
            &finals.iter().map(|p| p.last() - p.first()).collect::<Vec<_>>(),
            0.0,
            config.horizon,
        )?,
    ];
    write_paths_csv(&config.out_dir, "recentered_final", &finals)?;
    Ok(reports)
}

fn couple_experiment(config: &RunConfig) -> Result<Vec<TestReport>> {
    let grid = make_grid(config.dt, config.horizon)?;
    let tandem_config = TandemConfig {
        c: config.c,
        n_stations: config.stations,
        grid,
        arrival: config.arrival.clone(),
        seed: Seed::new(config.seed),
        replicates: config.replicates,
    };
    let records: Vec<_> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| run_coupling(&tandem_config.for_replicate(rep)))
        .collect::<Result<_>>()?;

    let file = fs::File::create(config.out_dir.join("deltas.csv"))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "replicate,station,delta,coupled")?;
    for (rep, record) in records.iter().enumerate() {
        for (station, &delta) in record.deltas.iter().enumerate() {
            let coupled_here = record.coupled_at.is_some_and(|n| station >= n);
            writeln!(
                w,
                "{},{},{},{}",
                rep,
                station,
                fmt_value(delta),
                u8::from(coupled_here)
            )?;
        }
    }
    drop(w);

    let mut worst_increase = 0.0f64;
    for record in &records {
        for pair in record.deltas.windows(2) {
            worst_increase = worst_increase.max(pair[1] - pair[0]);
        }
    }
    let coupled_fraction =
        records.iter().filter(|r| r.coupled).count() as f64 / records.len() as f64;
    let reports = vec![
        TestReport {
            name: "delta monotonicity".to_string(),
            statistic: worst_increase,
            threshold: EPS_FP,
            p_value: None,
            sample_size: records.len(),
            pass: worst_increase <= EPS_FP,
            notes: "largest per-station increase of delta_n across replicates".to_string(),
        },
        TestReport {
            name: "terminal coupling fraction".to_string(),
            statistic: coupled_fraction,
            threshold: 0.0,
            p_value: None,
            sample_size: records.len(),
            pass: true,
            notes: format!(
                "informational: fraction of replicates bitwise-coupled by station {}",
                config.stations
            ),
        },
    ];
    Ok(reports)
}

fn heavy_experiment(config: &RunConfig) -> Result<Vec<TestReport>> {
    let n = config.scaling_n;
    let seed = Seed::new(config.seed);
    let lambda = lambda_n(config.c, n)?;
    let mut reports = Vec::new();

    // Lemma-1 marginal: scaled Poisson(1) value at the horizon.
    let nf = n as f64;
    let coarse = make_grid(nf * MACRO_DT, nf * config.horizon)?;
    let scaled_values: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let events = sample_poisson_events(
                1.0,
                nf * config.horizon,
                seed.child(&[1, rep as u64]),
            )?;
            let path = counting_path(&events, coarse)?;
            let scaled = crate::heavytraffic::diffusive_scale(&path, n, 1.0)?;
            Ok(scaled.last())
        })
        .collect::<Result<_>>()?;
    let mut ks = ks_test(
        &scaled_values,
        CdfRef::Normal {
            mean: 0.0,
            var: config.horizon,
        },
        config.alpha,
    )?;
    ks.name = format!("scaled Poisson marginal at t = {} (n = {n})", config.horizon);
    reports.push(ks);

    // Commutation identity over a bounded number of stage replicates.
    let commutation_reps = config.replicates.min(50);
    let gaps: Vec<f64> = (0..commutation_reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = HeavyTrafficConfig {
                c: config.c,
                n,
                horizon: config.horizon,
                seed: seed.child(&[2, rep as u64]),
                replicates: 1,
            };
            Ok(scaled_departure(&cfg)?.commutation_gap)
        })
        .collect::<Result<_>>()?;
    let max_gap = gaps.iter().cloned().fold(0.0f64, f64::max);
    reports.push(TestReport {
        name: "scaling/queueing commutation identity".to_string(),
        statistic: max_gap,
        threshold: COMMUTATION_TOL,
        p_value: None,
        sample_size: commutation_reps,
        pass: max_gap <= COMMUTATION_TOL,
        notes: "sup gap between scale-then-queue and queue-then-scale".to_string(),
    });

    // Discrete Burke: departure rate of the stage.
    let stage = run_mm1_tandem_stage(&HeavyTrafficConfig {
        c: config.c,
        n,
        horizon: config.horizon,
        seed: seed.child(&[3]),
        replicates: 1,
    })?;
    let span = nf * config.horizon;
    let rate = (stage.departure.last() - stage.departure.first()) / span;
    let band = 4.0 * (lambda / span).sqrt();
    reports.push(TestReport {
        name: "discrete Burke departure rate".to_string(),
        statistic: (rate - lambda).abs(),
        threshold: band,
        p_value: None,
        sample_size: 1,
        pass: (rate - lambda).abs() <= band,
        notes: format!("observed rate {rate:.6}, lambda_n = {lambda:.6}"),
    });

    let scaled_paths: Vec<Path<f64>> = (0..commutation_reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = HeavyTrafficConfig {
                c: config.c,
                n,
                horizon: config.horizon,
                seed: seed.child(&[2, rep as u64]),
                replicates: 1,
            };
            Ok(scaled_departure(&cfg)?.path)
        })
        .collect::<Result<_>>()?;
    write_paths_csv(&config.out_dir, "scaled_departure", &scaled_paths)?;
    Ok(reports)
}

/// Deterministic verification suites for the reflection kernel: the
/// oracle equivalence, the dual-form identity, and the Lipschitz bound,
/// each over 1000 seeded random path configurations.
pub fn selftest_reports(seed: Seed) -> Vec<TestReport> {
    let cases = 1000usize;
    let mut oracle_equal = true;
    let mut dual_gap = 0.0f64;
    let mut lipschitz_excess = f64::NEG_INFINITY;
    for case in 0..cases {
        let sub = seed.child(&[case as u64]);
        let n_steps = 1 + (sub.child(&[9]).master() % 512) as usize;
        let grid = make_grid(1.0 / n_steps as f64, 1.0).unwrap();
        let f1 = sample_brownian(grid, 0.0, 1.0, 0.8, sub.child(&[0])).unwrap();
        let f2 = sample_brownian(grid, -0.2, 1.4, 0.2, sub.child(&[1])).unwrap();
        let g = sample_brownian(grid, 0.5, 0.9, 0.0, sub.child(&[2])).unwrap();

        let kernel = reflect_under(&f1, &g).unwrap();
        let oracle = brute_force_reflect(&f1, &g).unwrap();
        oracle_equal &= kernel.bitwise_eq(&oracle);

        let dual = f1.sub(&skorokhod_reflect(&f1.sub(&g).unwrap())).unwrap();
        dual_gap = dual_gap.max(sup_distance(&kernel, &dual).unwrap());

        let l2 = reflect_under(&f2, &g).unwrap();
        let lhs = sup_distance(&kernel, &l2).unwrap();
        let rhs = sup_distance(&f1, &f2).unwrap();
        lipschitz_excess = lipschitz_excess.max(lhs - rhs);
    }
    vec![
        TestReport {
            name: "reflection oracle equivalence".to_string(),
            statistic: if oracle_equal { 0.0 } else { 1.0 },
            threshold: 0.0,
            p_value: None,
            sample_size: cases,
            pass: oracle_equal,
            notes: "kernel vs O(n^2) oracle, bitwise, n_steps <= 512".to_string(),
        },
        TestReport {
            name: "dual-form reflection identity".to_string(),
            statistic: dual_gap,
            threshold: EPS_FP,
            p_value: None,
            sample_size: cases,
            pass: dual_gap <= EPS_FP,
            notes: "sup |L_f(g) - (f - R(f - g))|".to_string(),
        },
        TestReport {
            name: "Lipschitz bound in the barrier".to_string(),
            statistic: lipschitz_excess,
            threshold: EPS_FP,
            p_value: None,
            sample_size: cases,
            pass: lipschitz_excess <= EPS_FP,
            notes: "max of sup|L_f1(g) - L_f2(g)| - sup|f1 - f2|".to_string(),
        },
    ]
}

/// Parse argv and run. Returns the process exit status.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let (experiment, args) = match &cli.command {
        Command::Burke(a) => (Experiment::Burke, a),
        Command::Tandem(a) => (Experiment::Tandem, a),
        Command::Couple(a) => (Experiment::Couple, a),
        Command::Heavy(a) => (Experiment::Heavy, a),
        Command::Selftest(a) => (Experiment::Selftest, a),
    };
    let config = match parse_config(experiment, args) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    run_experiment(&config)
}
