//! Acceptance suite. Each test prints one `criterion N: PASS — ...`
//! line on success; a failed assertion marks the criterion red.

use std::time::Instant;

use rayon::prelude::*;
use statrs::distribution::{DiscreteCDF, Poisson};

use tandemq::cli::{self, Experiment, RunConfig};
use tandemq::heavytraffic::{
    run_mm1_tandem_stage, scaled_departure, HeavyTrafficConfig, COMMUTATION_TOL, MACRO_DT,
};
use tandemq::paths::{
    counting_path, make_grid, purpose, sample_arrival, sample_brownian, sample_poisson_events,
    Path, TimeGrid,
};
use tandemq::reflection::{queue_op, EPS_FP};
use tandemq::stats::{increment_normality, independence_check, ks_test, moment_check, CdfRef};
use tandemq::tandem::{
    run_burke, run_coupling, run_tandem, ServiceRealization, TandemConfig,
};
use tandemq::{ArrivalSpec, Seed};

fn budget(started: Instant, limit_secs: f64, label: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < limit_secs,
        "{label}: runtime {elapsed:.1}s exceeds the {limit_secs}s budget"
    );
}

#[test]
fn reflection_kernel_matches_oracle_bitwise() {
    let started = Instant::now();
    let reports = cli::selftest_reports(Seed::new(0));
    let r = &reports[0];
    assert!(r.pass, "{}: statistic {}", r.name, r.statistic);
    budget(started, 5.0, "criterion 1");
    println!(
        "criterion 1: PASS — kernel equals the O(n^2) oracle bitwise on {} random pairs",
        r.sample_size
    );
}

#[test]
fn reflection_dual_form_identity_holds() {
    let started = Instant::now();
    let reports = cli::selftest_reports(Seed::new(1));
    let r = &reports[1];
    assert!(
        r.pass,
        "{}: max gap {} > {}",
        r.name, r.statistic, r.threshold
    );
    budget(started, 5.0, "criterion 2");
    println!(
        "criterion 2: PASS — L_f(g) = f - R(f - g) within {:.0e} on {} random pairs (max gap {:.2e})",
        r.threshold, r.sample_size, r.statistic
    );
}

#[test]
fn reflection_is_lipschitz_in_the_barrier() {
    let started = Instant::now();
    let reports = cli::selftest_reports(Seed::new(2));
    let r = &reports[2];
    assert!(
        r.pass,
        "{}: max excess {} > {}",
        r.name, r.statistic, r.threshold
    );
    budget(started, 5.0, "criterion 3");
    println!(
        "criterion 3: PASS — sup|L_f1(g) - L_f2(g)| <= sup|f1 - f2| + {:.0e} on {} random triples",
        r.threshold, r.sample_size
    );
}

/// Criteria 4 and 5 share one batch of stationary-queue replicates:
/// c = 1, x = 0, dt = 1e-3, T = 2, N = 2000.
#[test]
fn stationary_departure_is_brownian_and_independent_of_queue() {
    let started = Instant::now();
    let n_reps = 2000usize;
    let grid = make_grid(1e-3, 2.0).unwrap();
    let seed = Seed::new(41);
    let results: Vec<_> = (0..n_reps)
        .into_par_iter()
        .map(|rep| run_burke(0.0, 1.0, grid, seed.child(&[rep as u64])).unwrap())
        .collect();
    let recentered: Vec<Path<f64>> = results
        .iter()
        .map(|r| r.recentered_departure.clone())
        .collect();

    let ks_a = increment_normality(&recentered, (0.0, 1.0), 0.0, 1.0, 0.01).unwrap();
    let ks_b = increment_normality(&recentered, (1.0, 2.0), 0.0, 1.0, 0.01).unwrap();
    assert!(ks_a.pass, "first increment: {:?}", ks_a);
    assert!(ks_b.pass, "second increment: {:?}", ks_b);

    let first: Vec<f64> = recentered
        .iter()
        .map(|p| p.value_at(1.0).unwrap() - p.first())
        .collect();
    let second: Vec<f64> = recentered
        .iter()
        .map(|p| p.last() - p.value_at(1.0).unwrap())
        .collect();
    let m_a = moment_check(&first, 0.0, 1.0).unwrap();
    let m_b = moment_check(&second, 0.0, 1.0).unwrap();
    assert!(m_a.pass, "first moments: {:?}", m_a);
    assert!(m_b.pass, "second moments: {:?}", m_b);
    budget(started, 120.0, "criterion 4");
    println!(
        "criterion 4: PASS — recentered departure increments over [0,1] and [1,2] are \
         standard normal (KS p = {:.3}, {:.3}; N = {n_reps})",
        ks_a.p_value.unwrap(),
        ks_b.p_value.unwrap()
    );

    let q_final: Vec<f64> = results.iter().map(|r| r.queue_length.last()).collect();
    let indep = independence_check(&q_final, &first).unwrap();
    assert!(
        indep.pass,
        "correlation {} exceeds {}",
        indep.statistic, indep.threshold
    );
    println!(
        "criterion 5: PASS — |corr(Q_T, departure increment over [0,1])| = {:.4} <= {:.4}",
        indep.statistic, indep.threshold
    );
}

struct CoupleOutcome {
    coupled_at: Vec<Option<usize>>,
    worst_delta_increase: f64,
    terminal_fraction: f64,
}

fn couple_batch(arrival: ArrivalSpec<f64>, master: u64, replicates: usize) -> CoupleOutcome {
    let config = TandemConfig {
        c: 1.0,
        n_stations: 200,
        grid: make_grid(1e-3, 1.0).unwrap(),
        arrival,
        seed: Seed::new(master),
        replicates,
    };
    let records: Vec<_> = (0..replicates)
        .into_par_iter()
        .map(|rep| run_coupling(&config.for_replicate(rep)).unwrap())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for record in &records {
        for pair in record.deltas.windows(2) {
            worst = worst.max(pair[1] - pair[0]);
        }
        if let Some(n) = record.coupled_at {
            assert!(
                record.deltas[n..].iter().all(|&d| d == 0.0),
                "delta reappeared after coupling at station {n}"
            );
        }
    }
    let coupled_at: Vec<_> = records.iter().map(|r| r.coupled_at).collect();
    let terminal_fraction =
        coupled_at.iter().filter(|c| c.is_some()).count() as f64 / replicates as f64;
    CoupleOutcome {
        coupled_at,
        worst_delta_increase: worst,
        terminal_fraction,
    }
}

/// Re-run both chains of one replicate directly through the shared
/// service realizations and check bitwise equality from the recorded
/// coupling station onward.
fn recheck_absorption_bitwise(
    arrival: &ArrivalSpec<f64>,
    master: u64,
    rep: usize,
    coupled_at: Option<usize>,
    grid: TimeGrid<f64>,
) {
    let seed = Seed::new(master).child(&[rep as u64]);
    let mut a = sample_arrival(arrival, grid, seed.child(&[purpose::ARRIVAL])).unwrap();
    let mut b = sample_brownian(grid, 0.0, 1.0, 0.0, seed.child(&[purpose::B_CHAIN])).unwrap();
    let mut first_equal = if a.bitwise_eq(&b) { Some(0) } else { None };
    let mut cum = 0.0;
    for station in 1..=200usize {
        let service = ServiceRealization::sample(station, 1.0, cum, grid, seed).unwrap();
        cum = service.cumulative_workload;
        a = queue_op(&a, &service.service_path).unwrap().departure;
        b = queue_op(&b, &service.service_path).unwrap().departure;
        match first_equal {
            None => {
                if a.bitwise_eq(&b) {
                    first_equal = Some(station);
                }
            }
            Some(n) => assert!(
                a.bitwise_eq(&b),
                "chains diverged at station {station} after coupling at {n}"
            ),
        }
    }
    assert_eq!(first_equal, coupled_at, "replicate {rep}: coupling station mismatch");
}

/// Criteria 6 and 7 share the coupling batches: c = 1, T = 1,
/// dt = 1e-3, stations = 200, N = 500, for both arrival specs.
#[test]
fn tandem_chains_couple_and_converge_to_brownian() {
    let started = Instant::now();
    let replicates = 500usize;
    let grid = make_grid(1e-3, 1.0).unwrap();
    let specs = [
        ("zero", ArrivalSpec::Zero, 600u64, 601u64),
        (
            "sinusoid(2, 0.5)",
            ArrivalSpec::Sinusoid {
                amplitude: 2.0,
                period: 0.5,
            },
            610,
            611,
        ),
    ];

    let mut zero_outcome = None;
    for (label, arrival, master, pilot_master) in specs {
        let outcome = couple_batch(arrival.clone(), master, replicates);

        // (a) per-replicate delta monotonicity.
        assert!(
            outcome.worst_delta_increase <= EPS_FP,
            "{label}: delta increased by {}",
            outcome.worst_delta_increase
        );

        // (b) absorption, re-derived bitwise for a sample of replicates.
        for rep in 0..10 {
            recheck_absorption_bitwise(&arrival, master, rep, outcome.coupled_at[rep], grid);
        }

        // (c) coupling fraction is non-decreasing in the station index.
        let mut prev = 0.0;
        for station in 0..=200usize {
            let frac = outcome
                .coupled_at
                .iter()
                .filter(|c| c.is_some_and(|n| n <= station))
                .count() as f64
                / replicates as f64;
            assert!(frac >= prev, "{label}: coupling fraction dropped at {station}");
            prev = frac;
        }

        // (d) terminal fraction above the pilot-derived floor.
        let pilot = couple_batch(arrival.clone(), pilot_master, 50);
        let p = pilot.terminal_fraction;
        let floor = p - 3.0 * (p * (1.0 - p) / 50.0).sqrt();
        assert!(
            outcome.terminal_fraction >= floor,
            "{label}: terminal fraction {} below pilot floor {floor}",
            outcome.terminal_fraction
        );

        if label == "zero" {
            zero_outcome = Some(outcome);
        }
    }
    budget(started, 300.0, "criterion 6");
    println!(
        "criterion 6: PASS — deltas monotone, absorption bitwise, coupling fraction \
         monotone and above the pilot floor for both arrival specs"
    );

    // Criterion 7: limit law over the replicates that coupled.
    let outcome = zero_outcome.unwrap();
    let config = TandemConfig {
        c: 1.0,
        n_stations: 200,
        grid,
        arrival: ArrivalSpec::Zero,
        seed: Seed::new(600),
        replicates,
    };
    let coupled_reps: Vec<usize> = (0..replicates)
        .filter(|&rep| outcome.coupled_at[rep].is_some())
        .collect();
    let finals: Vec<Path<f64>> = coupled_reps
        .par_iter()
        .map(|&rep| {
            let chain = run_tandem(&config.for_replicate(rep)).unwrap();
            let last = chain.last().unwrap();
            last.shift(-last.first()).unwrap()
        })
        .collect();
    let n_coupled = finals.len();

    let ks_a = increment_normality(&finals, (0.0, 0.5), 0.0, 1.0, 0.01).unwrap();
    let ks_b = increment_normality(&finals, (0.5, 1.0), 0.0, 1.0, 0.01).unwrap();
    assert!(ks_a.pass, "first increment: {:?}", ks_a);
    assert!(ks_b.pass, "second increment: {:?}", ks_b);

    let first: Vec<f64> = finals
        .iter()
        .map(|p| p.value_at(0.5).unwrap() - p.first())
        .collect();
    let second: Vec<f64> = finals
        .iter()
        .map(|p| p.last() - p.value_at(0.5).unwrap())
        .collect();
    let indep = independence_check(&first, &second).unwrap();
    assert!(
        indep.pass,
        "increment correlation {} exceeds {}",
        indep.statistic, indep.threshold
    );
    println!(
        "criterion 7: PASS — recentered station-200 output is Brownian over {n_coupled} \
         coupled replicates (KS p = {:.3}, {:.3}; |rho| = {:.4} <= {:.4})",
        ks_a.p_value.unwrap(),
        ks_b.p_value.unwrap(),
        indep.statistic,
        indep.threshold
    );
}

/// Criterion 8: rescaled Poisson counts approach the standard normal
/// marginal, and the fit tightens from n = 100 to n = 10^4.
#[test]
fn scaled_poisson_marginal_is_normal_and_tightens_with_n() {
    let started = Instant::now();
    let n = 10_000usize;
    let n_reps = 5000usize;
    let seed = Seed::new(80);

    // Full path simulation at n = 10^4: scaled value at t = 1.
    let nf = n as f64;
    let coarse = make_grid(nf * MACRO_DT, nf).unwrap();
    let values: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let events =
                sample_poisson_events(1.0, nf, seed.child(&[1, rep as u64])).unwrap();
            let path = counting_path(&events, coarse).unwrap();
            tandemq::heavytraffic::diffusive_scale(&path, n, 1.0)
                .unwrap()
                .last()
        })
        .collect();
    let ks = ks_test(&values, CdfRef::Normal { mean: 0.0, var: 1.0 }, 0.01).unwrap();
    assert!(ks.pass, "marginal at n = 10^4: {:?}", ks);

    // Matched-seed comparison: the same uniform drives the Poisson
    // quantile at both scaling indices, so each batch compares the two
    // lattice approximations on common randomness.
    let coarse_pois = Poisson::new(100.0).unwrap();
    let fine_pois = Poisson::new(10_000.0).unwrap();
    let batches = 20usize;
    let per_batch = 250usize;
    let mut wins = 0usize;
    for batch in 0..batches {
        let mut coarse_vals = Vec::with_capacity(per_batch);
        let mut fine_vals = Vec::with_capacity(per_batch);
        for rep in 0..per_batch {
            let mut rng = seed.child(&[2, batch as u64, rep as u64]).rng();
            let u: f64 = rand::Rng::sample(&mut rng, rand_distr::Open01);
            coarse_vals.push((coarse_pois.inverse_cdf(u) as f64 - 100.0) / 10.0);
            fine_vals.push((fine_pois.inverse_cdf(u) as f64 - 10_000.0) / 100.0);
        }
        let d_coarse = ks_test(&coarse_vals, CdfRef::Normal { mean: 0.0, var: 1.0 }, 0.01)
            .unwrap()
            .statistic;
        let d_fine = ks_test(&fine_vals, CdfRef::Normal { mean: 0.0, var: 1.0 }, 0.01)
            .unwrap()
            .statistic;
        if d_fine < d_coarse {
            wins += 1;
        }
    }
    assert!(
        wins >= 18,
        "KS statistic smaller at n = 10^4 in only {wins}/20 matched batches"
    );
    budget(started, 120.0, "criterion 8");
    println!(
        "criterion 8: PASS — scaled marginal KS p = {:.3} at n = 10^4 (N = {n_reps}); \
         fit tighter than n = 100 in {wins}/20 matched batches",
        ks.p_value.unwrap()
    );
}

/// Criterion 9: the diffusive rescaling commutes with the queueing
/// operator on every replicate.
#[test]
fn scaling_commutes_with_queueing_on_every_replicate() {
    let started = Instant::now();
    let n_reps = 200usize;
    let base = HeavyTrafficConfig {
        c: 1.0,
        n: 10_000,
        horizon: 1.0,
        seed: Seed::new(90),
        replicates: n_reps,
    };
    let max_gap = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            scaled_departure(&base.for_replicate(rep))
                .unwrap()
                .commutation_gap
        })
        .reduce(|| 0.0f64, f64::max);
    assert!(
        max_gap <= COMMUTATION_TOL,
        "commutation gap {max_gap} exceeds {COMMUTATION_TOL}"
    );
    budget(started, 120.0, "criterion 9");
    println!(
        "criterion 9: PASS — scale∘queue = queue∘scale on all {n_reps} replicates \
         (max gap {max_gap:.2e} <= {COMMUTATION_TOL:.0e})"
    );
}

/// Criterion 10: the discrete stage departs at rate lambda_n and has
/// uncorrelated disjoint increments.
#[test]
fn discrete_stage_departure_has_poisson_rate_and_independent_increments() {
    let started = Instant::now();
    let n = 10_000usize;
    let n_reps = 100usize;
    let base = HeavyTrafficConfig {
        c: 1.0,
        n,
        horizon: 1.0,
        seed: Seed::new(100),
        replicates: n_reps,
    };
    let lambda = 1.0 - 1.0 / (n as f64).sqrt();
    let span = n as f64;

    let stages: Vec<_> = (0..n_reps)
        .into_par_iter()
        .map(|rep| run_mm1_tandem_stage(&base.for_replicate(rep)).unwrap())
        .collect();

    let d0 = &stages[0].departure;
    let rate = (d0.last() - d0.first()) / span;
    let band = 4.0 * (lambda / span).sqrt();
    assert!(
        (rate - lambda).abs() <= band,
        "departure rate {rate} outside {lambda} +- {band}"
    );

    let mid = d0.grid().n_steps() / 2;
    let first: Vec<f64> = stages
        .iter()
        .map(|s| s.departure.at(mid) - s.departure.first())
        .collect();
    let second: Vec<f64> = stages
        .iter()
        .map(|s| s.departure.last() - s.departure.at(mid))
        .collect();
    let indep = independence_check(&first, &second).unwrap();
    assert!(
        indep.pass,
        "increment correlation {} exceeds {}",
        indep.statistic, indep.threshold
    );
    budget(started, 60.0, "criterion 10");
    println!(
        "criterion 10: PASS — departure rate {rate:.5} within 4 SE of lambda_n = {lambda:.5}; \
         disjoint-increment |rho| = {:.4} <= {:.4} over {n_reps} replicates",
        indep.statistic, indep.threshold
    );
}

fn small_config(experiment: Experiment, out_dir: std::path::PathBuf) -> RunConfig {
    RunConfig {
        experiment,
        c: 1.0,
        dt: 1e-2,
        horizon: 1.0,
        stations: 30,
        replicates: 40,
        arrival: ArrivalSpec::Zero,
        scaling_n: 100,
        seed: 7,
        out_dir,
        alpha: 0.01,
    }
}

fn canonical_outputs(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().into_string().unwrap();
            let mut bytes = std::fs::read(e.path()).unwrap();
            if name == "report.json" {
                // Wall-clock time is the one field allowed to differ.
                let mut v: serde_json::Value =
                    serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_clock_secs");
                bytes = serde_json::to_vec_pretty(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    files.sort();
    assert!(!files.is_empty(), "experiment produced no output files");
    files
}

/// Criterion 11: identical config and seed give byte-identical outputs,
/// serial and fully parallel.
#[test]
fn experiment_outputs_are_deterministic_under_parallelism() {
    let experiments = [
        Experiment::Burke,
        Experiment::Tandem,
        Experiment::Couple,
        Experiment::Heavy,
        Experiment::Selftest,
    ];
    let serial_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    for experiment in experiments {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = small_config(experiment, dir_a.path().to_path_buf());
        let cfg_b = small_config(experiment, dir_b.path().to_path_buf());
        let code_a = serial_pool.install(|| cli::run_experiment(&cfg_a));
        let code_b = cli::run_experiment(&cfg_b);
        assert!(
            code_a != cli::EXIT_RUNTIME && code_a != cli::EXIT_USAGE,
            "experiment {experiment:?} failed to run"
        );
        assert_eq!(code_a, code_b, "exit status differs for {experiment:?}");
        let files_a = canonical_outputs(dir_a.path());
        let files_b = canonical_outputs(dir_b.path());
        assert_eq!(
            files_a.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            files_b.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "file sets differ for {experiment:?}"
        );
        for ((name, a), (_, b)) in files_a.iter().zip(&files_b) {
            assert_eq!(a, b, "{experiment:?}: {name} differs between runs");
        }
    }
    println!(
        "criterion 11: PASS — all five experiments byte-identical between a single-threaded \
         and a fully parallel rerun with the same seed"
    );
}
