//! Experiment engines for the stationary Brownian queue and the tandem
//! coupling dynamics.
//!
//! `run_burke` builds one stationary Brownian queue and returns its
//! departure decomposition. `run_tandem` pushes an initial arrival
//! through a chain of stations with fresh independent services and
//! Exponential(c) workloads. `run_coupling` drives a second chain,
//! started from an independent standard Brownian motion, through the
//! *same* service realizations and tracks the sup-distance between the
//! chains until they couple bitwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{
    purpose, sample_arrival, sample_brownian, sample_exponential, ArrivalSpec, Path, Seed,
    TimeGrid,
};
use crate::real::Real;
use crate::reflection::queue_op;

/// One station's service inputs: `W^n + c t` shifted down by the
/// cumulative workload of stations `1..=n`.
#[derive(Clone, Debug)]
pub struct ServiceRealization<T> {
    pub station: usize,
    pub w_path: Path<T>,
    pub drift_c: T,
    pub workload: T,
    pub cumulative_workload: T,
    pub service_path: Path<T>,
}

impl<T: Real> ServiceRealization<T> {
    /// Sample station `station`'s service realization. `cum_before` is
    /// the total workload of stations strictly before this one; the
    /// freshly drawn workload is added on top.
    pub fn sample(
        station: usize,
        drift_c: T,
        cum_before: T,
        grid: TimeGrid<T>,
        seed: Seed,
    ) -> Result<Self> {
        if !(drift_c > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "service drift must be positive, got {drift_c}"
            )));
        }
        let w_path = sample_brownian(
            grid,
            T::zero(),
            T::one(),
            T::zero(),
            seed.child(&[station as u64, purpose::W_PATH]),
        )?;
        let workload =
            sample_exponential(drift_c, seed.child(&[station as u64, purpose::WORKLOAD]))?;
        let cumulative_workload = cum_before + workload;
        let values = w_path
            .values()
            .iter()
            .enumerate()
            .map(|(i, &w)| w + drift_c * grid.time_at(i) - cumulative_workload)
            .collect();
        let service_path = Path::new(grid, values)?;
        Ok(ServiceRealization {
            station,
            w_path,
            drift_c,
            workload,
            cumulative_workload,
            service_path,
        })
    }
}

/// Configuration for the tandem and coupling experiments. The seed is
/// the replicate-level substream: drivers derive one child per replicate
/// before calling in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TandemConfig<T> {
    pub c: T,
    pub n_stations: usize,
    pub grid: TimeGrid<T>,
    pub arrival: ArrivalSpec<T>,
    pub seed: Seed,
    pub replicates: usize,
}

impl<T: Real> TandemConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if self.n_stations == 0 {
            return Err(Error::InvalidArgument(
                "n_stations must be at least 1".to_string(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument(
                "replicates must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Same configuration with the seed specialized to one replicate.
    pub fn for_replicate(&self, replicate: usize) -> Self {
        let mut cfg = self.clone();
        cfg.seed = self.seed.child(&[replicate as u64]);
        cfg
    }
}

/// One stationary Brownian queue realization.
#[derive(Clone, Debug)]
pub struct BurkeResult<T> {
    pub departure: Path<T>,
    pub queue_length: Path<T>,
    /// `D + E - x`: a standard Brownian motion from 0 in law.
    pub recentered_departure: Path<T>,
    pub workload: T,
}

/// Build the stationary Brownian queue
/// `D = Q(B1 + x, B2 + c t + x - E)` and return departure, queue
/// length, and the recentered departure.
pub fn run_burke<T: Real>(x: T, c: T, grid: TimeGrid<T>, seed: Seed) -> Result<BurkeResult<T>> {
    if !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "c must be positive, got {c}"
        )));
    }
    let b1 = sample_brownian(grid, T::zero(), T::one(), x, seed.child(&[purpose::ARRIVAL]))?;
    let w = sample_brownian(
        grid,
        T::zero(),
        T::one(),
        T::zero(),
        seed.child(&[purpose::W_PATH]),
    )?;
    let workload = sample_exponential(c, seed.child(&[purpose::WORKLOAD]))?;
    let service_values = w
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + c * grid.time_at(i) + x - workload)
        .collect();
    let service = Path::new(grid, service_values)?;
    let q = queue_op(&b1, &service)?;
    let recentered = q.departure.shift(workload - x)?;
    Ok(BurkeResult {
        departure: q.departure,
        queue_length: q.queue_length,
        recentered_departure: recentered,
        workload,
    })
}

/// Run the tandem recursion for one replicate: returns
/// `[A^0, A^1, ..., A^n_stations]`.
pub fn run_tandem<T: Real>(config: &TandemConfig<T>) -> Result<Vec<Path<T>>> {
    config.validate()?;
    let a0 = sample_arrival(
        &config.arrival,
        config.grid,
        config.seed.child(&[purpose::ARRIVAL]),
    )?;
    let mut chain = Vec::with_capacity(config.n_stations + 1);
    chain.push(a0);
    let mut cum = T::zero();
    for station in 1..=config.n_stations {
        let service =
            ServiceRealization::sample(station, config.c, cum, config.grid, config.seed)?;
        cum = service.cumulative_workload;
        let next = queue_op(chain.last().unwrap(), &service.service_path)?.departure;
        chain.push(next);
    }
    Ok(chain)
}

/// Per-replicate coupling diagnostics: the sup-distance `delta_n`
/// between the two chains after each station, and where (if anywhere)
/// they became bitwise identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingRecord<T> {
    pub deltas: Vec<T>,
    pub coupled_at: Option<usize>,
    pub coupled: bool,
}

/// Sup-norm distance between two paths on the common grid.
pub fn sup_distance<T: Real>(p1: &Path<T>, p2: &Path<T>) -> Result<T> {
    p1.same_grid(p2)?;
    Ok(p1
        .values()
        .iter()
        .zip(p2.values())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), |m, v| if v > m { v } else { m }))
}

/// True iff the service path lies below both arrival paths at every
/// grid point. When true, both departures equal the service path
/// bitwise.
pub fn detect_coupling_event<T: Real>(
    arr_a: &Path<T>,
    arr_b: &Path<T>,
    service: &Path<T>,
) -> Result<bool> {
    arr_a.same_grid(arr_b)?;
    arr_a.same_grid(service)?;
    Ok(service
        .values()
        .iter()
        .zip(arr_a.values().iter().zip(arr_b.values()))
        .all(|(&s, (&a, &b))| s <= a && s <= b))
}

/// Coupling experiment starting from explicit `A^0` and `B^0` paths,
/// driving both through the same service realizations.
pub fn run_coupling_from<T: Real>(
    a0: Path<T>,
    b0: Path<T>,
    config: &TandemConfig<T>,
) -> Result<CouplingRecord<T>> {
    config.validate()?;
    a0.same_grid(&b0)?;
    let mut deltas = Vec::with_capacity(config.n_stations + 1);
    let mut coupled_at = None;
    let mut a = a0;
    let mut b = b0;
    deltas.push(sup_distance(&a, &b)?);
    if a.bitwise_eq(&b) {
        coupled_at = Some(0);
    }
    let mut cum = T::zero();
    for station in 1..=config.n_stations {
        let service =
            ServiceRealization::sample(station, config.c, cum, config.grid, config.seed)?;
        cum = service.cumulative_workload;
        a = queue_op(&a, &service.service_path)?.departure;
        b = queue_op(&b, &service.service_path)?.departure;
        deltas.push(sup_distance(&a, &b)?);
        if coupled_at.is_none() && a.bitwise_eq(&b) {
            coupled_at = Some(station);
        }
    }
    Ok(CouplingRecord {
        deltas,
        coupled: coupled_at.is_some(),
        coupled_at,
    })
}

/// Coupling experiment for one replicate: `A^0` from the configured
/// arrival spec, `B^0` an independent standard Brownian motion from 0.
pub fn run_coupling<T: Real>(config: &TandemConfig<T>) -> Result<CouplingRecord<T>> {
    let a0 = sample_arrival(
        &config.arrival,
        config.grid,
        config.seed.child(&[purpose::ARRIVAL]),
    )?;
    let b0 = sample_brownian(
        config.grid,
        T::zero(),
        T::one(),
        T::zero(),
        config.seed.child(&[purpose::B_CHAIN]),
    )?;
    run_coupling_from(a0, b0, config)
}

/// Monte Carlo estimate of
/// `P(W_t + c t - E <= B_t - k for all t in [0, T])` with `W`, `B`
/// independent standard Brownian motions and `E ~ Exp(c)`.
///
/// The replicate substreams do not depend on `k`, so estimates at
/// different barriers share common random numbers and are pathwise
/// monotone in `k`.
pub fn estimate_coupling_prob<T: Real>(
    k: T,
    c: T,
    grid: TimeGrid<T>,
    replicates: usize,
    seed: Seed,
) -> Result<T> {
    if !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "c must be positive, got {c}"
        )));
    }
    if !(k >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "barrier offset must be non-negative, got {k}"
        )));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "replicates must be at least 1".to_string(),
        ));
    }
    let mut hits = 0usize;
    for rep in 0..replicates {
        let sub = seed.child(&[rep as u64]);
        let w = sample_brownian(
            grid,
            T::zero(),
            T::one(),
            T::zero(),
            sub.child(&[purpose::W_PATH]),
        )?;
        let b = sample_brownian(
            grid,
            T::zero(),
            T::one(),
            T::zero(),
            sub.child(&[purpose::BARRIER]),
        )?;
        let e = sample_exponential(c, sub.child(&[purpose::WORKLOAD]))?;
        let ok = (0..grid.len()).all(|i| {
            w.at(i) + c * grid.time_at(i) - e <= b.at(i) - k
        });
        if ok {
            hits += 1;
        }
    }
    Ok(T::from_usize_exact(hits) / T::from_usize_exact(replicates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::make_grid;
    use crate::reflection::EPS_FP;

    fn base_config(seed: u64) -> TandemConfig<f64> {
        TandemConfig {
            c: 1.0,
            n_stations: 30,
            grid: make_grid(1e-2, 1.0).unwrap(),
            arrival: ArrivalSpec::Zero,
            seed: Seed::new(seed),
            replicates: 1,
        }
    }

    #[test]
    fn burke_departure_starts_at_x_minus_workload() {
        let grid = make_grid(1e-2, 1.0).unwrap();
        for s in 0..20 {
            let r = run_burke(0.7, 1.0, grid, Seed::new(s)).unwrap();
            assert_eq!(r.departure.first(), 0.7 - r.workload);
            assert_eq!(r.recentered_departure.first(), 0.0);
            assert!(r.queue_length.values().iter().all(|&v| v >= -EPS_FP));
        }
    }

    #[test]
    fn burke_rejects_bad_drift() {
        let grid = make_grid(1e-2, 1.0).unwrap();
        assert!(run_burke(0.0, 0.0, grid, Seed::new(1)).is_err());
        assert!(run_burke(0.0, -1.0, grid, Seed::new(1)).is_err());
    }

    #[test]
    fn tandem_initial_values_telescope() {
        let mut config = base_config(12);
        config.n_stations = 50;
        let chain = run_tandem(&config).unwrap();
        assert_eq!(chain.len(), 51);
        // A^n(0) = -sum of workloads; recover the sum from the sampler.
        let mut cum = 0.0;
        for (n, path) in chain.iter().enumerate().skip(1) {
            let service =
                ServiceRealization::sample(n, config.c, cum, config.grid, config.seed).unwrap();
            cum = service.cumulative_workload;
            assert_eq!(path.first(), -cum);
            assert_eq!(service.service_path.first(), -cum);
        }
        assert!((chain.last().unwrap().first() + cum).abs() < 1e-9);
    }

    #[test]
    fn coupling_identical_inputs_couple_immediately() {
        let config = base_config(5);
        let a0 = sample_brownian(config.grid, 0.0, 1.0, 0.0, Seed::new(77)).unwrap();
        let record = run_coupling_from(a0.clone(), a0, &config).unwrap();
        assert_eq!(record.deltas[0], 0.0);
        assert_eq!(record.coupled_at, Some(0));
        assert!(record.coupled);
        assert!(record.deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn coupling_deltas_are_non_increasing() {
        for s in 0..10 {
            let record = run_coupling(&base_config(100 + s)).unwrap();
            for w in record.deltas.windows(2) {
                assert!(w[1] <= w[0] + EPS_FP, "deltas increased: {w:?}");
            }
        }
    }

    #[test]
    fn coupling_event_forces_equal_departures() {
        let grid = make_grid(1e-2, 1.0).unwrap();
        let s = Seed::new(42);
        for rep in 0..50u64 {
            let a = sample_brownian(grid, 0.0, 1.0, 1.0, s.child(&[rep, 0])).unwrap();
            let b = sample_brownian(grid, 0.0, 1.0, 2.0, s.child(&[rep, 1])).unwrap();
            let svc = sample_brownian(grid, 0.0, 1.0, -2.5, s.child(&[rep, 2])).unwrap();
            if detect_coupling_event(&a, &b, &svc).unwrap() {
                let da = queue_op(&a, &svc).unwrap().departure;
                let db = queue_op(&b, &svc).unwrap().departure;
                assert!(da.bitwise_eq(&db));
                assert!(da.bitwise_eq(&svc));
            }
        }
    }

    #[test]
    fn coupling_event_examples() {
        let grid = make_grid(0.5, 1.0).unwrap();
        let a = Path::new(grid, vec![1.0, 2.0, 0.5]).unwrap();
        let b = Path::new(grid, vec![0.5, 1.0, 1.5]).unwrap();
        let below = a
            .zip_with(&b, |x, y| if x < y { x } else { y })
            .unwrap()
            .shift(-1.0)
            .unwrap();
        assert!(detect_coupling_event(&a, &b, &below).unwrap());
        let above = Path::new(grid, vec![1.5, 0.0, 0.0]).unwrap();
        assert!(!detect_coupling_event(&a, &b, &above).unwrap());
    }

    #[test]
    fn coupling_absorbs_once_coupled() {
        // Find replicates that couple before the last station and check
        // the tail deltas stay exactly zero.
        let mut config = base_config(7);
        config.n_stations = 60;
        let mut seen = 0;
        for s in 0..30 {
            config.seed = Seed::new(7000 + s);
            let record = run_coupling(&config).unwrap();
            if let Some(n) = record.coupled_at {
                seen += 1;
                assert!(record.deltas[n..].iter().all(|&d| d == 0.0));
            }
        }
        assert!(seen > 0, "no replicate coupled in 60 stations");
    }

    #[test]
    fn sup_distance_examples() {
        let grid = make_grid(1.0, 1.0).unwrap();
        let p1 = Path::new(grid, vec![0.0, 1.0]).unwrap();
        assert_eq!(sup_distance(&p1, &p1).unwrap(), 0.0);
        let p3 = p1.shift(3.0).unwrap();
        assert_eq!(sup_distance(&p1, &p3).unwrap(), 3.0);
        let p2 = Path::new(grid, vec![0.5, -1.0]).unwrap();
        assert_eq!(sup_distance(&p1, &p2).unwrap(), 2.0);
    }

    #[test]
    fn coupling_prob_barrier_behaviour() {
        let grid = make_grid(1e-2, 1.0).unwrap();
        let seed = Seed::new(13);
        let far = estimate_coupling_prob(1e6, 1.0, grid, 200, seed).unwrap();
        assert!(far <= 1.0 / 200.0);

        let p0 = estimate_coupling_prob(0.0, 1.0, grid, 2000, seed).unwrap();
        let p1 = estimate_coupling_prob(1.0, 1.0, grid, 2000, seed).unwrap();
        assert!(p1 > 0.0, "finite barrier should be reachable");
        // Common random numbers make this monotone replicate by replicate.
        assert!(p0 >= p1);
    }
}
