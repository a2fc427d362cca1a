//! Deterministic, seed-reproducible sampling of every stochastic input:
//! Brownian paths, exponential workloads, Poisson counting paths,
//! geometric workloads, and the zoo of admissible initial arrival
//! processes.
//!
//! All samplers are pure functions of `(arguments, seed)`: the same call
//! produces bitwise-identical output every time, and distinct seed
//! labels yield distinct substreams. Parallel replication derives one
//! child seed per replicate and never shares generator state.

use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Substream purpose tags fed into [`Seed::child`].
pub mod purpose {
    pub const ARRIVAL: u64 = 1;
    pub const W_PATH: u64 = 2;
    pub const WORKLOAD: u64 = 3;
    pub const B_CHAIN: u64 = 4;
    pub const SERVICE_EVENTS: u64 = 5;
    pub const ARRIVAL_EVENTS: u64 = 6;
    pub const BARRIER: u64 = 7;
}

/// Uniform discretization of `[0, T]` with points `t_i = i * dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    dt: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of sample points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> T {
        self.time_at(self.n_steps)
    }

    pub fn time_at(&self, i: usize) -> T {
        T::from_usize_exact(i) * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len()).map(move |i| self.time_at(i))
    }

    /// Index of an on-grid time, or an error if `t` is off-grid.
    pub fn index_of(&self, t: T) -> Result<usize> {
        let ratio = (t / self.dt).as_f64();
        let idx = ratio.round();
        if (ratio - idx).abs() > 1e-9 || idx < 0.0 || idx as usize > self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "time {t} is not a grid point (dt = {})",
                self.dt
            )));
        }
        Ok(idx as usize)
    }
}

/// `dt > 0`, `T >= dt`; `n_steps = round(T / dt)`.
pub fn make_grid<T: Real>(dt: T, horizon: T) -> Result<TimeGrid<T>> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be >= dt, got T = {horizon}, dt = {dt}"
        )));
    }
    let steps = (horizon / dt).as_f64().round();
    if steps < 1.0 || steps > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "T/dt = {steps} outside supported range"
        )));
    }
    Ok(TimeGrid {
        dt,
        n_steps: steps as usize,
    })
}

/// A real-valued path sampled on a uniform grid; the universal currency
/// of every operator in the crate. All entries are finite by
/// construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path<T> {
    grid: TimeGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Path<T> {
    pub fn new(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "path length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("path contains {bad:?}")));
        }
        Ok(Path { grid, values })
    }

    pub fn zero(grid: TimeGrid<T>) -> Self {
        Path {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> T {
        self.values[0]
    }

    pub fn last(&self) -> T {
        *self.values.last().unwrap()
    }

    pub fn at(&self, i: usize) -> T {
        self.values[i]
    }

    /// Value at an on-grid time.
    pub fn value_at(&self, t: T) -> Result<T> {
        Ok(self.values[self.grid.index_of(t)?])
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "left grid (dt = {}, n_steps = {}) vs right grid (dt = {}, n_steps = {})",
                self.grid.dt, self.grid.n_steps, other.grid.dt, other.grid.n_steps
            )));
        }
        Ok(())
    }

    /// Pointwise binary combination on identical grids.
    pub fn zip_with(&self, other: &Self, op: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Path::new(self.grid, values)
    }

    pub fn map(&self, op: impl Fn(T) -> T) -> Result<Self> {
        Path::new(self.grid, self.values.iter().map(|&v| op(v)).collect())
    }

    pub fn shift(&self, offset: T) -> Result<Self> {
        self.map(|v| v + offset)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// True iff both paths hold the exact same bit patterns.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bit_pattern() == b.to_bit_pattern())
    }
}

/// Master seed plus a splittable derivation rule for substreams.
///
/// `child(master, labels...)` hashes the master and the integer labels
/// (replicate index, station index, purpose tag) through a SplitMix64
/// chain, so any replicate can rebuild its substream without touching
/// generator state owned by another replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    master: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive the substream seed for a label sequence.
    pub fn child(&self, labels: &[u64]) -> Seed {
        let mut h = splitmix64(self.master ^ 0xa5a5a5a5a5a5a5a5);
        for &label in labels {
            h = splitmix64(h ^ splitmix64(label.wrapping_add(0x6a09e667f3bcc909)));
        }
        Seed { master: h }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(splitmix64(self.master))
    }
}

/// Initial arrival process `A^0`: continuous, starts at 0, does not
/// explode on the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ArrivalSpec<T> {
    Zero,
    StandardBm,
    DriftedBm { drift: T, sigma: T },
    OrnsteinUhlenbeck { theta: T, sigma: T },
    Sinusoid { amplitude: T, period: T },
    FromFile(PathBuf),
}

impl<T: Real> ArrivalSpec<T> {
    /// Parse the CLI spelling: `zero`, `bm`, `drifted:MU,SIGMA`,
    /// `ou:THETA,SIGMA`, `sin:AMP,PERIOD`, `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("arrival spec `{s}`: {msg}"));
        let parse_two = |args: &str| -> Result<(T, T)> {
            let mut it = args.split(',');
            let a = it
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| bad("expected two numeric parameters"))?;
            let b = it
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| bad("expected two numeric parameters"))?;
            if it.next().is_some() {
                return Err(bad("expected exactly two parameters"));
            }
            Ok((T::from_f64_exact(a), T::from_f64_exact(b)))
        };
        match s.split_once(':') {
            None => match s {
                "zero" => Ok(ArrivalSpec::Zero),
                "bm" => Ok(ArrivalSpec::StandardBm),
                _ => Err(bad("unknown variant")),
            },
            Some(("drifted", args)) => {
                let (drift, sigma) = parse_two(args)?;
                Ok(ArrivalSpec::DriftedBm { drift, sigma })
            }
            Some(("ou", args)) => {
                let (theta, sigma) = parse_two(args)?;
                Ok(ArrivalSpec::OrnsteinUhlenbeck { theta, sigma })
            }
            Some(("sin", args)) => {
                let (amplitude, period) = parse_two(args)?;
                Ok(ArrivalSpec::Sinusoid { amplitude, period })
            }
            Some(("file", path)) => Ok(ArrivalSpec::FromFile(PathBuf::from(path))),
            Some(_) => Err(bad("unknown variant")),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ArrivalSpec::DriftedBm { sigma, .. } if !(*sigma > T::zero()) => Err(
                Error::InvalidArgument(format!("drifted-BM sigma must be positive, got {sigma}")),
            ),
            ArrivalSpec::OrnsteinUhlenbeck { theta, sigma } => {
                if !(*theta > T::zero()) {
                    Err(Error::InvalidArgument(format!(
                        "OU theta must be positive, got {theta}"
                    )))
                } else if !(*sigma > T::zero()) {
                    Err(Error::InvalidArgument(format!(
                        "OU sigma must be positive, got {sigma}"
                    )))
                } else {
                    Ok(())
                }
            }
            ArrivalSpec::Sinusoid { period, .. } if !(*period > T::zero()) => Err(
                Error::InvalidArgument(format!("sinusoid period must be positive, got {period}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Brownian motion with drift, by exact Gaussian increments.
pub fn sample_brownian<T: Real>(
    grid: TimeGrid<T>,
    drift: T,
    sigma: T,
    start: T,
    seed: Seed,
) -> Result<Path<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut rng = seed.rng();
    let step_mean = drift * grid.dt;
    let step_sd = sigma * grid.dt.sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = start;
    values.push(x);
    for _ in 0..grid.n_steps {
        x = x + step_mean + step_sd * T::draw_standard_normal(&mut rng);
        values.push(x);
    }
    Path::new(grid, values)
}

/// One draw from the density `c * exp(-c x)` on `x > 0` (mean `1/c`),
/// the stationary workload of the Brownian queue with service drift `c`.
pub fn sample_exponential<T: Real>(c: T, seed: Seed) -> Result<T> {
    if !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "exponential parameter must be positive, got {c}"
        )));
    }
    let mut rng = seed.rng();
    Ok(T::draw_exp1(&mut rng) / c)
}

/// Geometric draw with `P(G = k) = (1 - p) p^k` on `k >= 0`, mean
/// `p / (1 - p)`.
///
/// The support starts at 0 so that `G / sqrt(n)` converges to an
/// Exponential(c) variable under `p = 1 - c / sqrt(n)`.
pub fn sample_geometric<T: Real>(p: T, seed: Seed) -> Result<u64> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "geometric parameter must lie in (0, 1), got {p}"
        )));
    }
    let mut rng = seed.rng();
    let u = T::draw_open01(&mut rng);
    // floor(ln U / ln p) lands in bin k exactly when p^{k+1} < U <= p^k.
    let k = (u.ln() / p.ln()).floor().as_f64();
    Ok(k as u64)
}

/// Event times of a homogeneous Poisson process on `[0, t_max]`,
/// generated from exponential inter-arrival gaps.
pub fn sample_poisson_events<T: Real>(rate: T, t_max: T, seed: Seed) -> Result<Vec<T>> {
    if !(rate > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "Poisson rate must be positive, got {rate}"
        )));
    }
    if !(t_max > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {t_max}"
        )));
    }
    let mut rng = seed.rng();
    let mut events = Vec::new();
    let mut t = T::zero();
    loop {
        t = t + T::draw_exp1(&mut rng) / rate;
        if t > t_max {
            break;
        }
        events.push(t);
    }
    Ok(events)
}

/// Counting path of events on a grid: `values[i]` = number of event
/// times `<= t_i`. Non-decreasing, integer-valued, starts at 0.
pub fn counting_path<T: Real>(events: &[T], grid: TimeGrid<T>) -> Result<Path<T>> {
    let mut values = Vec::with_capacity(grid.len());
    let mut count = 0usize;
    for i in 0..grid.len() {
        let t = grid.time_at(i);
        while count < events.len() && events[count] <= t {
            count += 1;
        }
        values.push(T::from_usize_exact(count));
    }
    Path::new(grid, values)
}

/// Homogeneous Poisson counting path on the grid horizon.
pub fn sample_poisson_path<T: Real>(rate: T, grid: TimeGrid<T>, seed: Seed) -> Result<Path<T>> {
    let events = sample_poisson_events(rate, grid.horizon(), seed)?;
    counting_path(&events, grid)
}

/// Sample one initial arrival path for the given spec. Every variant
/// starts at exactly 0.
pub fn sample_arrival<T: Real>(
    spec: &ArrivalSpec<T>,
    grid: TimeGrid<T>,
    seed: Seed,
) -> Result<Path<T>> {
    spec.validate()?;
    match spec {
        ArrivalSpec::Zero => Ok(Path::zero(grid)),
        ArrivalSpec::StandardBm => sample_brownian(grid, T::zero(), T::one(), T::zero(), seed),
        ArrivalSpec::DriftedBm { drift, sigma } => {
            sample_brownian(grid, *drift, *sigma, T::zero(), seed)
        }
        ArrivalSpec::OrnsteinUhlenbeck { theta, sigma } => {
            sample_ou(grid, *theta, *sigma, seed)
        }
        ArrivalSpec::Sinusoid { amplitude, period } => {
            let two_pi = T::from_f64_exact(std::f64::consts::TAU);
            let values = grid
                .times()
                .map(|t| *amplitude * (two_pi * t / *period).sin())
                .collect();
            Path::new(grid, values)
        }
        ArrivalSpec::FromFile(path) => load_arrival_csv(path, grid),
    }
}

/// Ornstein-Uhlenbeck from 0 by the exact Gaussian transition: given
/// `x`, the next value has mean `exp(-theta dt) x` and variance
/// `sigma^2 (1 - exp(-2 theta dt)) / (2 theta)`.
fn sample_ou<T: Real>(grid: TimeGrid<T>, theta: T, sigma: T, seed: Seed) -> Result<Path<T>> {
    let mut rng = seed.rng();
    let two = T::from_f64_exact(2.0);
    let decay = (-theta * grid.dt).exp();
    let step_sd = sigma * ((T::one() - decay * decay) / (two * theta)).sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = T::zero();
    values.push(x);
    for _ in 0..grid.n_steps {
        x = decay * x + step_sd * T::draw_standard_normal(&mut rng);
        values.push(x);
    }
    Path::new(grid, values)
}

/// Load a `t,value` CSV (header required, strictly increasing `t`
/// starting at 0.0, value 0 at t = 0) and interpolate linearly onto the
/// grid.
fn load_arrival_csv<T: Real>(path: &PathBuf, grid: TimeGrid<T>) -> Result<Path<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InputData(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "t,value" => {}
        _ => {
            return Err(Error::InputData(format!(
                "{}: expected header line `t,value`",
                path.display()
            )))
        }
    }
    let mut ts: Vec<f64> = Vec::new();
    let mut vs: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (t_str, v_str) = line.split_once(',').ok_or_else(|| {
            Error::InputData(format!("{}:{}: expected `t,value`", path.display(), lineno + 2))
        })?;
        let t: f64 = t_str.trim().parse().map_err(|_| {
            Error::InputData(format!("{}:{}: bad t field", path.display(), lineno + 2))
        })?;
        let v: f64 = v_str.trim().parse().map_err(|_| {
            Error::InputData(format!("{}:{}: bad value field", path.display(), lineno + 2))
        })?;
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::InputData(format!(
                "{}:{}: non-finite entry",
                path.display(),
                lineno + 2
            )));
        }
        if let Some(&prev) = ts.last() {
            if t <= prev {
                return Err(Error::InputData(format!(
                    "{}:{}: t must be strictly increasing",
                    path.display(),
                    lineno + 2
                )));
            }
        }
        ts.push(t);
        vs.push(v);
    }
    if ts.is_empty() || ts[0] != 0.0 {
        return Err(Error::InputData(format!(
            "{}: data must start at t = 0.0",
            path.display()
        )));
    }
    if vs[0] != 0.0 {
        return Err(Error::InputData(format!(
            "{}: arrival path must start at value 0",
            path.display()
        )));
    }
    let horizon = grid.horizon().as_f64();
    if *ts.last().unwrap() < horizon - 1e-9 {
        return Err(Error::InputData(format!(
            "{}: data ends at t = {} before the grid horizon {horizon}",
            path.display(),
            ts.last().unwrap()
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut seg = 0usize;
    for i in 0..grid.len() {
        let t = grid.time_at(i).as_f64();
        while seg + 1 < ts.len() && ts[seg + 1] < t {
            seg += 1;
        }
        let v = if seg + 1 == ts.len() {
            vs[seg]
        } else {
            let w = (t - ts[seg]) / (ts[seg + 1] - ts[seg]);
            vs[seg] + w.clamp(0.0, 1.0) * (vs[seg + 1] - vs[seg])
        };
        values.push(T::from_f64_exact(v));
    }
    Path::new(grid, values)
}
