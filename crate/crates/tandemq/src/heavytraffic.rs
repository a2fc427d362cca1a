//! The discrete M/M/1 side of the Brownian queue: event-level
//! simulation of one queueing stage under `lambda_n = 1 - c/sqrt(n)`,
//! diffusive rescaling of counting paths, and the scaling/queueing
//! commutation identity.
//!
//! Counting paths are generated exactly from exponential inter-arrival
//! gaps, then represented on a uniform micro-grid so the single audited
//! reflection kernel serves both the discrete and the continuous
//! regimes. Counting values at grid points are exact; only the running
//! infimum is resolved at grid granularity, and cells containing more
//! than one event are tallied in a diagnostic warning counter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{
    counting_path, make_grid, purpose, sample_geometric, sample_poisson_events, Path, Seed,
    TimeGrid,
};
use crate::real::Real;
use crate::reflection::queue_op;

/// Macroscopic grid step for all scaled paths, fixed so KS statistics
/// are comparable across scaling indices.
pub const MACRO_DT: f64 = 1e-3;

/// Memory cap on micro-grid cells per macroscopic step. The event
/// separation target `dt_micro <= 1/(20 n)` asks for `n^2/50` cells per
/// macro step, which is honored up to this cap (n <= ~220) and clamped
/// beyond it.
pub const MAX_CELLS_PER_MACRO_STEP: usize = 1000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeavyTrafficConfig<T> {
    pub c: T,
    /// Scaling index; requires `c / sqrt(n) < 1`.
    pub n: usize,
    /// Macroscopic horizon; the stage simulates `[0, n T]` in micro time.
    pub horizon: T,
    pub seed: Seed,
    pub replicates: usize,
}

impl<T: Real> HeavyTrafficConfig<T> {
    pub fn validate(&self) -> Result<()> {
        lambda_n(self.c, self.n)?;
        if !(self.horizon > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument(
                "replicates must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn for_replicate(&self, replicate: usize) -> Self {
        let mut cfg = self.clone();
        cfg.seed = self.seed.child(&[replicate as u64]);
        cfg
    }
}

/// `lambda_n = 1 - c / sqrt(n)`, valid only while it stays in (0, 1).
pub fn lambda_n<T: Real>(c: T, n: usize) -> Result<T> {
    if !(c > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "c must be positive, got {c}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".to_string()));
    }
    let ratio = c / T::from_usize_exact(n).sqrt();
    if ratio >= T::one() {
        return Err(Error::InvalidArgument(format!(
            "c/sqrt(n) = {ratio} >= 1: the scaled queue is not stable"
        )));
    }
    Ok(T::one() - ratio)
}

/// One discrete queueing stage: Poisson(lambda_n) arrivals, Poisson(1)
/// services, geometric(lambda_n) initial workload, and the departure
/// computed through the shared reflection kernel.
#[derive(Clone, Debug)]
pub struct MmStage<T> {
    pub arrival: Path<T>,
    pub service: Path<T>,
    pub workload: u64,
    pub departure: Path<T>,
    pub lambda: T,
    /// Micro-grid cells that received more than one event of either
    /// process; counting values stay exact but the running infimum is
    /// only resolved at cell granularity there.
    pub resolution_warnings: usize,
}

fn micro_grid<T: Real>(n: usize, horizon: T) -> Result<(TimeGrid<T>, usize)> {
    let macro_dt = T::from_f64_exact(MACRO_DT);
    let macro_steps = (horizon / macro_dt).as_f64().round() as usize;
    if macro_steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} shorter than the macroscopic step {MACRO_DT}"
        )));
    }
    let wanted = (n * n).div_ceil(50);
    let cells = wanted.clamp(1, MAX_CELLS_PER_MACRO_STEP);
    let dt_micro = T::from_usize_exact(n) * macro_dt / T::from_usize_exact(cells);
    let grid = make_grid(dt_micro, T::from_usize_exact(n) * horizon)?;
    Ok((grid, cells))
}

fn count_crowded_cells<T: Real>(events: &[T], dt: T) -> usize {
    let mut crowded = 0usize;
    let mut prev_cell = usize::MAX;
    let mut already = false;
    for &t in events {
        let cell = (t / dt).as_f64().floor() as usize;
        if cell == prev_cell {
            if !already {
                crowded += 1;
                already = true;
            }
        } else {
            prev_cell = cell;
            already = false;
        }
    }
    crowded
}

/// Simulate one stage: `D = Q(A, S - G)` over `[0, n T]` in micro time.
pub fn run_mm1_tandem_stage<T: Real>(config: &HeavyTrafficConfig<T>) -> Result<MmStage<T>> {
    config.validate()?;
    let lambda = lambda_n(config.c, config.n)?;
    let (grid, _) = micro_grid(config.n, config.horizon)?;
    let t_max = grid.horizon();

    let arrival_events = sample_poisson_events(
        lambda,
        t_max,
        config.seed.child(&[purpose::ARRIVAL_EVENTS]),
    )?;
    let service_events =
        sample_poisson_events(T::one(), t_max, config.seed.child(&[purpose::SERVICE_EVENTS]))?;
    let workload = sample_geometric(lambda, config.seed.child(&[purpose::WORKLOAD]))?;

    let resolution_warnings = count_crowded_cells(&arrival_events, grid.dt())
        + count_crowded_cells(&service_events, grid.dt());

    let arrival = counting_path(&arrival_events, grid)?;
    let service = counting_path(&service_events, grid)?;
    let shifted_service = service.shift(-T::from_f64_exact(workload as f64))?;
    let departure = queue_op(&arrival, &shifted_service)?.departure;

    Ok(MmStage {
        arrival,
        service,
        workload,
        departure,
        lambda,
        resolution_warnings,
    })
}

/// Diffusive rescaling of a counting path:
/// `output(t) = (P(n t) - rate * n * t) / sqrt(n)` on the fixed
/// macroscopic grid. The input grid must contain every micro time
/// `n * t_i`.
pub fn diffusive_scale<T: Real>(
    counting: &Path<T>,
    n: usize,
    centering_rate: T,
) -> Result<Path<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".to_string()));
    }
    let nf = T::from_usize_exact(n);
    let macro_dt = T::from_f64_exact(MACRO_DT);
    let micro_dt = counting.grid().dt();
    let ratio = (nf * macro_dt / micro_dt).as_f64();
    if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
        return Err(Error::GridMismatch(format!(
            "micro grid (dt = {micro_dt}) does not contain the macroscopic points \
             n * t_i (n = {n}, macro dt = {MACRO_DT})"
        )));
    }
    let stride = ratio.round() as usize;
    let macro_steps = counting.grid().n_steps() / stride;
    if macro_steps == 0 {
        return Err(Error::GridMismatch(
            "counting path shorter than one macroscopic step".to_string(),
        ));
    }
    let sqrt_n = nf.sqrt();
    let grid = make_grid(macro_dt, macro_dt * T::from_usize_exact(macro_steps))?;
    let values = (0..=macro_steps)
        .map(|i| {
            let micro_t = counting.grid().time_at(i * stride);
            (counting.at(i * stride) - centering_rate * micro_t) / sqrt_n
        })
        .collect();
    Path::new(grid, values)
}

/// The scaled triple `(A~, S~, G~)` of one stage.
#[derive(Clone, Debug)]
pub struct ScaledTriple<T> {
    pub arrival_scaled: Path<T>,
    pub service_scaled: Path<T>,
    pub workload_scaled: T,
}

pub fn scale_stage<T: Real>(stage: &MmStage<T>, n: usize) -> Result<ScaledTriple<T>> {
    Ok(ScaledTriple {
        arrival_scaled: diffusive_scale(&stage.arrival, n, stage.lambda)?,
        service_scaled: diffusive_scale(&stage.service, n, stage.lambda)?,
        workload_scaled: T::from_f64_exact(stage.workload as f64) / T::from_usize_exact(n).sqrt(),
    })
}

/// Scaled departure of one stage plus the observed gap of the
/// commutation identity `scale(Q(A, S - G)) = Q(scale(A), scale(S) - G~)`.
#[derive(Clone, Debug)]
pub struct ScaledDeparture<T> {
    pub path: Path<T>,
    pub workload_scaled: T,
    /// Sup distance between the two routes, checked at full micro
    /// resolution.
    pub commutation_gap: T,
}

/// Commutation tolerance: the two routes differ only by floating-point
/// rounding of the affine rescaling.
pub const COMMUTATION_TOL: f64 = 1e-9;

pub fn scaled_departure<T: Real>(config: &HeavyTrafficConfig<T>) -> Result<ScaledDeparture<T>> {
    let stage = run_mm1_tandem_stage(config)?;
    let n = config.n;
    let nf = T::from_usize_exact(n);
    let sqrt_n = nf.sqrt();
    let micro = stage.arrival.grid();
    let workload_scaled = T::from_f64_exact(stage.workload as f64) / sqrt_n;

    // Queueing then scaling, at full micro resolution.
    let scale_at = |p: &Path<T>, i: usize| {
        (p.at(i) - stage.lambda * micro.time_at(i)) / sqrt_n
    };
    // Scaling then queueing on the same point set.
    let fine_grid = make_grid(micro.dt() / nf, micro.horizon() / nf)?;
    let arr_scaled = Path::new(
        fine_grid,
        (0..micro.len()).map(|i| scale_at(&stage.arrival, i)).collect(),
    )?;
    let svc_scaled = Path::new(
        fine_grid,
        (0..micro.len())
            .map(|i| scale_at(&stage.service, i) - workload_scaled)
            .collect(),
    )?;
    let queued_after = queue_op(&arr_scaled, &svc_scaled)?.departure;

    let mut gap = T::zero();
    for i in 0..micro.len() {
        let d = (scale_at(&stage.departure, i) - queued_after.at(i)).abs();
        if d > gap {
            gap = d;
        }
    }
    if gap.as_f64() > COMMUTATION_TOL {
        return Err(Error::InvalidArgument(format!(
            "commutation identity violated: gap {gap} exceeds {COMMUTATION_TOL}"
        )));
    }

    Ok(ScaledDeparture {
        path: diffusive_scale(&stage.departure, n, stage.lambda)?,
        workload_scaled,
        commutation_gap: gap,
    })
}
