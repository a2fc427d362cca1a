//! Statistical verification toolkit: each routine turns a distributional
//! claim into a deterministic pass/fail [`TestReport`].
//!
//! Decision rules: alpha = 0.01 for distributional (KS) tests, four
//! standard-error bands for moment and correlation tests. Every
//! threshold is surfaced in the report so run artifacts carry their own
//! acceptance context.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::paths::Path;
use crate::real::Real;

/// Outcome of one statistical check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub sample_size: usize,
    pub pass: bool,
    pub notes: String,
}

/// Reference distribution for the one-sample KS test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CdfRef {
    Normal { mean: f64, var: f64 },
    Exponential { rate: f64 },
    Uniform01,
}

impl CdfRef {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            CdfRef::Normal { mean, var } => {
                let dist = Normal::new(mean, var.sqrt()).expect("valid normal parameters");
                dist.cdf(x)
            }
            CdfRef::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            CdfRef::Uniform01 => x.clamp(0.0, 1.0),
        }
    }

    fn describe(&self) -> String {
        match *self {
            CdfRef::Normal { mean, var } => format!("Normal(mean = {mean}, var = {var})"),
            CdfRef::Exponential { rate } => format!("Exponential(rate = {rate})"),
            CdfRef::Uniform01 => "Uniform(0, 1)".to_string(),
        }
    }
}

/// Survival function of the asymptotic Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`, truncated when the
/// terms drop below 1e-10.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..1000 {
        let term = (-2.0 * (k as f64).powi(2) * x * x).exp();
        if term < 1e-10 {
            break;
        }
        sum += sign * term;
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
/// Pass iff `p >= alpha`.
pub fn ks_test(samples: &[f64], reference: CdfRef, alpha: f64) -> Result<TestReport> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "KS test needs at least 8 samples, got {n}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = reference.cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let p = kolmogorov_survival(nf.sqrt() * d);
    Ok(TestReport {
        name: format!("ks vs {}", reference.describe()),
        statistic: d,
        threshold: alpha,
        p_value: Some(p),
        sample_size: n,
        pass: p >= alpha,
        notes: format!("pass iff p_value >= alpha = {alpha}; asymptotic Kolmogorov p-value"),
    })
}

/// Collect one increment per path over `[t_a, t_b]` and KS-test against
/// `Normal(mu (t_b - t_a), var (t_b - t_a))`.
pub fn increment_normality<T: Real>(
    paths: &[Path<T>],
    interval: (T, T),
    mu: f64,
    var: f64,
    alpha: f64,
) -> Result<TestReport> {
    if paths.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "increment normality needs at least 8 paths, got {}",
            paths.len()
        )));
    }
    let (t_a, t_b) = interval;
    if !(t_a < t_b) {
        return Err(Error::InvalidArgument(format!(
            "interval must satisfy t_a < t_b, got ({t_a}, {t_b})"
        )));
    }
    let grid = paths[0].grid();
    let ia = grid.index_of(t_a)?;
    let ib = grid.index_of(t_b)?;
    let mut increments = Vec::with_capacity(paths.len());
    for p in paths {
        paths[0].same_grid(p)?;
        increments.push((p.at(ib) - p.at(ia)).as_f64());
    }
    let len = (t_b - t_a).as_f64();
    let mut report = ks_test(
        &increments,
        CdfRef::Normal {
            mean: mu * len,
            var: var * len,
        },
        alpha,
    )?;
    report.name = format!(
        "increment normality on [{}, {}] vs {}",
        t_a.as_f64(),
        t_b.as_f64(),
        CdfRef::Normal {
            mean: mu * len,
            var: var * len
        }
        .describe()
    );
    Ok(report)
}

/// Pearson correlation check: pass iff `|rho| <= 4 / sqrt(N)`.
pub fn independence_check(x: &[f64], y: &[f64]) -> Result<TestReport> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "arrays must have equal length, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 30 {
        return Err(Error::InvalidArgument(format!(
            "independence check needs at least 30 pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput(
            "zero variance in a correlation input".to_string(),
        ));
    }
    let rho = sxy / (sxx * syy).sqrt();
    let threshold = 4.0 / nf.sqrt();
    // Quadrant concordance recorded alongside, as a second look at dependence.
    let quadrant = x
        .iter()
        .zip(y)
        .filter(|(&a, &b)| (a - mx) * (b - my) > 0.0)
        .count() as f64
        / nf;
    Ok(TestReport {
        name: "independence (Pearson correlation)".to_string(),
        statistic: rho.abs(),
        threshold,
        p_value: None,
        sample_size: n,
        pass: rho.abs() <= threshold,
        notes: format!(
            "pass iff |rho| <= 4/sqrt(N); zero correlation is necessary, not sufficient, \
             for independence; same-quadrant fraction = {quadrant:.4}"
        ),
    })
}

/// Four-standard-error check of sample mean and variance against
/// targets.
pub fn moment_check(samples: &[f64], target_mean: f64, target_var: f64) -> Result<TestReport> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::InvalidArgument(format!(
            "moment check needs at least 30 samples, got {n}"
        )));
    }
    if !(target_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target variance must be positive, got {target_var}"
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let mean_band = 4.0 * (target_var / nf).sqrt();
    let var_band = 4.0 * (2.0 / nf).sqrt();
    let mean_dev = (mean - target_mean).abs() / mean_band;
    let var_dev = (var / target_var - 1.0).abs() / var_band;
    let statistic = mean_dev.max(var_dev);
    Ok(TestReport {
        name: "moment check".to_string(),
        statistic,
        threshold: 1.0,
        p_value: None,
        sample_size: n,
        pass: statistic <= 1.0,
        notes: format!(
            "pass iff |mean - {target_mean}| <= {mean_band:.6e} and \
             |var/{target_var} - 1| <= {var_band:.6e}; \
             observed mean = {mean:.6e}, var = {var:.6e}"
        ),
    })
}
