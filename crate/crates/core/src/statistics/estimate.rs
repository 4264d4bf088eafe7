use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::scalar::pairwise_sum;

/// Sample mean with its standard error `s / sqrt(M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let m = values.len();
        if m < 2 {
            return Err(Error::arg(format!("need at least 2 samples for a standard error, got {m}")));
        }
        let mean = pairwise_sum(values) / m as f64;
        let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let variance = pairwise_sum(&squares) / (m - 1) as f64;
        Ok(Self { mean, standard_error: (variance / m as f64).sqrt(), samples: m })
    }
}

/// Runs `f` on path indices `0..m` and returns results in index order.
///
/// `workers == 0` uses the global rayon pool. Since every path draws from
/// its own substream the output does not depend on the worker count.
pub fn map_paths<R, F>(m: usize, workers: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    let run = || (0..m as u64).into_par_iter().map(&f).collect::<Result<Vec<R>>>();
    if workers == 0 {
        return run();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::arg(format!("cannot build worker pool: {e}")))?
        .install(run)
}

/// Monte Carlo mean of a per-path functional over `m` paths.
pub fn estimate_mean<F>(m: usize, workers: usize, functional: F) -> Result<MeanEstimate>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    if m < 2 {
        return Err(Error::arg(format!("need at least 2 paths, got {m}")));
    }
    MeanEstimate::from_samples(&map_paths(m, workers, functional)?)
}

/// `(m1 - m2) / sqrt(se1^2 + se2^2)`; zero when both errors vanish and the
/// means agree exactly.
pub fn two_sample_z(a: &MeanEstimate, b: &MeanEstimate) -> f64 {
    let diff = a.mean - b.mean;
    let se = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
    if se == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Number of bins after pooling.
    pub bins: usize,
}

fn chi_square_p(statistic: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Ok(1.0);
    }
    if !statistic.is_finite() {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Adjacent bins are merged left to right until each pooled expected count
/// is at least 5; a short remainder joins the last pooled bin.
fn pool(observed: &[f64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    pooled
}

/// Goodness of fit of `observed` counts against `probabilities`.
pub fn chi_square_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(Error::arg("observed and probability vectors must be nonempty and equal length"));
    }
    if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::arg("probabilities must be finite and nonnegative"));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probabilities.iter().sum();
    if total_p <= 0.0 {
        return Err(Error::arg("probabilities sum to zero"));
    }
    let obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let exp: Vec<f64> = probabilities.iter().map(|p| p / total_p * n as f64).collect();
    let pooled = pool(&obs, &exp);
    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let df = pooled.len().saturating_sub(1);
    Ok(ChiSquareResult { statistic, degrees_of_freedom: df, p_value: chi_square_p(statistic, df)?, bins: pooled.len() })
}

/// Two-sample homogeneity test on aligned category counts.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::arg("count vectors must be nonempty and equal length"));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::arg("both samples must be nonempty"));
    }
    let n = (na + nb) as f64;
    // pool on the smaller expected count of the two samples
    let share = na.min(nb) as f64 / n;
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut acc = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        acc.0 += x;
        acc.1 += y;
        if (acc.0 + acc.1) as f64 * share >= 5.0 {
            bins.push(acc);
            acc = (0, 0);
        }
    }
    if acc != (0, 0) {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(x, y)| {
            let col = (x + y) as f64;
            let ea = col * na as f64 / n;
            let eb = col * nb as f64 / n;
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum();
    let df = bins.len().saturating_sub(1);
    Ok(ChiSquareResult { statistic, degrees_of_freedom: df, p_value: chi_square_p(statistic, df)?, bins: bins.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q_KS(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_sf(l: f64) -> f64 {
    if l < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * l * l).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction on the effective size).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::arg("samples contain NaN"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let l = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(l) })
}
