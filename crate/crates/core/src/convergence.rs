//! Sample-size sweeps: how fast subsets of a dataset approach the
//! statistics of the full dataset.

use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamatrix::DataMatrix;
use crate::numeric::{logspace, mean_and_stderr, symmetric_spectral_norm};
use crate::rmtstats::{r_statistics, GOE_MEAN_R};
use crate::spectra::{detect_bulk, eigenvalues, fit_power_law, gram, spectral_entropy, BulkConfig, GramMatrix};
use crate::{Error, Result, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub bulk: BulkConfig,
    /// Relative tolerance of the power iteration for spectral norms.
    pub norm_tolerance: f64,
    pub norm_max_iter: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { bulk: BulkConfig::default(), norm_tolerance: 1e-6, norm_max_iter: 20_000 }
    }
}

/// Seed-averaged value with its standard error and the number of seeds that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, stderr) = mean_and_stderr(values);
        Some(Self { mean, stderr, samples: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    /// `|⟨r⟩_M - r_GOE| / r_GOE`. `None` when no subset had a usable bulk.
    pub delta: Option<Estimate>,
    /// `|α_M - α_full|`.
    pub alpha_distance: Option<Estimate>,
    /// `‖Σ_M - Σ_full‖₂ / ‖Σ_full‖₂`.
    pub epsilon: Estimate,
    pub entropy: Option<Estimate>,
    pub r_mean: Option<Estimate>,
    pub alpha: Option<Estimate>,
    /// Seeds whose subset could not support the bulk statistics.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReference {
    pub r_goe: f64,
    pub r_full: f64,
    pub alpha_full: f64,
    pub entropy_full: f64,
    pub sigma_full_norm: f64,
    pub m_full: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSweep {
    pub points: Vec<SweepPoint>,
    pub reference: SweepReference,
    pub seeds_per_point: usize,
    pub seed: RngSeed,
}

impl ConvergenceSweep {
    pub fn m_values(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.m).collect()
    }

    /// `(M, value)` pairs of a metric, skipping points where it is missing.
    pub fn series(&self, metric: Metric) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                let v = match metric {
                    Metric::Delta => p.delta.map(|e| e.mean),
                    Metric::AlphaDistance => p.alpha_distance.map(|e| e.mean),
                    Metric::Epsilon => Some(p.epsilon.mean),
                    Metric::Entropy => p.entropy.map(|e| e.mean),
                };
                v.map(|v| (p.m, v))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Delta,
    AlphaDistance,
    Epsilon,
    Entropy,
}

struct SubsetStats {
    r_mean: Option<f64>,
    alpha: Option<f64>,
    entropy: Option<f64>,
    epsilon: f64,
}

fn diff_norm(a: &GramMatrix, b: &GramMatrix, cfg: &SweepConfig) -> Result<f64> {
    let diff = a.as_ref() - b.as_ref();
    symmetric_spectral_norm(diff.as_ref(), cfg.norm_tolerance, cfg.norm_max_iter)
}

fn subset_stats(x: &DataMatrix, full: &GramMatrix, cfg: &SweepConfig) -> Result<SubsetStats> {
    let g = gram(x);
    let epsilon = diff_norm(&g, full, cfg)?;
    let spectrum = eigenvalues(&g)?;
    let (mut r_mean, mut alpha, mut entropy) = (None, None, None);
    if let Ok(with_bulk) = detect_bulk(&spectrum, &cfg.bulk) {
        r_mean = r_statistics(&with_bulk).ok().map(|r| r.mean);
        alpha = fit_power_law(&with_bulk).ok().map(|f| f.alpha);
        entropy = spectral_entropy(&with_bulk).ok();
    }
    Ok(SubsetStats { r_mean, alpha, entropy, epsilon })
}

/// Sorted column indices of the `k`-th subset of size `m`.
fn subset_indices(m_full: usize, m: usize, seed: RngSeed, k: usize) -> Vec<usize> {
    let mut rng = seed.derive(m as u64).rng_for(k as u64);
    let mut idx = sample(&mut rng, m_full, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Convergence metrics for each subset size in `m_values`.
///
/// Every (M, seed) unit draws its own column subset without replacement and
/// is evaluated independently; results are reduced in seed order.
pub fn sweep(
    x_full: &DataMatrix,
    m_values: &[usize],
    seeds_per_point: usize,
    seed: RngSeed,
    cfg: &SweepConfig,
) -> Result<ConvergenceSweep> {
    if seeds_per_point < 1 {
        return Err(Error::InvalidArgument("seeds_per_point must be >= 1".into()));
    }
    if m_values.is_empty() {
        return Err(Error::InvalidArgument("empty M grid".into()));
    }
    let m_full = x_full.m();
    if let Some(&bad) = m_values.iter().find(|&&m| m > m_full || m < 1) {
        return Err(Error::InvalidArgument(format!("M = {bad} outside 1..={m_full}")));
    }
    let mut m_sorted = m_values.to_vec();
    m_sorted.sort_unstable();
    m_sorted.dedup();

    let full = gram(x_full);
    let sigma_full_norm = symmetric_spectral_norm(full.as_ref(), cfg.norm_tolerance, cfg.norm_max_iter)?;
    if !(sigma_full_norm > 0.0) {
        return Err(Error::Numeric("full Gram matrix is zero".into()));
    }
    let full_spectrum = detect_bulk(&eigenvalues(&full)?, &cfg.bulk)?;
    let alpha_full = fit_power_law(&full_spectrum)?.alpha;
    let r_full = r_statistics(&full_spectrum)?.mean;
    let entropy_full = spectral_entropy(&full_spectrum)?;

    let units: Vec<(usize, usize)> =
        m_sorted.iter().flat_map(|&m| (0..seeds_per_point).map(move |k| (m, k))).collect();
    let results: Vec<Result<SubsetStats>> = units
        .par_iter()
        .map(|&(m, k)| {
            let idx = subset_indices(m_full, m, seed, k);
            let sub = x_full.select_columns(&idx)?;
            subset_stats(&sub, &full, cfg)
        })
        .collect();

    let mut points = Vec::with_capacity(m_sorted.len());
    let mut it = results.into_iter();
    for &m in &m_sorted {
        let mut stats = Vec::with_capacity(seeds_per_point);
        for _ in 0..seeds_per_point {
            stats.push(it.next().expect("one result per unit")?);
        }
        let collect = |f: &dyn Fn(&SubsetStats) -> Option<f64>| -> Vec<f64> { stats.iter().filter_map(f).collect() };
        let r_vals = collect(&|s| s.r_mean);
        let a_vals = collect(&|s| s.alpha);
        let delta: Vec<f64> = r_vals.iter().map(|r| (r - GOE_MEAN_R).abs() / GOE_MEAN_R).collect();
        let adist: Vec<f64> = a_vals.iter().map(|a| (a - alpha_full).abs()).collect();
        let eps: Vec<f64> = stats.iter().map(|s| s.epsilon / sigma_full_norm).collect();
        let skipped = stats.iter().filter(|s| s.r_mean.is_none() || s.alpha.is_none()).count();
        if skipped > 0 {
            log::info!("M = {m}: {skipped} of {seeds_per_point} subsets lack a usable bulk");
        }
        points.push(SweepPoint {
            m,
            delta: Estimate::from_values(&delta),
            alpha_distance: Estimate::from_values(&adist),
            epsilon: Estimate::from_values(&eps).expect("at least one seed"),
            entropy: Estimate::from_values(&collect(&|s| s.entropy)),
            r_mean: Estimate::from_values(&r_vals),
            alpha: Estimate::from_values(&a_vals),
            skipped,
        });
    }
    Ok(ConvergenceSweep {
        points,
        reference: SweepReference {
            r_goe: GOE_MEAN_R,
            r_full,
            alpha_full,
            entropy_full,
            sigma_full_norm,
            m_full,
            d: x_full.d(),
        },
        seeds_per_point,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    /// Number of trailing points averaged into the plateau.
    pub tail_points: usize,
    /// Relative band around the plateau.
    pub tolerance: f64,
    pub min_points: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { tail_points: 3, tolerance: 0.2, min_points: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Mcrit {
    Converged { m: usize, plateau: f64 },
    NotConverged,
}

impl Mcrit {
    pub fn value(&self) -> Option<usize> {
        match self {
            Mcrit::Converged { m, .. } => Some(*m),
            Mcrit::NotConverged => None,
        }
    }
}

/// Smallest M from which the series stays within `tolerance` of its plateau
/// (the mean of the last `tail_points` values).
///
/// Not converged when the tail itself is not flat to within the tolerance, or
/// when the series does not start above the band.
pub fn locate_mcrit_in(series: &[(usize, f64)], cfg: &PlateauConfig) -> Result<Mcrit> {
    if series.len() < cfg.min_points.max(cfg.tail_points + 1) {
        return Err(Error::InsufficientSpectrum(format!(
            "plateau detection needs {} points, got {}",
            cfg.min_points,
            series.len()
        )));
    }
    let tail = &series[series.len() - cfg.tail_points..];
    let plateau = tail.iter().map(|p| p.1).sum::<f64>() / cfg.tail_points as f64;
    let band = cfg.tolerance * plateau.abs();
    let within = |v: f64| (v - plateau).abs() <= band;
    if !tail.iter().all(|p| within(p.1)) || series[0].1 <= plateau + band {
        return Ok(Mcrit::NotConverged);
    }
    let first_stable = series.iter().rposition(|p| !within(p.1)).map_or(0, |i| i + 1);
    Ok(Mcrit::Converged { m: series[first_stable].0, plateau })
}

pub fn locate_mcrit(sweep: &ConvergenceSweep, metric: Metric, cfg: &PlateauConfig) -> Result<Mcrit> {
    locate_mcrit_in(&sweep.series(metric), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrajectory {
    pub m_values: Vec<usize>,
    /// `H_M / H_full`.
    pub normalized_entropy: Vec<Option<f64>>,
    /// `δ_M / δ_ref`, with `δ_ref` the value at the largest M.
    pub normalized_delta: Vec<Option<f64>>,
    /// `Δ_M / Δ_ref`, with `Δ_ref` the value at the largest M.
    pub normalized_alpha_distance: Vec<Option<f64>>,
}

/// Entropy and the bulk metrics normalized by their reference values.
/// A zero reference leaves that series empty (all `None`).
pub fn entropy_trajectory(sweep: &ConvergenceSweep) -> Result<EntropyTrajectory> {
    let h_full = sweep.reference.entropy_full;
    if !(h_full > 0.0) {
        return Err(Error::Numeric("full-data entropy is not positive".into()));
    }
    let last = sweep.points.last().ok_or_else(|| Error::InvalidArgument("empty sweep".into()))?;
    let normalize = |value: Option<Estimate>, reference: Option<Estimate>| -> Option<f64> {
        let r = reference?.mean;
        (r > 0.0).then_some(value?.mean / r)
    };
    Ok(EntropyTrajectory {
        m_values: sweep.m_values(),
        normalized_entropy: sweep.points.iter().map(|p| p.entropy.map(|e| e.mean / h_full)).collect(),
        normalized_delta: sweep.points.iter().map(|p| normalize(p.delta, last.delta)).collect(),
        normalized_alpha_distance: sweep
            .points
            .iter()
            .map(|p| normalize(p.alpha_distance, last.alpha_distance))
            .collect(),
    })
}

/// Grid of subset sizes: `log:LO:HI:N` (log-spaced, rounded, deduplicated)
/// or a comma-separated list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MGrid(pub Vec<usize>);

impl MGrid {
    pub fn log(lo: usize, hi: usize, n: usize) -> Result<Self> {
        if lo < 1 || hi < lo || n < 1 {
            return Err(Error::InvalidArgument(format!("invalid log grid {lo}:{hi}:{n}")));
        }
        let mut v: Vec<usize> = logspace(lo as f64, hi as f64, n).into_iter().map(|x| x.round() as usize).collect();
        v.dedup();
        Ok(Self(v))
    }

    /// Default grid of 12 points per decade.
    pub fn per_decade(lo: usize, hi: usize) -> Result<Self> {
        let decades = (hi as f64 / lo as f64).log10();
        Self::log(lo, hi, (12.0 * decades).round() as usize + 1)
    }
}

impl FromStr for MGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse M grid {s:?}"));
        if let Some(rest) = s.strip_prefix("log:") {
            let parts: Vec<usize> = rest.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
            match parts.as_slice() {
                [lo, hi, n] => Self::log(*lo, *hi, *n),
                _ => Err(bad()),
            }
        } else {
            let mut v: Vec<usize> = s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
            if v.is_empty() || v.contains(&0) {
                return Err(bad());
            }
            v.sort_unstable();
            v.dedup();
            Ok(Self(v))
        }
    }
}

/// Least-squares slope of `ln y` against `ln M`.
pub fn log_log_slope(series: &[(usize, f64)]) -> Result<f64> {
    let x: Vec<f64> = series.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    Ok(crate::numeric::fit_line(&x, &y)?.slope)
}
