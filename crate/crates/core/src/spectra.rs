//! Gram matrices, their spectra, and bulk-level summaries.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::datamatrix::DataMatrix;
use crate::numeric::{fit_line, linspace};
use crate::{faer_par, Error, Result};

/// Relative level below which eigenvalues count as numerical zeros.
pub const ZERO_TOLERANCE: f64 = 1e-10;

/// Symmetric `d x d` matrix `(1/M) X Xᵀ`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: Mat<f64>,
    m: usize,
}

impl GramMatrix {
    /// Wraps a symmetric matrix. `m` is the sample count it was estimated from.
    pub fn from_matrix(matrix: Mat<f64>, m: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!("Gram matrix must be square, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        Ok(Self { matrix, m })
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.d()).map(|i| self.matrix[(i, i)]).sum()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.matrix
    }
}

/// Feature-feature Gram matrix of the columns of `x`.
pub fn gram(x: &DataMatrix) -> GramMatrix {
    if !x.preprocessing().centered {
        log::warn!("computing a Gram matrix of uncentered data ({})", x.source());
    }
    let d = x.d();
    let xr = x.as_mat();
    let mut g = Mat::<f64>::zeros(d, d);
    matmul(g.as_mut(), Accum::Replace, xr, xr.transpose(), 1.0 / x.m() as f64, faer_par());
    symmetrize(&mut g);
    GramMatrix { matrix: g, m: x.m() }
}

pub(crate) fn symmetrize(g: &mut Mat<f64>) {
    let d = g.nrows();
    for j in 0..d {
        for i in j + 1..d {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

fn check_finite(a: MatRef<'_, f64>) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::Numeric(format!("non-finite matrix entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, descending. Negative values are kept.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_finite(a)?;
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// Full eigendecomposition of a symmetric matrix: eigenvalues ascending and
/// the matching eigenvectors as columns.
pub fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    check_finite(a)?;
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Spectrum of a positive semidefinite Gram matrix.
pub fn eigenvalues(g: &GramMatrix) -> Result<Spectrum> {
    let mut ev = symmetric_eigenvalues(g.as_ref())?;
    let top = ev.first().copied().unwrap_or(0.0).max(0.0);
    for v in ev.iter_mut() {
        if *v < 0.0 {
            if *v < -ZERO_TOLERANCE * top {
                return Err(Error::Numeric(format!(
                    "Gram matrix has eigenvalue {v:e}, below -{ZERO_TOLERANCE:e} of the maximum {top:e}"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(Spectrum { eigenvalues: ev, d: g.d(), m: g.m(), bulk_range: None })
}

/// Convenience: Gram matrix and its spectrum.
pub fn spectrum_of(x: &DataMatrix) -> Result<Spectrum> {
    eigenvalues(&gram(x))
}

/// 1-based inclusive index range into a descending spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulkRange {
    pub start: usize,
    pub end: usize,
}

impl BulkRange {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    d: usize,
    m: usize,
    bulk_range: Option<BulkRange>,
}

impl Spectrum {
    /// Any real spectrum (sorted descending here). `m` is informational.
    pub fn from_values(mut eigenvalues: Vec<f64>, m: usize) -> Result<Self> {
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite eigenvalue".into()));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { d: eigenvalues.len(), eigenvalues, m, bulk_range: None })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bulk_range(&self) -> Option<BulkRange> {
        self.bulk_range
    }

    pub fn with_bulk_range(mut self, range: BulkRange) -> Result<Self> {
        if range.start < 1 || range.end > self.d || range.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "bulk range {}..={} outside 1..={}",
                range.start, range.end, self.d
            )));
        }
        self.bulk_range = Some(range);
        Ok(self)
    }

    /// Bulk eigenvalues, descending.
    pub fn bulk(&self) -> Result<&[f64]> {
        let r = self.require_bulk()?;
        Ok(&self.eigenvalues[r.start - 1..r.end])
    }

    fn require_bulk(&self) -> Result<BulkRange> {
        self.bulk_range
            .ok_or_else(|| Error::InvalidArgument("spectrum has no bulk range; run detect_bulk first".into()))
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkConfig {
    /// First bulk index (1-based).
    pub i_start: usize,
    /// Half-width of the sliding slope window (21 points for 10).
    pub half_window: usize,
    /// Number of indices after `i_start` used for the reference slope.
    pub reference_span: usize,
    /// Allowed absolute deviation of the local slope from the reference.
    pub slope_tolerance: f64,
    /// Local slope magnitude, relative to the reference, that marks a cliff.
    pub cliff_ratio: f64,
    /// Eigenvalues below this fraction of the maximum are ignored.
    pub floor: f64,
    pub min_eigenvalues: usize,
}

impl Default for BulkConfig {
    fn default() -> Self {
        Self {
            i_start: 10,
            half_window: 10,
            reference_span: 30,
            slope_tolerance: 0.5,
            cliff_ratio: 2.0,
            floor: 1e-12,
            min_eigenvalues: 50,
        }
    }
}

fn log_log_slope(ev: &[f64], lo: usize, hi: usize) -> Result<f64> {
    let x: Vec<f64> = (lo..=hi).map(|i| (i as f64).ln()).collect();
    let y: Vec<f64> = (lo..=hi).map(|i| ev[i - 1].ln()).collect();
    Ok(fit_line(&x, &y)?.slope)
}

/// Locates where the power-law bulk ends.
///
/// A reference slope is fitted on `[i_start, i_start + reference_span]`. A
/// window of `2 * half_window + 1` indices then slides towards the tail; the
/// bulk ends just before the first window whose log-log slope deviates from
/// the reference by `slope_tolerance` or more, or whose magnitude reaches
/// `cliff_ratio` times the reference. Eigenvalues under the floor never count.
pub fn detect_bulk(s: &Spectrum, cfg: &BulkConfig) -> Result<Spectrum> {
    let ev = &s.eigenvalues;
    let top = ev.first().copied().unwrap_or(0.0);
    let n_valid = ev.iter().take_while(|&&v| v > cfg.floor * top && v > 0.0).count();
    if n_valid < cfg.min_eigenvalues {
        return Err(Error::InsufficientSpectrum(format!(
            "{n_valid} eigenvalues above the numerical floor, need {}",
            cfg.min_eigenvalues
        )));
    }
    let i_start = cfg.i_start.max(1);
    let ref_end = (i_start + cfg.reference_span).min(n_valid);
    if ref_end < i_start + 2 {
        return Err(Error::InsufficientSpectrum(format!("bulk start {i_start} leaves no room for a reference fit")));
    }
    let reference = log_log_slope(ev, i_start, ref_end)?;
    let mut d_bulk = n_valid;
    for i in (i_start + cfg.half_window)..=n_valid {
        let lo = i.saturating_sub(cfg.half_window).max(i_start);
        let hi = (i + cfg.half_window).min(n_valid);
        let local = log_log_slope(ev, lo, hi)?;
        if (local - reference).abs() >= cfg.slope_tolerance || local.abs() >= cfg.cliff_ratio * reference.abs() {
            d_bulk = i - 1;
            break;
        }
    }
    s.clone().with_bulk_range(BulkRange { start: i_start, end: d_bulk.max(i_start) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub fit_range: BulkRange,
}

pub const MIN_FIT_SPAN: usize = 30;

fn require_span(r: BulkRange) -> Result<()> {
    if r.len() < MIN_FIT_SPAN {
        return Err(Error::InsufficientSpectrum(format!(
            "bulk {}..={} spans {} indices, need at least {MIN_FIT_SPAN}",
            r.start,
            r.end,
            r.len()
        )));
    }
    Ok(())
}

/// OLS of `ln λ_i` on `ln i` over the bulk, `λ_i ∝ i^{-1-α}`.
pub fn fit_power_law(s: &Spectrum) -> Result<PowerLawFit> {
    let r = s.require_bulk()?;
    require_span(r)?;
    let bulk = s.bulk()?;
    if let Some(pos) = bulk.iter().position(|&v| v <= 0.0) {
        return Err(Error::Numeric(format!("nonpositive eigenvalue at index {} inside the bulk", r.start + pos)));
    }
    let x: Vec<f64> = (r.start..=r.end).map(|i| (i as f64).ln()).collect();
    let y: Vec<f64> = bulk.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(PowerLawFit {
        alpha: -fit.slope - 1.0,
        amplitude: fit.intercept.exp(),
        r_squared: fit.r_squared.clamp(0.0, 1.0),
        fit_range: r,
    })
}

/// Shannon entropy (natural log) of the normalized bulk eigenvalues.
pub fn spectral_entropy(s: &Spectrum) -> Result<f64> {
    let r = s.require_bulk()?;
    require_span(r)?;
    let bulk = s.bulk()?;
    if let Some(pos) = bulk.iter().position(|&v| v <= 0.0) {
        return Err(Error::Numeric(format!("nonpositive eigenvalue at index {} inside the bulk", r.start + pos)));
    }
    let total: f64 = bulk.iter().sum();
    Ok(-bulk
        .iter()
        .map(|v| {
            let p = v / total;
            p * p.ln()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramNormalization {
    /// Values divided by the largest bulk eigenvalue; bins span `[0, 1]`.
    MaxScaled,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub normalization: HistogramNormalization,
    /// Number of samples that fell inside the edges.
    pub count: usize,
}

impl DensityHistogram {
    /// Bins `samples` into the given ascending edges (last bin closed).
    /// Samples outside the edges are ignored.
    pub fn from_samples(samples: &[f64], bin_edges: Vec<f64>, normalization: HistogramNormalization) -> Result<Self> {
        if bin_edges.len() < 3 {
            return Err(Error::InvalidArgument("a histogram needs at least 2 bins".into()));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) || bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("histogram edges must be finite and strictly ascending".into()));
        }
        let bins = bin_edges.len() - 1;
        let (lo, hi) = (bin_edges[0], bin_edges[bins]);
        let mut counts = vec![0usize; bins];
        for &v in samples {
            if !(lo..=hi).contains(&v) {
                continue;
            }
            let k = bin_edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
            counts[k] += 1;
        }
        let count: usize = counts.iter().sum();
        if count == 0 {
            return Err(Error::InsufficientSpectrum("no samples fall inside the histogram range".into()));
        }
        let masses = counts.iter().map(|&c| c as f64 / count as f64).collect();
        Ok(Self { bin_edges, masses, normalization, count })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass divided by bin width.
    pub fn densities(&self) -> Vec<f64> {
        self.bin_edges.windows(2).zip(&self.masses).map(|(w, m)| m / (w[1] - w[0])).collect()
    }
}

/// Equal-width histogram of the bulk eigenvalues.
pub fn histogram(s: &Spectrum, bins: usize, normalization: HistogramNormalization) -> Result<DensityHistogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("bins must be >= 2, got {bins}")));
    }
    let bulk = s.bulk()?;
    let edges = match normalization {
        HistogramNormalization::MaxScaled => linspace(0.0, 1.0, bins + 1),
        HistogramNormalization::Raw => {
            let lo = bulk.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = bulk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-9 * hi.abs().max(lo.abs()) {
                linspace(lo, hi, bins + 1)
            } else {
                linspace(lo - 0.5, hi + 0.5, bins + 1)
            }
        }
    };
    histogram_with_edges(s, edges, normalization)
}

/// Histogram of the bulk on caller-provided edges, so two spectra can share bins.
pub fn histogram_with_edges(
    s: &Spectrum,
    edges: Vec<f64>,
    normalization: HistogramNormalization,
) -> Result<DensityHistogram> {
    let bulk = s.bulk()?;
    let values: Vec<f64> = match normalization {
        HistogramNormalization::Raw => bulk.to_vec(),
        HistogramNormalization::MaxScaled => {
            let top = bulk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(top > 0.0) {
                return Err(Error::Numeric("max-scaled histogram needs a positive bulk maximum".into()));
            }
            bulk.iter().map(|v| v / top).collect()
        }
    };
    DensityHistogram::from_samples(&values, edges, normalization)
}

/// Smoothing mass added to every bin of `q`.
pub const KL_SMOOTHING: f64 = 1e-10;

/// `Σ p ln(p/q)` with `q` smoothed by [`KL_SMOOTHING`] per bin.
pub fn kl_divergence(p: &DensityHistogram, q: &DensityHistogram) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::InvalidArgument("KL divergence needs identical bin edges".into()));
    }
    let norm = 1.0 + KL_SMOOTHING * q.masses.len() as f64;
    let kl: f64 = p
        .masses
        .iter()
        .zip(&q.masses)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / ((qi + KL_SMOOTHING) / norm)).ln())
        .sum();
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_gaussian, PopulationCovariance};
    use crate::testutil::jacobi_eigenvalues;
    use crate::RngSeed;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn power_law_spectrum(n: usize, amp: f64, exponent: f64) -> Spectrum {
        Spectrum::from_values((1..=n).map(|i| amp * (i as f64).powf(-exponent)).collect(), n).unwrap()
    }

    #[test]
    fn gram_of_identity() {
        let x = DataMatrix::from_fn(3, 3, "I", |i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        let g = gram(&x);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g.as_ref()[(i, j)], if i == j { 1.0 / 3.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn gram_of_single_column() {
        let x = DataMatrix::from_column_major(vec![1.0, 2.0, 0.0], 3, 1, "x").unwrap();
        let s = spectrum_of(&x).unwrap();
        assert_abs_diff_eq!(s.eigenvalues()[0], 5.0, epsilon = 1e-12);
        assert!(s.eigenvalues()[1..].iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn ugd_gram_near_identity() {
        let d = 100;
        let cov = PopulationCovariance::identity(d, 1.0).unwrap();
        let x = sample_gaussian(&cov, 1_000_000, RngSeed::new(1, 0)).unwrap();
        let mut g = gram(&x).into_inner();
        for i in 0..d {
            g[(i, i)] -= 1.0;
        }
        let err = crate::numeric::symmetric_spectral_norm(g.as_ref(), 1e-8, 10_000).unwrap();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn diagonal_and_rank_one_eigenvalues() {
        let g = GramMatrix::from_matrix(Mat::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 }), 3)
            .unwrap();
        let s = eigenvalues(&g).unwrap();
        for (a, b) in s.eigenvalues().iter().zip([3.0, 2.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let x = [1.0, 2.0, 0.0, 0.0];
        let g = GramMatrix::from_matrix(Mat::from_fn(4, 4, |i, j| x[i] * x[j]), 1).unwrap();
        let s = eigenvalues(&g).unwrap();
        assert_abs_diff_eq!(s.eigenvalues()[0], 5.0, epsilon = 1e-13);
        assert!(s.eigenvalues()[1..].iter().all(|&v| v == 0.0 || v.abs() < 1e-13));
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = GramMatrix::from_matrix(Mat::from_fn(2, 2, |i, _| if i == 0 { f64::NAN } else { 1.0 }), 1).unwrap();
        assert!(matches!(eigenvalues(&g), Err(Error::Numeric(_))));
    }

    #[test]
    fn eigen_residuals_small() {
        let n = 40;
        let a = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 7 + i * j) % 13) as f64 - 6.0);
        let (vals, vecs) = symmetric_eigen(a.as_ref()).unwrap();
        let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let mut res = 0.0f64;
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[(i, j)] * vecs[(j, k)]).sum();
                res += (av - vals[k] * vecs[(i, k)]).powi(2);
            }
            assert!(res.sqrt() <= 1e-8 * norm);
        }
    }

    #[test]
    fn exact_power_law_bulk_and_fit() {
        let s = power_law_spectrum(1000, 1.0, 1.5);
        let b = detect_bulk(&s, &BulkConfig::default()).unwrap();
        assert_eq!(b.bulk_range(), Some(BulkRange { start: 10, end: 1000 }));

        let s = detect_bulk(&power_law_spectrum(1000, 7.0, 1.25), &BulkConfig::default()).unwrap();
        let fit = fit_power_law(&s).unwrap();
        assert_abs_diff_eq!(fit.alpha, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.amplitude, 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cliff_is_located() {
        let ev: Vec<f64> = (1..=1000).map(|i| if i <= 500 { (i as f64).powf(-1.5) } else { 1e-20 }).collect();
        let s = detect_bulk(&Spectrum::from_values(ev, 1000).unwrap(), &BulkConfig::default()).unwrap();
        let end = s.bulk_range().unwrap().end;
        assert!(end.abs_diff(500) <= 25, "{end}");

        // A steep drop that stays above the floor.
        let ev: Vec<f64> = (1..=1000)
            .map(|i| {
                let i = i as f64;
                if i <= 400.0 { i.powf(-1.2) } else { 400f64.powf(-1.2) * (400.0 / i).powi(12) }
            })
            .collect();
        let s = detect_bulk(&Spectrum::from_values(ev, 1000).unwrap(), &BulkConfig::default()).unwrap();
        let end = s.bulk_range().unwrap().end;
        assert!(end.abs_diff(400) <= 25, "{end}");
    }

    #[test]
    fn too_few_eigenvalues() {
        let ev: Vec<f64> = (1..=100).map(|i| if i <= 40 { 1.0 / i as f64 } else { 0.0 }).collect();
        let err = detect_bulk(&Spectrum::from_values(ev, 40).unwrap(), &BulkConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSpectrum(_)));
    }

    #[test]
    fn entropy_of_uniform_bulk() {
        let s = Spectrum::from_values(vec![2.0; 200], 200)
            .unwrap()
            .with_bulk_range(BulkRange { start: 10, end: 200 })
            .unwrap();
        assert_abs_diff_eq!(spectral_entropy(&s).unwrap(), (191f64).ln(), epsilon = 1e-12);
        let tiny = s.with_bulk_range(BulkRange { start: 1, end: 1 }).unwrap();
        assert!(matches!(spectral_entropy(&tiny), Err(Error::InsufficientSpectrum(_))));
    }

    #[test]
    fn correlated_entropy_below_uncorrelated() {
        let (d, m) = (200, 4000);
        let ugd = sample_gaussian(&PopulationCovariance::identity(d, 1.0).unwrap(), m, RngSeed::new(2, 0)).unwrap();
        let cgd = sample_gaussian(&PopulationCovariance::cgd(d, 1.0, 0.25).unwrap(), m, RngSeed::new(2, 0)).unwrap();
        let range = BulkRange { start: 10, end: 150 };
        let h = |x: &DataMatrix| {
            spectral_entropy(&spectrum_of(x).unwrap().with_bulk_range(range).unwrap()).unwrap()
        };
        assert!(h(&cgd) < h(&ugd));
    }

    #[test]
    fn two_value_histogram() {
        let s = Spectrum::from_values(vec![1.0, 3.0], 2)
            .unwrap()
            .with_bulk_range(BulkRange { start: 1, end: 2 })
            .unwrap();
        let h = histogram(&s, 2, HistogramNormalization::Raw).unwrap();
        assert_eq!(h.masses, vec![0.5, 0.5]);
        assert!(histogram(&s, 1, HistogramNormalization::Raw).is_err());
        let h = histogram(&s, 4, HistogramNormalization::MaxScaled).unwrap();
        assert_eq!(h.masses, vec![0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn kl_closed_forms() {
        let e = vec![0.0, 1.0, 2.0];
        let p = DensityHistogram { bin_edges: e.clone(), masses: vec![1.0, 0.0], normalization: HistogramNormalization::Raw, count: 1 };
        let q = DensityHistogram { bin_edges: e.clone(), masses: vec![0.5, 0.5], normalization: HistogramNormalization::Raw, count: 2 };
        assert!(kl_divergence(&p, &p).unwrap() < 1e-9);
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), 2f64.ln(), epsilon = 1e-6);
        let r = DensityHistogram { bin_edges: vec![0.0, 1.0, 3.0], ..q };
        assert!(kl_divergence(&p, &r).is_err());
    }

    fn random_masses(raw: &[f64]) -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kl_is_nonnegative(
            a in proptest::collection::vec(0.0f64..1.0, 8),
            b in proptest::collection::vec(0.0f64..1.0, 8),
        ) {
            prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
            let edges = linspace(0.0, 1.0, 9);
            let p = DensityHistogram { bin_edges: edges.clone(), masses: random_masses(&a), normalization: HistogramNormalization::Raw, count: 8 };
            let q = DensityHistogram { bin_edges: edges, masses: random_masses(&b), normalization: HistogramNormalization::Raw, count: 8 };
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap() <= 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn histogram_mass_is_one(values in proptest::collection::vec(1e-3f64..1e3, 2..300), bins in 2usize..100) {
            let n = values.len();
            let s = Spectrum::from_values(values, n).unwrap().with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
            for mode in [HistogramNormalization::Raw, HistogramNormalization::MaxScaled] {
                let h = histogram(&s, bins, mode).unwrap();
                prop_assert!((h.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert_eq!(h.count, n);
            }
        }

        #[test]
        fn trace_is_preserved(d in 2usize..16, m in 1usize..40, seed in any::<u64>()) {
            let cov = PopulationCovariance::cgd(d, 1.0, 0.25).unwrap();
            let x = sample_gaussian(&cov, m, RngSeed::new(seed, 0)).unwrap();
            let g = gram(&x);
            let s = eigenvalues(&g).unwrap();
            prop_assert!((s.trace() - g.trace()).abs() <= 1e-8 * g.trace());
            let active = s.eigenvalues().iter().filter(|&&v| v > 1e-10 * s.eigenvalues()[0]).count();
            prop_assert!(active <= m);
        }

        #[test]
        fn small_spectra_match_jacobi(entries in proptest::collection::vec(-5.0f64..5.0, 36)) {
            let n = 8;
            let a = Mat::from_fn(n, n, |i, j| entries[(i.min(j) * 8 + i.max(j)) % 36]);
            let dense: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
            let mut oracle = jacobi_eigenvalues(&dense, n);
            oracle.sort_by(|x, y| y.total_cmp(x));
            let got = symmetric_eigenvalues(a.as_ref()).unwrap();
            for (g, o) in got.iter().zip(&oracle) {
                prop_assert!((g - o).abs() <= 1e-8);
            }
        }

        #[test]
        fn entropy_bounded_by_log_n(values in proptest::collection::vec(1e-3f64..1e3, 30..200)) {
            let n = values.len();
            let s = Spectrum::from_values(values, n).unwrap().with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
            prop_assert!(spectral_entropy(&s).unwrap() <= (n as f64).ln() + 1e-12);
        }
    }
}
