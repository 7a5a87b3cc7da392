//! Local and global level statistics: unfolding, nearest-neighbour spacings,
//! spacing ratios and the spectral form factor, with GOE/Poisson references.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{linspace, ChebyshevFit};
use crate::spectra::{BulkRange, DensityHistogram, HistogramNormalization, Spectrum};
use crate::{Error, Result};

/// `⟨r⟩` for the Gaussian orthogonal ensemble, `4 - 2√3`.
pub const GOE_MEAN_R: f64 = 0.535_898_384_862_245_4;
/// `⟨r⟩` for uncorrelated (Poisson) levels, `2 ln 2 - 1`.
pub const POISSON_MEAN_R: f64 = 0.386_294_361_119_890_6;

pub const UNFOLD_DEGREE: usize = 12;
pub const MIN_UNFOLD_LEVELS: usize = 100;
pub const MIN_RATIO_LEVELS: usize = 50;
/// Allowed deviation of the unfolded mean spacing from 1.
pub const UNFOLD_QUALITY_TOLERANCE: f64 = 0.05;

/// Variable in which the staircase is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnfoldVariable {
    /// `ln λ` for positive spectra spanning at least a decade, `λ` otherwise.
    Auto,
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfoldConfig {
    pub degree: usize,
    pub variable: UnfoldVariable,
}

impl Default for UnfoldConfig {
    fn default() -> Self {
        Self { degree: UNFOLD_DEGREE, variable: UnfoldVariable::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedSpectrum {
    /// Unfolded levels, ascending.
    pub levels: Vec<f64>,
    /// Chebyshev fit of the staircase in the chosen variable.
    pub staircase_poly: ChebyshevFit,
    /// Variable actually used (never `Auto`).
    pub variable: UnfoldVariable,
    pub source_range: BulkRange,
    pub mean_spacing: f64,
    pub passes_quality_gate: bool,
}

impl UnfoldedSpectrum {
    /// Wraps already-unfolded levels (sorted here).
    pub fn from_levels(mut levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("levels must be finite and non-empty".into()));
        }
        levels.sort_by(f64::total_cmp);
        let n = levels.len();
        let mean_spacing = if n > 1 { (levels[n - 1] - levels[0]) / (n - 1) as f64 } else { 1.0 };
        Ok(Self {
            staircase_poly: ChebyshevFit { coefficients: vec![0.0, 1.0], lo: -1.0, hi: 1.0 },
            variable: UnfoldVariable::Linear,
            source_range: BulkRange { start: 1, end: n },
            mean_spacing,
            passes_quality_gate: (mean_spacing - 1.0).abs() <= UNFOLD_QUALITY_TOLERANCE,
            levels,
        })
    }
}

/// Maps the bulk to levels with unit mean spacing.
///
/// The staircase `S(λ) = #{λ_j <= λ}` is fitted by a degree-12 Chebyshev
/// series; the fitted map is made monotone by a running maximum before
/// being applied. Exactly degenerate eigenvalues are merged first.
pub fn unfold(s: &Spectrum, cfg: &UnfoldConfig) -> Result<UnfoldedSpectrum> {
    let range = s
        .bulk_range()
        .ok_or_else(|| Error::InvalidArgument("unfolding needs a bulk range".into()))?;
    let mut ascending: Vec<f64> = s.bulk()?.to_vec();
    ascending.sort_by(f64::total_cmp);
    ascending.dedup();
    let n = ascending.len();
    if n < MIN_UNFOLD_LEVELS {
        return Err(Error::InsufficientSpectrum(format!(
            "unfolding needs {MIN_UNFOLD_LEVELS} distinct bulk levels, got {n}"
        )));
    }
    let (lo, hi) = (ascending[0], ascending[n - 1]);
    let variable = match cfg.variable {
        UnfoldVariable::Auto if lo > 0.0 && hi / lo >= 10.0 => UnfoldVariable::Log,
        UnfoldVariable::Auto => UnfoldVariable::Linear,
        v => v,
    };
    if variable == UnfoldVariable::Log && lo <= 0.0 {
        return Err(Error::InvalidArgument("log unfolding needs positive levels".into()));
    }
    let t: Vec<f64> = match variable {
        UnfoldVariable::Log => ascending.iter().map(|v| v.ln()).collect(),
        _ => ascending.clone(),
    };
    let staircase: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let poly = ChebyshevFit::fit(&t, &staircase, cfg.degree)?;
    let mut levels: Vec<f64> = t.iter().map(|&x| poly.eval(x)).collect();
    let mut running = f64::NEG_INFINITY;
    for e in levels.iter_mut() {
        running = running.max(*e);
        *e = running;
    }
    let mean_spacing = (levels[n - 1] - levels[0]) / (n - 1) as f64;
    Ok(UnfoldedSpectrum {
        levels,
        staircase_poly: poly,
        variable,
        source_range: range,
        mean_spacing,
        passes_quality_gate: (mean_spacing - 1.0).abs() <= UNFOLD_QUALITY_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSample {
    pub spacings: Vec<f64>,
    pub histogram: DensityHistogram,
}

impl SpacingSample {
    pub fn mean(&self) -> f64 {
        self.spacings.iter().sum::<f64>() / self.spacings.len() as f64
    }
}

pub const SPACING_HISTOGRAM_MAX: f64 = 4.0;

/// Nearest-neighbour spacings of unfolded levels, histogrammed on `[0, 4]`.
pub fn level_spacing(u: &UnfoldedSpectrum, bins: usize) -> Result<SpacingSample> {
    if u.levels.len() < MIN_UNFOLD_LEVELS {
        return Err(Error::InsufficientSpectrum(format!(
            "level spacing needs {MIN_UNFOLD_LEVELS} levels, got {}",
            u.levels.len()
        )));
    }
    let spacings: Vec<f64> = u.levels.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let histogram = DensityHistogram::from_samples(
        &spacings,
        linspace(0.0, SPACING_HISTOGRAM_MAX, bins + 1),
        HistogramNormalization::Raw,
    )?;
    Ok(SpacingSample { spacings, histogram })
}

/// Wigner surmise for the orthogonal ensemble, `(π/2) s e^{-πs²/4}`.
pub fn wigner_surmise(s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    0.5 * PI * s * (-0.25 * PI * s * s).exp()
}

/// Wigner surmise for Dyson index β. Only β = 1 is supported.
pub fn wigner_surmise_beta(s: f64, beta: u32) -> Result<f64> {
    match beta {
        1 => Ok(wigner_surmise(s)),
        _ => Err(Error::InvalidArgument(format!("Wigner surmise only implemented for beta = 1, got {beta}"))),
    }
}

pub fn wigner_cdf(s: f64) -> f64 {
    if s <= 0.0 { 0.0 } else { 1.0 - (-0.25 * PI * s * s).exp() }
}

pub fn poisson_spacing_cdf(s: f64) -> f64 {
    if s <= 0.0 { 0.0 } else { 1.0 - (-s).exp() }
}

/// CDF of the semicircle of radius 1.
pub fn semicircle_cdf(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / PI
}

/// Ratios `min(s_i, s_{i+1}) / max(s_i, s_{i+1})` of consecutive spacings of
/// ascending levels. Pairs of zero spacings are skipped.
pub fn spacing_ratios(ascending: &[f64]) -> Vec<f64> {
    let spacings: Vec<f64> = ascending.windows(2).map(|w| w[1] - w[0]).collect();
    spacings
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].abs(), w[1].abs());
            let hi = a.max(b);
            (hi > 0.0).then(|| a.min(b) / hi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStatistics {
    pub values: Vec<f64>,
    pub mean: f64,
    pub histogram: DensityHistogram,
}

pub const R_HISTOGRAM_BINS: usize = 20;

/// Spacing-ratio statistics of the raw (not unfolded) bulk.
pub fn r_statistics(s: &Spectrum) -> Result<RStatistics> {
    let bulk = s.bulk()?;
    if bulk.len() < MIN_RATIO_LEVELS {
        return Err(Error::InsufficientSpectrum(format!(
            "r-statistics need {MIN_RATIO_LEVELS} bulk levels, got {}",
            bulk.len()
        )));
    }
    let mut ascending = bulk.to_vec();
    ascending.sort_by(f64::total_cmp);
    r_statistics_of_levels(&ascending)
}

/// r-statistics of an arbitrary ascending level sequence.
pub fn r_statistics_of_levels(ascending: &[f64]) -> Result<RStatistics> {
    let values = spacing_ratios(ascending);
    if values.is_empty() {
        return Err(Error::InsufficientSpectrum("no non-degenerate spacing pairs".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let histogram =
        DensityHistogram::from_samples(&values, linspace(0.0, 1.0, R_HISTOGRAM_BINS + 1), HistogramNormalization::Raw)?;
    Ok(RStatistics { values, mean, histogram })
}

/// `p(r) = (27/4)(r + r²)/(1 + r + r²)^{5/2}` on `[0, 1]`.
pub fn goe_r_density(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("r must lie in [0, 1], got {r}")));
    }
    Ok(6.75 * (r + r * r) / (1.0 + r + r * r).powf(2.5))
}

/// `p(r) = 2/(1 + r)²` for uncorrelated levels, on `[0, 1]`.
pub fn poisson_r_density(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("r must lie in [0, 1], got {r}")));
    }
    Ok(2.0 / (1.0 + r).powi(2))
}

/// Averaging window applied around each τ before comparison with the
/// smooth GOE curve; a single spectrum's |Z(τ)|² fluctuates by ~100%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SffWindow {
    /// Absolute half-width in τ. Zero disables smoothing.
    pub half_width: f64,
    /// Sub-samples across the window.
    pub points: usize,
}

impl SffWindow {
    pub const NONE: SffWindow = SffWindow { half_width: 0.0, points: 1 };
}

impl Default for SffWindow {
    fn default() -> Self {
        Self { half_width: 0.05, points: 81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffCurve {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Mean number of levels per member (the normalization `Z`).
    pub normalization: f64,
    pub members: usize,
    pub window: SffWindow,
}

fn member_sff(levels: &[f64], tau: f64) -> f64 {
    let w = 2.0 * PI * tau;
    let (mut re, mut im) = (0.0, 0.0);
    for &e in levels {
        let (s, c) = (w * e).sin_cos();
        re += c;
        im -= s;
    }
    (re * re + im * im) / levels.len() as f64
}

/// `K(τ) = ⟨|Σ_i e^{-2πi e_i τ}|²⟩ / N` averaged over ensemble members and
/// over the τ window.
pub fn spectral_form_factor(members: &[UnfoldedSpectrum], taus: &[f64], window: SffWindow) -> Result<SffCurve> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("empty tau grid".into()));
    }
    if let Some(t) = taus.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("tau values must be positive, got {t}")));
    }
    if members.is_empty() {
        return Err(Error::InvalidArgument("the form factor needs at least one spectrum".into()));
    }
    if window.points == 0 || window.half_width < 0.0 {
        return Err(Error::InvalidArgument("invalid tau window".into()));
    }
    let offsets: Vec<f64> = if window.half_width == 0.0 || window.points == 1 {
        vec![0.0]
    } else {
        linspace(-window.half_width, window.half_width, window.points)
    };
    let values: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            let subs: Vec<f64> = offsets.iter().map(|o| tau + o).filter(|t| *t > 0.0).collect();
            let mut acc = 0.0;
            for m in members {
                acc += subs.iter().map(|&t| member_sff(&m.levels, t)).sum::<f64>() / subs.len() as f64;
            }
            acc / members.len() as f64
        })
        .collect();
    let normalization = members.iter().map(|m| m.levels.len() as f64).sum::<f64>() / members.len() as f64;
    Ok(SffCurve { taus: taus.to_vec(), values, normalization, members: members.len(), window })
}

/// `K_GOE(τ) = 2τ - τ ln(1 + 2τ)` for `τ < 1`, and 1 otherwise.
pub fn goe_sff(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(if tau < 1.0 { 2.0 * tau - tau * (1.0 + 2.0 * tau).ln() } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{integrate, integrate_to_infinity, ks_distance};
    use crate::theory::goe_wigner_sample;
    use crate::RngSeed;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::Exp1;

    fn central(s: Spectrum, keep: f64) -> Spectrum {
        let n = s.d();
        let cut = ((1.0 - keep) / 2.0 * n as f64) as usize;
        s.with_bulk_range(BulkRange { start: cut + 1, end: n - cut }).unwrap()
    }

    #[test]
    fn uniform_levels_unfold_to_themselves() {
        let n = 500;
        let s = Spectrum::from_values((1..=n).map(|i| i as f64).collect(), n).unwrap();
        let s = s.with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
        let u = unfold(&s, &UnfoldConfig { variable: UnfoldVariable::Linear, ..Default::default() }).unwrap();
        for (e, l) in u.levels.iter().zip(1..=n) {
            assert_abs_diff_eq!(*e, l as f64, epsilon = 1e-6);
        }
        // 30 bins keep the spike away from a bin edge.
        let sp = level_spacing(&u, 30).unwrap();
        assert_abs_diff_eq!(sp.mean(), 1.0, epsilon = 1e-3);
        assert!(sp.histogram.masses.iter().filter(|&&m| m > 0.0).count() == 1);
    }

    #[test]
    fn small_bulk_rejected() {
        let s = Spectrum::from_values((1..=80).map(|i| i as f64).collect(), 80)
            .unwrap()
            .with_bulk_range(BulkRange { start: 1, end: 80 })
            .unwrap();
        assert!(matches!(unfold(&s, &UnfoldConfig::default()), Err(Error::InsufficientSpectrum(_))));
    }

    #[test]
    fn goe_unfolding_and_spacings() {
        let s = central(goe_wigner_sample(1000, RngSeed::new(4, 0)).unwrap(), 0.8);
        let u = unfold(&s, &UnfoldConfig::default()).unwrap();
        assert_eq!(u.variable, UnfoldVariable::Linear);
        assert!((u.mean_spacing - 1.0).abs() < 0.02, "{}", u.mean_spacing);
        let sp = level_spacing(&u, 40).unwrap();
        let ks = ks_distance(&sp.spacings, wigner_cdf);
        assert!(ks < 0.05, "{ks}");
    }

    #[test]
    fn poisson_levels_have_exponential_spacings() {
        let mut rng = RngSeed::new(8, 0).rng_for(0);
        let mut x = 0.0;
        let levels: Vec<f64> = (0..2000)
            .map(|_| {
                x += rng.sample::<f64, _>(Exp1);
                x
            })
            .collect();
        let u = UnfoldedSpectrum::from_levels(levels).unwrap();
        let sp = level_spacing(&u, 40).unwrap();
        let ks = ks_distance(&sp.spacings, poisson_spacing_cdf);
        assert!(ks < 0.05, "{ks}");
        let r = r_statistics_of_levels(&u.levels).unwrap();
        assert!((r.mean - POISSON_MEAN_R).abs() < 0.02, "{}", r.mean);
    }

    #[test]
    fn wigner_surmise_normalization() {
        assert_eq!(wigner_surmise(0.0), 0.0);
        let mass = integrate_to_infinity(wigner_surmise, 0.0, 1e-13, 1e-13);
        let mean = integrate_to_infinity(|s| s * wigner_surmise(s), 0.0, 1e-13, 1e-13);
        assert_abs_diff_eq!(mass.value, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(mean.value, 1.0, epsilon = 1e-10);
        assert!(wigner_surmise_beta(1.0, 2).is_err());
        assert_abs_diff_eq!(wigner_cdf(3.0), 1.0 - (-2.25 * PI).exp(), epsilon = 1e-15);
    }

    #[test]
    fn r_of_three_levels() {
        let r = spacing_ratios(&[1.0, 2.0, 4.0]);
        assert_eq!(r, vec![0.5]);
        assert_eq!(spacing_ratios(&[1.0, 1.0, 1.0, 2.0]), vec![0.0]);
    }

    #[test]
    fn goe_wigner_r_mean() {
        let s = central(goe_wigner_sample(2000, RngSeed::new(1, 0)).unwrap(), 0.8);
        let r = r_statistics(&s).unwrap();
        assert!((r.mean - GOE_MEAN_R).abs() < 0.01, "{}", r.mean);
        assert!((r.histogram.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_spacings_r_mean() {
        let mut rng = RngSeed::new(2, 0).rng_for(0);
        let mut x = 0.0;
        let levels: Vec<f64> = (0..100_000)
            .map(|_| {
                x += rng.sample::<f64, _>(Exp1);
                x
            })
            .collect();
        let r = r_statistics_of_levels(&levels).unwrap();
        assert!((r.mean - POISSON_MEAN_R).abs() < 0.01, "{}", r.mean);
    }

    #[test]
    fn goe_r_density_moments() {
        assert_eq!(goe_r_density(0.0).unwrap(), 0.0);
        let mass = integrate(|r| goe_r_density(r).unwrap(), 0.0, 1.0, 1e-13, 1e-13);
        let mean = integrate(|r| r * goe_r_density(r).unwrap(), 0.0, 1.0, 1e-13, 1e-13);
        assert_abs_diff_eq!(mass.value, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(mean.value, 4.0 - 2.0 * 3f64.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(GOE_MEAN_R, 4.0 - 2.0 * 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(POISSON_MEAN_R, 2.0 * 2f64.ln() - 1.0, epsilon = 1e-15);
        let pm = integrate(|r| r * poisson_r_density(r).unwrap(), 0.0, 1.0, 1e-13, 1e-13);
        assert_abs_diff_eq!(pm.value, POISSON_MEAN_R, epsilon = 1e-10);
        assert!(goe_r_density(1.5).is_err());
    }

    #[test]
    fn goe_sff_branches() {
        assert_abs_diff_eq!(goe_sff(1.0 - 1e-12).unwrap(), 2.0 - 3f64.ln(), epsilon = 1e-9);
        assert_eq!(goe_sff(1.0).unwrap(), 1.0);
        assert_eq!(goe_sff(2.0).unwrap(), 1.0);
        assert!(goe_sff(1e-9).unwrap() < 1e-8);
        assert!(goe_sff(0.0).is_err());
    }

    #[test]
    fn single_level_form_factor_is_one() {
        let u = UnfoldedSpectrum::from_levels(vec![3.7]).unwrap();
        let k = spectral_form_factor(&[u], &[0.1, 0.5, 1.0, 7.3], SffWindow::NONE).unwrap();
        assert!(k.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(k.normalization, 1.0);
        assert!(spectral_form_factor(&[], &[1.0], SffWindow::NONE).is_err());
    }

    #[test]
    fn goe_form_factor_plateau() {
        let members: Vec<UnfoldedSpectrum> = (0..4)
            .map(|k| {
                let s = central(goe_wigner_sample(400, RngSeed::new(10 + k, 0)).unwrap(), 0.8);
                unfold(&s, &UnfoldConfig::default()).unwrap()
            })
            .collect();
        let taus = linspace(45.0, 55.0, 11);
        let k = spectral_form_factor(&members, &taus, SffWindow::default()).unwrap();
        let avg = k.values.iter().sum::<f64>() / k.values.len() as f64;
        assert!((avg - 1.0).abs() < 0.1, "{avg}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn r_is_affine_invariant(
            levels in proptest::collection::vec(-100.0f64..100.0, 60..120),
            a in 0.1f64..10.0, b in -50.0f64..50.0
        ) {
            let mut asc = levels;
            asc.sort_by(f64::total_cmp);
            let n = asc.len();
            let s1 = Spectrum::from_values(asc.clone(), n).unwrap().with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
            // Scale by a power of two and shift by a dyadic value so the map is exact in floating point.
            let scale = 2f64.powi(a.log2().round() as i32);
            let shift = (b * 4.0).round() / 4.0;
            let mapped: Vec<f64> = asc.iter().map(|x| scale * x + shift).collect();
            let s2 = Spectrum::from_values(mapped, n).unwrap().with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
            let r1 = r_statistics(&s1).unwrap();
            let r2 = r_statistics(&s2).unwrap();
            prop_assert_eq!(r1.values.len(), r2.values.len());
            for (x, y) in r1.values.iter().zip(&r2.values) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            // General affine maps agree to rounding.
            let mapped: Vec<f64> = asc.iter().map(|x| a * x + b).collect();
            let s3 = Spectrum::from_values(mapped, n).unwrap().with_bulk_range(BulkRange { start: 1, end: n }).unwrap();
            let r3 = r_statistics(&s3).unwrap();
            prop_assert!((r1.mean - r3.mean).abs() <= 1e-6);
        }

        #[test]
        fn sff_is_shift_invariant(levels in proptest::collection::vec(0.0f64..200.0, 2..60), shift in -1e3f64..1e3) {
            let u1 = UnfoldedSpectrum::from_levels(levels.clone()).unwrap();
            let u2 = UnfoldedSpectrum::from_levels(levels.iter().map(|x| x + shift).collect()).unwrap();
            let taus = [0.05, 0.3, 0.9, 2.5];
            let k1 = spectral_form_factor(&[u1], &taus, SffWindow::NONE).unwrap();
            let k2 = spectral_form_factor(&[u2], &taus, SffWindow::NONE).unwrap();
            for (x, y) in k1.values.iter().zip(&k2.values) {
                prop_assert!((x - y).abs() <= 1e-7 * x.max(1.0));
            }
        }

        #[test]
        fn unfolded_mean_spacing_near_one(exponent in 1.0f64..2.0, n in 150usize..400) {
            let s = Spectrum::from_values((1..=n).map(|i| (i as f64).powf(-exponent)).collect(), n)
                .unwrap()
                .with_bulk_range(BulkRange { start: 1, end: n })
                .unwrap();
            let u = unfold(&s, &UnfoldConfig::default()).unwrap();
            prop_assert!(u.passes_quality_gate);
            let sp = level_spacing(&u, 20).unwrap();
            prop_assert!((sp.mean() - 1.0).abs() <= 0.05);
            prop_assert!(sp.spacings.iter().all(|&s| s >= 0.0));
        }
    }
}
