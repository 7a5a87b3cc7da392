//! Synthetic Gaussian datasets and noise corruption.
//!
//! Correlated data (CGD) use a diagonal population covariance whose entries
//! are the singular values of the Toeplitz matrix `T_ij = δ_ij + c|i-j|^α`
//! (the `|i-j|^α` term is zero on the diagonal), or one of its closed-form
//! approximations. Uncorrelated data (UGD) use `σ² I`.

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::datamatrix::{DataMatrix, Preprocessing};
use crate::{Error, Result, RngSeed};

/// Largest dimension handled by the dense Toeplitz path.
pub const DENSE_TOEPLITZ_MAX_D: usize = 4096;

const SERIES_REL_TOL: f64 = 1e-14;
const SERIES_MAX_TERMS: usize = 50_000_000;

/// How the Toeplitz singular values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToeplitzForm {
    /// Singular values of the dense matrix.
    DenseSvd,
    /// `1 + c Li_{-α}(e^{-s/d}) - c e^{-s} Φ(e^{-s/d}, -α, d)`, s = 1..d.
    LaplaceSeries,
    /// `c Γ(1+α) (d/s)^{1+α}`.
    PowerLaw,
    /// `1 + c Γ(1+α) (d/s)^{1+α}`.
    PowerLawPlusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovarianceKind {
    Identity { sigma2: f64 },
    ToeplitzSingular { c: f64, alpha: f64, form: ToeplitzForm },
}

/// Diagonal population covariance with its entries precomputed (descending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCovariance {
    kind: CovarianceKind,
    d: usize,
    singular_values: Vec<f64>,
}

impl PopulationCovariance {
    pub fn identity(d: usize, sigma2: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidArgument("covariance dimension must be positive".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma^2 must be positive, got {sigma2}")));
        }
        Ok(Self { kind: CovarianceKind::Identity { sigma2 }, d, singular_values: vec![sigma2; d] })
    }

    /// Correlated covariance with the default (pure power-law) form.
    pub fn cgd(d: usize, c: f64, alpha: f64) -> Result<Self> {
        Self::toeplitz(d, c, alpha, ToeplitzForm::PowerLaw)
    }

    pub fn toeplitz(d: usize, c: f64, alpha: f64, form: ToeplitzForm) -> Result<Self> {
        let mut singular_values = match form {
            ToeplitzForm::DenseSvd => toeplitz_singular_values(d, c, alpha)?,
            ToeplitzForm::LaplaceSeries => laplace_singular_values(d, c, alpha, LaplaceMode::FullSeries)?,
            ToeplitzForm::PowerLaw => power_law_values(d, c, alpha, false)?,
            ToeplitzForm::PowerLawPlusOne => laplace_singular_values(d, c, alpha, LaplaceMode::Simplified)?,
        };
        singular_values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { kind: CovarianceKind::ToeplitzSingular { c, alpha, form }, d, singular_values })
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Diagonal entries, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn trace(&self) -> f64 {
        self.singular_values.iter().sum()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.singular_values[0]
    }

    /// Same covariance scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {factor}")));
        }
        let kind = match self.kind {
            CovarianceKind::Identity { sigma2 } => CovarianceKind::Identity { sigma2: sigma2 * factor },
            CovarianceKind::ToeplitzSingular { c, alpha, form } => {
                CovarianceKind::ToeplitzSingular { c: c * factor, alpha, form }
            }
        };
        let singular_values = self.singular_values.iter().map(|s| s * factor).collect();
        Ok(Self { kind, d: self.d, singular_values })
    }
}

fn check_toeplitz_args(d: usize, c: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("Toeplitz dimension must be >= 2, got {d}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    Ok(())
}

/// Dense Toeplitz matrix `δ_ij + c|i-j|^α` with a zero power term on the diagonal.
pub fn toeplitz_matrix(d: usize, c: f64, alpha: f64) -> Mat<f64> {
    let band: Vec<f64> = (0..d).map(|k| if k == 0 { 1.0 } else { c * (k as f64).powf(alpha) }).collect();
    Mat::from_fn(d, d, |i, j| band[i.abs_diff(j)])
}

/// Singular values of the dense Toeplitz matrix, descending.
///
/// T is symmetric, so these are the absolute eigenvalues.
pub fn toeplitz_singular_values(d: usize, c: f64, alpha: f64) -> Result<Vec<f64>> {
    check_toeplitz_args(d, c)?;
    if d > DENSE_TOEPLITZ_MAX_D {
        return Err(Error::Capability(format!(
            "dense Toeplitz SVD is limited to d <= {DENSE_TOEPLITZ_MAX_D} (got {d}); use laplace_singular_values"
        )));
    }
    let t = toeplitz_matrix(d, c, alpha);
    let eig = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("Toeplitz eigensolver failed: {e:?}")))?;
    let mut sv: Vec<f64> = eig.into_iter().map(f64::abs).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceMode {
    /// Polylogarithm and Lerch series summed directly.
    FullSeries,
    /// `1 + c Γ(1+α)(d/s)^{1+α}`; requires α > -1.
    Simplified,
}

/// Closed-form Toeplitz spectrum evaluated at `s = 1..d`, descending.
pub fn laplace_singular_values(d: usize, c: f64, alpha: f64, mode: LaplaceMode) -> Result<Vec<f64>> {
    check_toeplitz_args(d, c)?;
    match mode {
        LaplaceMode::Simplified => power_law_values(d, c, alpha, true),
        LaplaceMode::FullSeries => {
            let df = d as f64;
            let mut out = Vec::with_capacity(d);
            for s in 1..=d {
                let x = (-(s as f64) / df).exp();
                let li = polylog_neg(alpha, x)?;
                let lerch = lerch_phi_neg(x, alpha, df)?;
                let v = 1.0 + c * li - c * (-(s as f64)).exp() * lerch;
                out.push(v.max(0.0));
            }
            out.sort_by(|a, b| b.total_cmp(a));
            Ok(out)
        }
    }
}

fn power_law_values(d: usize, c: f64, alpha: f64, plus_one: bool) -> Result<Vec<f64>> {
    check_toeplitz_args(d, c)?;
    if alpha <= -1.0 {
        return Err(Error::InvalidArgument(format!("power-law bulk form needs alpha > -1, got {alpha}")));
    }
    let amp = c * gamma(1.0 + alpha);
    let df = d as f64;
    let offset = if plus_one { 1.0 } else { 0.0 };
    Ok((1..=d).map(|s| offset + amp * (df / s as f64).powf(1.0 + alpha)).collect())
}

/// Sums `Σ_{n>=0} f(n)` for a positive, eventually decreasing sequence,
/// stopping once past the peak and a term is below `SERIES_REL_TOL` of the sum.
fn positive_series(mut term: impl FnMut(usize) -> f64, what: &str) -> Result<f64> {
    let mut sum = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for n in 0..SERIES_MAX_TERMS {
        let t = term(n);
        if !t.is_finite() {
            return Err(Error::Numeric(format!("{what}: non-finite term at n={n}")));
        }
        sum += t;
        if t <= prev && t <= SERIES_REL_TOL * sum {
            return Ok(sum);
        }
        prev = t;
    }
    Err(Error::Numeric(format!("{what}: series did not converge in {SERIES_MAX_TERMS} terms")))
}

/// `Li_{-α}(x) = Σ_{k>=1} k^α x^k` for `0 < x < 1`.
pub fn polylog_neg(alpha: f64, x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Numeric(format!("polylog series needs 0 <= x < 1, got {x}")));
    }
    let lnx = x.ln();
    positive_series(|n| {
        let k = (n + 1) as f64;
        (alpha * k.ln() + k * lnx).exp()
    }, "polylog")
}

/// Lerch transcendent `Φ(x, -α, a) = Σ_{n>=0} x^n (n+a)^α` for `0 < x < 1`, `a > 0`.
pub fn lerch_phi_neg(x: f64, alpha: f64, a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) || a <= 0.0 {
        return Err(Error::Numeric(format!("Lerch series needs 0 <= x < 1 and a > 0, got x={x}, a={a}")));
    }
    let lnx = x.ln();
    positive_series(|n| {
        let k = n as f64;
        (alpha * (k + a).ln() + k * lnx).exp()
    }, "Lerch")
}

/// Draws `m` iid columns `x = S^{1/2} z`, z standard normal.
///
/// Column `j` uses the generator `seed.rng_for(j)`, so the output does not
/// depend on the thread count.
pub fn sample_gaussian(cov: &PopulationCovariance, m: usize, seed: RngSeed) -> Result<DataMatrix> {
    if m < 1 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let d = cov.d();
    if d < 2 {
        return Err(Error::Dimension(format!("sampling needs d >= 2, got {d}")));
    }
    let scale: Vec<f64> = cov.singular_values().iter().map(|s| s.sqrt()).collect();
    let mut values = vec![0.0; d * m];
    values.par_chunks_mut(d).enumerate().for_each(|(j, col)| {
        let mut rng = seed.rng_for(j as u64);
        for (v, s) in col.iter_mut().zip(&scale) {
            let z: f64 = rng.sample(StandardNormal);
            *v = s * z;
        }
    });
    let label = match cov.kind() {
        CovarianceKind::Identity { sigma2 } => format!("ugd(d={d}, sigma2={sigma2}, M={m}, seed={})", seed.seed),
        CovarianceKind::ToeplitzSingular { c, alpha, form } => {
            format!("cgd(d={d}, c={c}, alpha={alpha}, form={form:?}, M={m}, seed={})", seed.seed)
        }
    };
    DataMatrix::from_column_major(values, d, m, label)
}

/// Variance-matched noise mixing: `sqrt(1-f) x + sqrt(f) N`, with `N` iid
/// normal at the global standard deviation of `x`.
pub fn corrupt_with_noise(x: &DataMatrix, noise_fraction: f64, seed: RngSeed) -> Result<DataMatrix> {
    if !(0.0..=1.0).contains(&noise_fraction) {
        return Err(Error::InvalidArgument(format!("noise fraction must lie in [0, 1], got {noise_fraction}")));
    }
    if noise_fraction == 0.0 {
        return Ok(x.clone());
    }
    let n = x.values().len() as f64;
    let mean = x.values().iter().sum::<f64>() / n;
    let var = x.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let (d, m) = (x.d(), x.m());
    let keep = (1.0 - noise_fraction).sqrt();
    let mix = noise_fraction.sqrt() * sd;
    let stream = seed.derive(0xC0_22_u64);
    let mut values = x.values().to_vec();
    values.par_chunks_mut(d).enumerate().for_each(|(j, col)| {
        let mut rng = stream.rng_for(j as u64);
        for v in col.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = keep * *v + mix * z;
        }
    });
    DataMatrix::with_preprocessing(
        values,
        d,
        m,
        Preprocessing::default(),
        format!("{} + noise(fraction={noise_fraction}, seed={})", x.source(), seed.seed),
    )
}
