//! Analytic reference curves: the Marčenko-Pastur law, the bulk power-law
//! prediction, a self-consistent Stieltjes solver for general diagonal
//! population covariances, and a GOE reference sampler.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::numeric::{integrate, trapezoid};
use crate::spectra::{symmetric_eigenvalues, Spectrum};
use crate::synth::{CovarianceKind, PopulationCovariance, ToeplitzForm};
use crate::{Error, Result, RngSeed};

fn check_mp(sigma2: f64, gamma_ratio: f64) -> Result<()> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma^2 must be positive, got {sigma2}")));
    }
    if !(gamma_ratio > 0.0 && gamma_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma_ratio}")));
    }
    Ok(())
}

/// Support `[σ²(1-√γ)², σ²(1+√γ)²]` of the MP law.
pub fn mp_edges(sigma2: f64, gamma_ratio: f64) -> Result<(f64, f64)> {
    check_mp(sigma2, gamma_ratio)?;
    let r = gamma_ratio.sqrt();
    Ok((sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2)))
}

pub fn mp_density(lambda: f64, sigma2: f64, gamma_ratio: f64) -> Result<f64> {
    let (lo, hi) = mp_edges(sigma2, gamma_ratio)?;
    if lambda <= lo || lambda >= hi {
        return Ok(0.0);
    }
    Ok(((hi - lambda) * (lambda - lo)).sqrt() / (2.0 * PI * sigma2 * gamma_ratio * lambda))
}

/// Cumulative MP distribution by adaptive quadrature.
pub fn mp_cdf(lambda: f64, sigma2: f64, gamma_ratio: f64) -> Result<f64> {
    let (lo, hi) = mp_edges(sigma2, gamma_ratio)?;
    if lambda <= lo {
        return Ok(0.0);
    }
    if lambda >= hi {
        return Ok(1.0);
    }
    let q = integrate(|x| mp_density(x, sigma2, gamma_ratio).unwrap_or(0.0), lo, lambda, 1e-12, 1e-10);
    Ok(q.value.clamp(0.0, 1.0))
}

/// `λ_i = c Γ(1+α) (d/i)^{1+α}`.
pub fn bulk_prediction(i: usize, d: usize, c: f64, alpha: f64) -> Result<f64> {
    if alpha <= -1.0 {
        return Err(Error::InvalidArgument(format!("bulk prediction needs alpha > -1, got {alpha}")));
    }
    if i < 1 || i > d {
        return Err(Error::InvalidArgument(format!("index {i} outside 1..={d}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    Ok(c * gamma(1.0 + alpha) * (d as f64 / i as f64).powf(1.0 + alpha))
}

/// How the population spectrum enters the self-consistent equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationModel {
    /// Continuum limit for power-law covariances, discrete sum otherwise.
    Auto,
    /// Average over the `d` population eigenvalues.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesOptions {
    pub eps: f64,
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub population: PopulationModel,
}

impl Default for StieltjesOptions {
    fn default() -> Self {
        Self { eps: 1e-3, damping: 0.5, max_iter: 10_000, tol: 1e-10, population: PopulationModel::Auto }
    }
}

/// Maximum fixed-point residual accepted on success.
pub const STIELTJES_RESIDUAL_TOL: f64 = 1e-9;
const WARM_START_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StieltjesSolution {
    pub lambda: Vec<f64>,
    pub eps: f64,
    /// Companion transform `G̃(λ + iε)` (real, imaginary parts).
    pub g_tilde: Vec<(f64, f64)>,
    /// Transform of the spectral measure, `∫ ρ(t)/(t - z) dt`.
    pub g: Vec<(f64, f64)>,
    pub density: Vec<f64>,
    pub gamma: f64,
    pub covariance: CovarianceKind,
    /// Trapezoid mass of `density` over the grid.
    pub mass: f64,
    pub max_residual: f64,
    pub max_iterations: usize,
}

impl StieltjesSolution {
    /// Probability mass in each bin, integrating the piecewise-linear
    /// interpolant of the density. The grid must cover the edges.
    pub fn bin_masses(&self, edges: &[f64]) -> Result<Vec<f64>> {
        let (x, y) = (&self.lambda, &self.density);
        if edges.first() < x.first() || edges.last() > x.last() {
            return Err(Error::InvalidArgument("histogram edges extend beyond the solver grid".into()));
        }
        let interp = |t: f64| -> f64 {
            let k = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1);
            let (x0, x1) = (x[k - 1], x[k]);
            let w = if x1 > x0 { (t - x0) / (x1 - x0) } else { 0.0 };
            y[k - 1] * (1.0 - w) + y[k] * w
        };
        Ok(edges
            .windows(2)
            .map(|w| {
                let mut pts = vec![w[0]];
                pts.extend(x.iter().copied().filter(|&v| v > w[0] && v < w[1]));
                pts.push(w[1]);
                let vals: Vec<f64> = pts.iter().map(|&t| interp(t)).collect();
                trapezoid(&pts, &vals)
            })
            .collect())
    }
}

enum Population {
    Discrete(Vec<f64>),
    /// `t = ĉ x^{-1-α}` with `x` uniform on (0, 1].
    PowerLaw { c_hat: f64, alpha: f64 },
}

impl Population {
    fn from_cov(cov: &PopulationCovariance, model: PopulationModel) -> Result<Self> {
        Ok(match (cov.kind(), model) {
            (CovarianceKind::ToeplitzSingular { c, alpha, form: ToeplitzForm::PowerLaw }, PopulationModel::Auto) => {
                if alpha <= -1.0 {
                    return Err(Error::InvalidArgument(format!("power-law population needs alpha > -1, got {alpha}")));
                }
                Population::PowerLaw { c_hat: c * gamma(1.0 + alpha), alpha }
            }
            (CovarianceKind::Identity { sigma2 }, _) => Population::Discrete(vec![sigma2]),
            _ => Population::Discrete(cov.singular_values().to_vec()),
        })
    }

    /// `𝔽(g) = ∫ t / (1 + t g) dH(t)`.
    fn f(&self, g: Complex64) -> Complex64 {
        match self {
            Population::Discrete(values) => {
                values.iter().map(|&t| t / (1.0 + t * g)).sum::<Complex64>() / values.len() as f64
            }
            Population::PowerLaw { c_hat, alpha } => {
                // ĉ x^{-1-α} / (1 + g ĉ x^{-1-α}) = ĉ / (x^{1+α} + g ĉ): bounded at x = 0.
                let gc = g * *c_hat;
                let p = 1.0 + alpha;
                let integrand = |x: f64| -> Complex64 { Complex64::new(*c_hat, 0.0) / (x.powf(p) + gc) };
                // Split where x^{1+α} crosses |g ĉ|, the integrand's knee.
                let knee = gc.norm().powf(1.0 / p);
                if knee > 0.0 && knee < 1.0 {
                    integrate(integrand, 0.0, knee, 1e-13, 1e-11).value
                        + integrate(integrand, knee, 1.0, 1e-13, 1e-11).value
                } else {
                    integrate(integrand, 0.0, 1.0, 1e-13, 1e-11).value
                }
            }
        }
    }
}

struct PointSolution {
    g_tilde: Complex64,
    residual: f64,
    iterations: usize,
}

fn solve_point(
    pop: &Population,
    gamma_ratio: f64,
    z: Complex64,
    start: Complex64,
    opts: &StieltjesOptions,
) -> Result<PointSolution> {
    let map = |g: Complex64| 1.0 / (-z + pop.f(g) * gamma_ratio);
    let mut g = start;
    for it in 1..=opts.max_iter {
        let next = (1.0 - opts.damping) * g + opts.damping * map(g);
        let step = (next - g).norm();
        g = next;
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(Error::NonConvergence(format!("non-finite iterate at z = {z}")));
        }
        if step < opts.tol {
            let residual = (g - map(g)).norm();
            return Ok(PointSolution { g_tilde: g, residual, iterations: it });
        }
    }
    let residual = (g - map(g)).norm();
    Err(Error::NonConvergence(format!(
        "no convergence at lambda = {} after {} iterations (residual {residual:e})",
        z.re, opts.max_iter
    )))
}

/// Spectral density of `(1/M) X Xᵀ` with population covariance `cov` at
/// ratio `γ = d/M`, from the self-consistent equation
/// `G̃ = (-z + γ 𝔽(G̃))⁻¹` at `z = λ + iε`.
///
/// Points are processed in chunks of 64: the first point of each chunk
/// starts from `i`, later points from their left neighbour. Chunks run in
/// parallel, so the result does not depend on the thread count.
pub fn solve_stieltjes(
    gamma_ratio: f64,
    cov: &PopulationCovariance,
    lambda_grid: &[f64],
    opts: &StieltjesOptions,
) -> Result<StieltjesSolution> {
    if !(gamma_ratio > 0.0 && gamma_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma_ratio}")));
    }
    if !(1e-6..=1e-2).contains(&opts.eps) {
        return Err(Error::InvalidArgument(format!("eps must lie in [1e-6, 1e-2], got {}", opts.eps)));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    if lambda_grid.len() < 2 || lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("lambda grid must be strictly ascending with >= 2 points".into()));
    }
    let max_step = lambda_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > opts.eps / 2.0 {
        log::warn!("grid spacing {max_step:e} exceeds eps/2 = {:e}; density features narrower than eps are undersampled", opts.eps / 2.0);
    }
    let pop = Population::from_cov(cov, opts.population)?;
    let chunks: Vec<Result<Vec<PointSolution>>> = lambda_grid
        .par_chunks(WARM_START_CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            let mut start = Complex64::new(0.0, 1.0);
            for &lambda in chunk {
                let z = Complex64::new(lambda, opts.eps);
                let sol = solve_point(&pop, gamma_ratio, z, start, opts)?;
                start = sol.g_tilde;
                out.push(sol);
            }
            Ok(out)
        })
        .collect();
    let mut points = Vec::with_capacity(lambda_grid.len());
    for c in chunks {
        points.extend(c?);
    }

    let mut g_tilde = Vec::with_capacity(points.len());
    let mut g = Vec::with_capacity(points.len());
    let mut density = Vec::with_capacity(points.len());
    let mut max_residual = 0.0f64;
    let mut max_iterations = 0;
    for (p, &lambda) in points.iter().zip(lambda_grid) {
        let z = Complex64::new(lambda, opts.eps);
        let gt = p.g_tilde;
        let gz = gt / gamma_ratio + (1.0 - gamma_ratio) / (gamma_ratio * z);
        let rho = gz.im / PI;
        if rho < -1e-8 {
            return Err(Error::Numeric(format!("negative density {rho:e} at lambda = {lambda}")));
        }
        if p.residual >= STIELTJES_RESIDUAL_TOL {
            return Err(Error::NonConvergence(format!(
                "fixed-point residual {:e} at lambda = {lambda}",
                p.residual
            )));
        }
        max_residual = max_residual.max(p.residual);
        max_iterations = max_iterations.max(p.iterations);
        g_tilde.push((gt.re, gt.im));
        g.push((gz.re, gz.im));
        density.push(rho.max(0.0));
    }
    let mass = trapezoid(lambda_grid, &density);
    if (mass - 1.0).abs() > 0.02 {
        log::warn!("Stieltjes density mass {mass:.4} over the grid; the grid may not cover the support");
    }
    Ok(StieltjesSolution {
        lambda: lambda_grid.to_vec(),
        eps: opts.eps,
        g_tilde,
        g,
        density,
        gamma: gamma_ratio,
        covariance: cov.kind(),
        mass,
        max_residual,
        max_iterations,
    })
}

/// Eigenvalues of `(A + Aᵀ)/√(8n)` with `A` iid standard normal; the
/// semicircle support is `[-1, 1]`.
pub fn goe_wigner_sample(n: usize, seed: RngSeed) -> Result<Spectrum> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("GOE sample needs n >= 2, got {n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.rng_for(i as u64);
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect();
    let scale = 1.0 / (8.0 * n as f64).sqrt();
    let h = Mat::from_fn(n, n, |i, j| (rows[i][j] + rows[j][i]) * scale);
    Spectrum::from_values(symmetric_eigenvalues(h.as_ref())?, n)
}

pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 1.0 { 0.0 } else { 2.0 / PI * (1.0 - x * x).sqrt() }
}
