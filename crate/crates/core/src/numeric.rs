//! Small numerical building blocks shared by the analysis modules: line fits,
//! Chebyshev least squares, adaptive quadrature, KS distances and the
//! spectral norm of a symmetric matrix.

use std::ops::{Add, Mul, Sub};

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ordinary least-squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "line fit needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Numeric("line fit with zero spread in x".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let r_squared = if syy <= f64::MIN_POSITIVE || ss_res <= 1e-28 * syy.max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LineFit { slope, intercept, r_squared })
}

/// Least-squares polynomial in the Chebyshev basis on an interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevFit {
    pub coefficients: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl ChebyshevFit {
    pub fn fit(x: &[f64], y: &[f64], degree: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension("Chebyshev fit needs equal lengths".into()));
        }
        if x.len() <= degree {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} fit needs more than {degree} points, got {}",
                x.len()
            )));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numeric("Chebyshev fit over a degenerate interval".into()));
        }
        let mut fit = ChebyshevFit { coefficients: vec![0.0; degree + 1], lo, hi };
        let mut design = Mat::<f64>::zeros(x.len(), degree + 1);
        for (row, &xi) in x.iter().enumerate() {
            let u = fit.to_unit(xi);
            let mut t_prev = 1.0;
            let mut t = u;
            design[(row, 0)] = 1.0;
            for k in 1..=degree {
                design[(row, k)] = t;
                let next = 2.0 * u * t - t_prev;
                t_prev = t;
                t = next;
            }
        }
        let rhs = MatRef::from_column_major_slice(y, y.len(), 1);
        let solution = design.qr().solve_lstsq(rhs);
        for k in 0..=degree {
            let c = solution[(k, 0)];
            if !c.is_finite() {
                return Err(Error::Numeric("Chebyshev least squares produced non-finite coefficients".into()));
            }
            fit.coefficients[k] = c;
        }
        Ok(fit)
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let u = self.to_unit(x);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = 2.0 * u * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        u * b1 - b2 + self.coefficients[0]
    }
}

/// Values that adaptive quadrature can accumulate.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<T: QuadValue>(f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = f_center * GK_WEIGHTS[7];
    let mut gauss = f_center * GAUSS_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * GK_WEIGHTS[j];
        if j % 2 == 1 {
            gauss = gauss + pair * GAUSS_WEIGHTS[j / 2];
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).magnitude();
    (value, err)
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error_estimate: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
pub fn integrate<T: QuadValue>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature<T> {
    const MAX_INTERVALS: usize = 400;
    let (v, e) = gauss_kronrod(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total = v;
    let mut total_err = e;
    while total_err > abs_tol.max(rel_tol * total.magnitude()) {
        if intervals.len() >= MAX_INTERVALS {
            return Quadrature { value: total, error_estimate: total_err, converged: false };
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, val, err) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Quadrature { value: total, error_estimate: total_err, converged: false };
        }
        let (v1, e1) = gauss_kronrod(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, hi);
        total = total - val + v1 + v2;
        total_err = total_err - err + e1 + e2;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value = intervals.iter().fold(T::zero(), |acc, iv| acc + iv.2);
    let error_estimate = intervals.iter().map(|iv| iv.3).sum();
    Quadrature { value, error_estimate, converged: true }
}

/// Integral over `[a, ∞)` via the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity(mut f: impl FnMut(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Quadrature<f64> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - t;
            f(a + t / one_minus) / (one_minus * one_minus)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Trapezoid rule over tabulated samples.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and a reference CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    ks_distance_sorted(&sorted, cdf)
}

pub fn ks_distance_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration,
/// stopped when successive estimates agree to `rel_tol`.
pub fn symmetric_spectral_norm(a: MatRef<'_, f64>, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("spectral norm of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    // Fixed, dense, non-degenerate start vector so results are reproducible.
    let mut v = Mat::<f64>::from_fn(n, 1, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    let norm0 = v.norm_l2();
    v /= faer::Scale(norm0);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let norm = w.norm_l2();
        if !norm.is_finite() {
            return Err(Error::Numeric("non-finite value during power iteration".into()));
        }
        if norm == 0.0 {
            return Ok(0.0);
        }
        let converged = (norm - estimate).abs() <= rel_tol * norm;
        estimate = norm;
        v = w / faer::Scale(norm);
        if converged {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence(format!(
        "power iteration did not reach relative tolerance {rel_tol} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 2.0, epsilon = 1e-14);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn chebyshev_reproduces_polynomial() {
        let x = linspace(-3.0, 5.0, 200);
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.25 * v.powi(3)).collect();
        let fit = ChebyshevFit::fit(&x, &y, 12).unwrap();
        for (&xi, &yi) in x.iter().zip(&y) {
            assert_relative_eq!(fit.eval(xi), yi, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn quadrature_of_smooth_and_singular_integrands() {
        let q = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13, 1e-13);
        assert!(q.converged);
        assert_relative_eq!(q.value, 2.0, epsilon = 1e-12);
        let q = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12, 1e-12);
        assert_relative_eq!(q.value, 2.0 / 3.0, epsilon = 1e-10);
        let q = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-12, 1e-12);
        assert_relative_eq!(q.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn complex_quadrature() {
        let q = integrate(|x: f64| Complex64::new(0.0, x).exp(), 0.0, 1.0, 1e-13, 1e-13);
        let exact = (Complex64::new(0.0, 1.0).exp() - 1.0) / Complex64::new(0.0, 1.0);
        assert!((q.value - exact).norm() < 1e-12);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&samples, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn spectral_norm_of_indefinite_matrix() {
        let a = faer::mat![[1.0, 0.0, 0.0], [0.0, -3.0, 0.0], [0.0, 0.0, 2.0]];
        let n = symmetric_spectral_norm(a.as_ref(), 1e-12, 10_000).unwrap();
        assert_relative_eq!(n, 3.0, epsilon = 1e-9);
    }
}
