//! Linear teacher-student regression trained by full-batch gradient descent,
//! and its gradient-flow solution in the eigenbasis of the training covariance.
//!
//! Time is measured in steps: the flow solution at time `t` is compared with
//! the discrete iterate after `t` updates of size `η`.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat};
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numeric::{logspace, trapezoid};
use crate::spectra::{symmetric_eigen, symmetrize};
use crate::synth::{sample_gaussian, PopulationCovariance};
use crate::theory::StieltjesSolution;
use crate::{faer_par, Error, Result, RngSeed};

const TAG_TRAIN: u64 = 0x7EA1;
const TAG_INIT: u64 = 0x1417;
const TAG_GEN: u64 = 0x6E17;

/// Loss growth over its initial value that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TSConfig {
    pub d_in: usize,
    pub n_train: usize,
    /// Learning rate `η₀`.
    pub eta: f64,
    pub steps: usize,
    pub cov: PopulationCovariance,
    pub seed: RngSeed,
}

impl TSConfig {
    /// `d_in / n_train`.
    pub fn ratio(&self) -> f64 {
        self.d_in as f64 / self.n_train as f64
    }

    fn validate(&self) -> Result<()> {
        if self.d_in < 2 || self.n_train < 1 {
            return Err(Error::InvalidArgument(format!(
                "need d_in >= 2 and n_train >= 1, got {} and {}",
                self.d_in, self.n_train
            )));
        }
        if self.cov.d() != self.d_in {
            return Err(Error::Dimension(format!(
                "covariance has d = {}, config has d_in = {}",
                self.cov.d(),
                self.d_in
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.eta)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// The population covariance rescaled to unit mean eigenvalue, i.e. inputs
/// with unit average variance per feature.
pub fn standardized(cov: &PopulationCovariance) -> Result<PopulationCovariance> {
    cov.scaled(cov.d() as f64 / cov.trace())
}

/// A realized problem: training covariance, its eigendecomposition and the
/// initial weight difference `Δ₀ = w₀ - w*`.
#[derive(Debug, Clone)]
pub struct TeacherStudent {
    cfg: TSConfig,
    sigma_tr: Mat<f64>,
    /// Eigenvalues of `Σ_tr`, ascending.
    nu: Vec<f64>,
    vectors: Mat<f64>,
    delta0: Vec<f64>,
}

impl TeacherStudent {
    /// Draws `n_train` inputs from `cfg.cov` and forms `Σ_tr = X Xᵀ / n_train`.
    pub fn new(cfg: TSConfig) -> Result<Self> {
        cfg.validate()?;
        let x = sample_gaussian(&cfg.cov, cfg.n_train, cfg.seed.derive(TAG_TRAIN))?;
        let xr = x.as_mat();
        let mut sigma = Mat::<f64>::zeros(cfg.d_in, cfg.d_in);
        matmul(sigma.as_mut(), Accum::Replace, xr, xr.transpose(), 1.0 / cfg.n_train as f64, faer_par());
        symmetrize(&mut sigma);
        Self::with_training_matrix(cfg, sigma)
    }

    /// Uses a given symmetric positive semidefinite training covariance.
    pub fn with_training_matrix(cfg: TSConfig, sigma_tr: Mat<f64>) -> Result<Self> {
        cfg.validate()?;
        if sigma_tr.nrows() != cfg.d_in || sigma_tr.ncols() != cfg.d_in {
            return Err(Error::Dimension(format!(
                "training covariance is {}x{}, expected {}x{}",
                sigma_tr.nrows(),
                sigma_tr.ncols(),
                cfg.d_in,
                cfg.d_in
            )));
        }
        let (nu, vectors) = symmetric_eigen(sigma_tr.as_ref())?;
        let nu_max = nu.last().copied().unwrap_or(0.0);
        let bound = 1.0 / (2.0 * nu_max);
        if cfg.eta >= bound {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} violates the stability bound 1/(2 λ_max(Σ_tr)) = {bound:.6e}",
                cfg.eta
            )));
        }
        let delta0 = initial_delta(cfg.d_in, cfg.seed, 0);
        Ok(Self { cfg, sigma_tr, nu: nu.into_iter().map(|v| v.max(0.0)).collect(), vectors, delta0 })
    }

    pub fn config(&self) -> &TSConfig {
        &self.cfg
    }

    pub fn training_covariance(&self) -> &Mat<f64> {
        &self.sigma_tr
    }

    /// Eigenvalues `ν_i` of `Σ_tr`, ascending.
    pub fn train_eigenvalues(&self) -> &[f64] {
        &self.nu
    }

    pub fn train_eigenvectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    pub fn delta0(&self) -> &[f64] {
        &self.delta0
    }

    pub fn set_delta0(&mut self, delta0: Vec<f64>) -> Result<()> {
        if delta0.len() != self.cfg.d_in {
            return Err(Error::Length { expected: self.cfg.d_in as u64, found: delta0.len() as u64 });
        }
        self.delta0 = delta0;
        Ok(())
    }

    /// `Δ₀` of teacher/student replica `k`; replica 0 is the problem's own.
    pub fn replica_delta0(&self, k: u64) -> Vec<f64> {
        initial_delta(self.cfg.d_in, self.cfg.seed, k)
    }

    /// `1 / (2 λ_max(Σ_tr))`.
    pub fn stability_bound(&self) -> f64 {
        1.0 / (2.0 * self.nu.last().copied().unwrap_or(0.0))
    }

    fn gen_operator(&self, target: &GenTarget) -> Result<GenOperator> {
        let d = self.cfg.d_in;
        match target {
            GenTarget::Population => Ok(GenOperator::Diagonal(self.cfg.cov.singular_values().to_vec())),
            GenTarget::Sample { n_gen } => {
                let x = sample_gaussian(&self.cfg.cov, *n_gen, self.cfg.seed.derive(TAG_GEN))?;
                let xr = x.as_mat();
                let mut g = Mat::<f64>::zeros(d, d);
                matmul(g.as_mut(), Accum::Replace, xr, xr.transpose(), 1.0 / *n_gen as f64, faer_par());
                symmetrize(&mut g);
                Ok(GenOperator::Dense(g))
            }
            GenTarget::Matrix(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::Dimension(format!("generalization matrix must be {d}x{d}")));
                }
                Ok(GenOperator::Dense(m.clone()))
            }
        }
    }
}

/// `w₀ - w*` with both drawn iid `N(0, 1/(2 d))`, so `E‖Δ₀‖² = 1`.
fn initial_delta(d: usize, seed: RngSeed, k: u64) -> Vec<f64> {
    let mut rng = seed.derive(TAG_INIT).rng_for(k);
    let normal = Normal::new(0.0, (0.5 / d as f64).sqrt()).expect("positive variance");
    (0..d)
        .map(|_| {
            let w0: f64 = rng.sample(normal);
            let w_star: f64 = rng.sample(normal);
            w0 - w_star
        })
        .collect()
}

/// Covariance defining the generalization loss `Δᵀ Σ Δ`.
#[derive(Debug, Clone)]
pub enum GenTarget {
    /// The population covariance of the config.
    Population,
    /// Gram matrix of a fresh generalization set of `n_gen` samples.
    Sample { n_gen: usize },
    /// An explicit symmetric matrix.
    Matrix(Mat<f64>),
}

enum GenOperator {
    Diagonal(Vec<f64>),
    Dense(Mat<f64>),
}

impl GenOperator {
    fn quadratic_forms(&self, deltas: &Mat<f64>) -> Vec<f64> {
        match self {
            GenOperator::Diagonal(s) => (0..deltas.ncols())
                .map(|k| s.iter().enumerate().map(|(i, si)| si * deltas[(i, k)] * deltas[(i, k)]).sum())
                .collect(),
            GenOperator::Dense(g) => {
                let mut p = Mat::<f64>::zeros(deltas.nrows(), deltas.ncols());
                matmul(p.as_mut(), Accum::Replace, g.as_ref(), deltas.as_ref(), 1.0, faer_par());
                column_dots(deltas, &p)
            }
        }
    }

    /// `uᵀ G u` for each column `u` of `vectors`.
    fn diagonal_in_basis(&self, vectors: &Mat<f64>) -> Vec<f64> {
        self.quadratic_forms(vectors)
    }
}

fn column_dots(a: &Mat<f64>, b: &Mat<f64>) -> Vec<f64> {
    (0..a.ncols()).map(|k| (0..a.nrows()).map(|i| a[(i, k)] * b[(i, k)]).sum()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLosses {
    pub steps: Vec<usize>,
    pub train: Vec<f64>,
    pub gen: Vec<f64>,
}

/// Step indices `0..=steps` thinned to about `points` log-spaced values.
pub fn record_schedule(steps: usize, points: usize) -> Vec<usize> {
    let mut v = vec![0];
    if steps >= 1 && points >= 2 {
        v.extend(logspace(1.0, steps as f64, points - 1).into_iter().map(|t| t.round() as usize));
    }
    v.push(steps);
    v.sort_unstable();
    v.dedup();
    v
}

/// Iterates `Δ_{t+1} = (I - 2 η Σ_tr) Δ_t` from `delta0`, recording
/// `𝓛_tr = Δᵀ Σ_tr Δ` and `𝓛_gen = Δᵀ Σ_gen Δ` at the steps in `record`.
pub fn simulate_gd(
    problem: &TeacherStudent,
    delta0: &[f64],
    record: &[usize],
    target: &GenTarget,
) -> Result<SimulatedLosses> {
    let mut out = simulate_ensemble(problem, &[delta0.to_vec()], std::slice::from_ref(target), record)?;
    Ok(out.pop().expect("one trajectory"))
}

/// Runs several initial conditions through the same training covariance as
/// one batched recurrence. `targets` holds either one shared target or one
/// per trajectory.
pub fn simulate_ensemble(
    problem: &TeacherStudent,
    deltas: &[Vec<f64>],
    targets: &[GenTarget],
    record: &[usize],
) -> Result<Vec<SimulatedLosses>> {
    let d = problem.cfg.d_in;
    let k = deltas.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no initial conditions".into()));
    }
    if targets.len() != 1 && targets.len() != k {
        return Err(Error::InvalidArgument(format!("{} targets for {k} trajectories", targets.len())));
    }
    if let Some(bad) = deltas.iter().find(|v| v.len() != d) {
        return Err(Error::Length { expected: d as u64, found: bad.len() as u64 });
    }
    if record.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("record steps must be strictly ascending".into()));
    }
    let last = record.last().copied().unwrap_or(0);
    let ops: Vec<GenOperator> = targets.iter().map(|t| problem.gen_operator(t)).collect::<Result<_>>()?;

    let mut state = Mat::from_fn(d, k, |i, j| deltas[j][i]);
    let mut grad = Mat::<f64>::zeros(d, k);
    let mut out: Vec<SimulatedLosses> = (0..k)
        .map(|_| SimulatedLosses {
            steps: Vec::with_capacity(record.len()),
            train: Vec::with_capacity(record.len()),
            gen: Vec::with_capacity(record.len()),
        })
        .collect();
    let mut initial = vec![0.0; k];
    let mut next = record.iter().peekable();
    let step_scale = 2.0 * problem.cfg.eta;
    for t in 0..=last {
        matmul(grad.as_mut(), Accum::Replace, problem.sigma_tr.as_ref(), state.as_ref(), 1.0, faer_par());
        let train = column_dots(&state, &grad);
        if t == 0 {
            initial.copy_from_slice(&train);
        } else if let Some(j) = (0..k).find(|&j| train[j] > DIVERGENCE_FACTOR * initial[j] && initial[j] > 0.0) {
            return Err(Error::Divergence(format!(
                "training loss of trajectory {j} grew from {:.3e} to {:.3e} by step {t}; \
                 the learning rate {} must stay below 1/(2 λ_max(Σ_tr)) = {:.6e}",
                initial[j],
                train[j],
                problem.cfg.eta,
                problem.stability_bound()
            )));
        }
        if next.peek() == Some(&&t) {
            next.next();
            let gen = if ops.len() == 1 {
                ops[0].quadratic_forms(&state)
            } else {
                (0..k)
                    .map(|j| ops[j].quadratic_forms(&Mat::from_fn(d, 1, |i, _| state[(i, j)]))[0])
                    .collect()
            };
            for j in 0..k {
                out[j].steps.push(t);
                out[j].train.push(train[j]);
                out[j].gen.push(gen[j]);
            }
        }
        if t < last {
            for j in 0..k {
                for i in 0..d {
                    state[(i, j)] -= step_scale * grad[(i, j)];
                }
            }
        }
    }
    Ok(out)
}

/// How `Δ₀` enters the flow solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projections {
    /// True projections of `Δ₀` on the eigenvectors of `Σ_tr`.
    Exact,
    /// Every squared projection replaced by `E‖Δ₀‖² / d_in = 1 / d_in`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticLosses {
    pub times: Vec<f64>,
    pub train: Vec<f64>,
    pub gen: Vec<f64>,
}

/// Gradient-flow losses `𝓛_tr(t) = Δ₀ᵀ e^{-4ηΣ_tr t} Σ_tr Δ₀` and
/// `𝓛_gen(t) = Δ(t)ᵀ Σ_gen Δ(t)` with `Δ(t) = e^{-2ηΣ_tr t} Δ₀`.
pub fn analytic_flow(
    problem: &TeacherStudent,
    times: &[f64],
    projections: Projections,
    target: &GenTarget,
) -> Result<AnalyticLosses> {
    let d = problem.cfg.d_in;
    let eta = problem.cfg.eta;
    let nu = &problem.nu;
    let v = &problem.vectors;
    let op = problem.gen_operator(target)?;
    let mut train = Vec::with_capacity(times.len());
    let mut gen = Vec::with_capacity(times.len());
    match projections {
        Projections::Exact => {
            let p: Vec<f64> = (0..d).map(|i| (0..d).map(|r| v[(r, i)] * problem.delta0[r]).sum()).collect();
            let mut delta_t = Mat::<f64>::zeros(d, times.len());
            for (c, &t) in times.iter().enumerate() {
                let decay: Vec<f64> = nu.iter().map(|n| (-2.0 * eta * n * t).exp()).collect();
                train.push((0..d).map(|i| nu[i] * p[i] * p[i] * decay[i] * decay[i]).sum());
                let coeff: Vec<f64> = (0..d).map(|i| decay[i] * p[i]).collect();
                for r in 0..d {
                    delta_t[(r, c)] = (0..d).map(|i| v[(r, i)] * coeff[i]).sum();
                }
            }
            gen = op.quadratic_forms(&delta_t);
        }
        Projections::Uniform => {
            let weights = op.diagonal_in_basis(v);
            for &t in times {
                let (mut tr, mut ge) = (0.0, 0.0);
                for i in 0..d {
                    let e = (-4.0 * eta * nu[i] * t).exp();
                    tr += nu[i] * e;
                    ge += weights[i] * e;
                }
                train.push(tr / d as f64);
                gen.push(ge / d as f64);
            }
        }
    }
    Ok(AnalyticLosses { times: times.to_vec(), train, gen })
}

/// Generalization loss averaged over Haar rotations of the population
/// covariance relative to `Σ_tr`:
/// `(Tr Σ_pop / d)(1/d) Σ_i e^{-4 η ν_i t}` at `E‖Δ₀‖² = 1`.
pub fn analytic_gen_haar(problem: &TeacherStudent, times: &[f64]) -> Vec<f64> {
    let d = problem.cfg.d_in as f64;
    let scale = problem.cfg.cov.trace() / d;
    let eta = problem.cfg.eta;
    times
        .iter()
        .map(|&t| scale * problem.nu.iter().map(|n| (-4.0 * eta * n * t).exp()).sum::<f64>() / d)
        .collect()
}

/// The Haar-averaged generalization loss with the empirical eigenvalue sum
/// replaced by an expectation over a limiting density of `Σ_tr`:
/// `(Tr Σ_pop / d) ∫ ρ(ν) e^{-4 η ν t} dν`, normalized by the density's mass.
pub fn analytic_gen_density(cfg: &TSConfig, density: &StieltjesSolution, times: &[f64]) -> Result<Vec<f64>> {
    if !(density.mass > 0.0) {
        return Err(Error::Numeric("density has no mass on its grid".into()));
    }
    let scale = cfg.cov.trace() / cfg.d_in as f64;
    Ok(times
        .iter()
        .map(|&t| {
            let y: Vec<f64> = density
                .lambda
                .iter()
                .zip(&density.density)
                .map(|(&l, &r)| r * (-4.0 * cfg.eta * l * t).exp())
                .collect();
            scale * trapezoid(&density.lambda, &y) / density.mass
        })
        .collect())
}

/// Log-spaced times `0 ∪ [1, t_max]`, where the slowest nonzero mode has
/// decayed by `10⁻³` at `t_max`.
pub fn default_time_grid(problem: &TeacherStudent, points: usize) -> Vec<f64> {
    let scale = problem.nu.last().copied().unwrap_or(0.0);
    let nu_min = problem.nu.iter().copied().find(|&n| n > 1e-10 * scale).unwrap_or(scale);
    let t_max = (1e3f64.ln() / (4.0 * problem.cfg.eta * nu_min)).max(1.0);
    let mut times = vec![0.0];
    if points >= 2 {
        times.extend(logspace(1.0, t_max, points - 1));
    }
    times
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub times: Vec<f64>,
    pub loss_train_sim: Vec<f64>,
    pub loss_gen_sim: Vec<f64>,
    pub loss_train_analytic: Vec<f64>,
    pub loss_gen_analytic: Vec<f64>,
}

/// Simulation of the problem's own `Δ₀` next to the flow solution on the
/// same recorded steps.
pub fn trajectory_pair(
    problem: &TeacherStudent,
    record: &[usize],
    projections: Projections,
    target: &GenTarget,
) -> Result<TrajectoryPair> {
    let sim = simulate_gd(problem, &problem.delta0, record, target)?;
    let times: Vec<f64> = sim.steps.iter().map(|&s| s as f64).collect();
    let ana = analytic_flow(problem, &times, projections, target)?;
    Ok(TrajectoryPair {
        times,
        loss_train_sim: sim.train,
        loss_gen_sim: sim.gen,
        loss_train_analytic: ana.train,
        loss_gen_analytic: ana.gen,
    })
}

/// Haar-distributed orthogonal matrix: Q of a Gaussian matrix's QR
/// factorization with the signs fixed so that `diag(R) > 0`.
pub fn haar_orthogonal(d: usize, seed: RngSeed, index: u64) -> Mat<f64> {
    let mut rng = seed.rng_for(index);
    let a = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `U diag(s) Uᵀ`.
pub fn rotate_diagonal(u: &Mat<f64>, s: &[f64]) -> Mat<f64> {
    let d = u.nrows();
    let us = Mat::from_fn(d, d, |i, j| u[(i, j)] * s[j]);
    let mut out = Mat::<f64>::zeros(d, d);
    matmul(out.as_mut(), Accum::Replace, us.as_ref(), u.transpose(), 1.0, faer_par());
    symmetrize(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{solve_stieltjes, StieltjesOptions};
    use crate::numeric::linspace;

    fn config(d: usize, n: usize, alpha: f64, eta: f64, steps: usize, seed: u64) -> TSConfig {
        let cov = standardized(&PopulationCovariance::cgd(d, 1.0, alpha).unwrap()).unwrap();
        TSConfig { d_in: d, n_train: n, eta, steps, cov, seed: RngSeed::new(seed, 0) }
    }

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_delta_is_a_fixed_point() {
        let p = TeacherStudent::new(config(20, 80, 0.25, 1e-3, 50, 1)).unwrap();
        let sim = simulate_gd(&p, &vec![0.0; 20], &record_schedule(50, 10), &GenTarget::Population).unwrap();
        assert!(sim.train.iter().chain(&sim.gen).all(|&v| v == 0.0));
    }

    #[test]
    fn identity_training_covariance_scalar_recursion() {
        let d = 16;
        let eta = 0.01;
        let p = TeacherStudent::with_training_matrix(config(d, 64, 0.0, eta, 200, 2), Mat::identity(d, d)).unwrap();
        let record: Vec<usize> = (0..=200).collect();
        let sim = simulate_gd(&p, p.delta0(), &record, &GenTarget::Population).unwrap();
        let norm2: f64 = p.delta0().iter().map(|v| v * v).sum();
        for (&t, &l) in sim.steps.iter().zip(&sim.train) {
            let expected = (1.0 - 2.0 * eta).powi(2 * t as i32) * norm2;
            assert!((l - expected).abs() <= 1e-12 * norm2, "t={t}: {l} vs {expected}");
        }
    }

    #[test]
    fn unstable_rate_is_rejected() {
        let cfg = config(30, 120, 0.25, 1.0, 10, 3);
        let err = TeacherStudent::new(cfg.clone()).unwrap_err();
        assert!(err.to_string().contains("stability"), "{err}");
        let stable = TeacherStudent::new(TSConfig { eta: 1e-4, ..cfg }).unwrap();
        assert!(stable.stability_bound() > 1e-4);
    }

    #[test]
    fn divergence_detected_when_bound_bypassed() {
        let d = 8;
        let mut p = TeacherStudent::with_training_matrix(config(d, 32, 0.0, 0.01, 100, 4), Mat::identity(d, d)).unwrap();
        // Widen the spectrum after the stability check to force growth.
        p.sigma_tr = Mat::<f64>::identity(d, d) * faer::Scale(200.0);
        let err = simulate_gd(&p, &p.delta0.clone(), &[0, 100], &GenTarget::Population).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn train_loss_non_increasing_and_initial_condition() {
        let p = TeacherStudent::new(config(40, 160, 0.25, 1e-2, 2000, 5)).unwrap();
        let pair = trajectory_pair(&p, &record_schedule(2000, 60), Projections::Exact, &GenTarget::Population).unwrap();
        assert!(pair.loss_train_sim.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(pair.loss_train_sim.iter().chain(&pair.loss_gen_sim).all(|&v| v >= 0.0));
        assert!((pair.loss_train_sim[0] - pair.loss_train_analytic[0]).abs() < 1e-12 * pair.loss_train_sim[0]);
        assert!((pair.loss_gen_sim[0] - pair.loss_gen_analytic[0]).abs() < 1e-12 * pair.loss_gen_sim[0]);
    }

    #[test]
    fn flow_limit_error_decreases_with_rate() {
        let mut errors = Vec::new();
        for eta in [1e-2, 1e-3, 1e-4] {
            let base = config(30, 120, 0.25, eta, 1, 6);
            let nu_max = TeacherStudent::new(TSConfig { eta: 1e-6, ..base.clone() }).unwrap().train_eigenvalues()[29];
            if eta >= 0.5 / nu_max {
                continue;
            }
            // Same flow horizon for every rate.
            let steps = (0.5 / (eta * 1e-2)).round() as usize;
            let p = TeacherStudent::new(TSConfig { steps, ..base }).unwrap();
            let pair = trajectory_pair(&p, &record_schedule(steps, 40), Projections::Exact, &GenTarget::Population).unwrap();
            errors.push(max_rel(&pair.loss_train_sim, &pair.loss_train_analytic));
        }
        assert_eq!(errors.len(), 3);
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
        assert!(errors[2] < 5e-3, "{errors:?}");
    }

    #[test]
    fn flow_decays_to_zero() {
        let p = TeacherStudent::new(config(30, 120, 0.25, 1e-3, 10, 7)).unwrap();
        let times = default_time_grid(&p, 30);
        let a = analytic_flow(&p, &[0.0, *times.last().unwrap() * 50.0], Projections::Exact, &GenTarget::Population).unwrap();
        assert!(a.train[1] < 1e-12 * a.train[0]);
        let h = analytic_gen_haar(&p, &[0.0]);
        assert!((h[0] - 1.0).abs() < 1e-12, "standardized trace gives unit prefactor");
    }

    fn uniform_vs_exact_deviation(cov: PopulationCovariance) -> f64 {
        let cfg = TSConfig { d_in: 1000, n_train: 4000, eta: 1e-4, steps: 1, cov, seed: RngSeed::new(8, 0) };
        let p = TeacherStudent::new(cfg).unwrap();
        let times = default_time_grid(&p, 200);
        let exact = analytic_flow(&p, &times, Projections::Exact, &GenTarget::Population).unwrap();
        let uniform = analytic_flow(&p, &times, Projections::Uniform, &GenTarget::Population).unwrap();
        // Directions only: the realized ‖Δ₀‖² is divided out.
        let norm2: f64 = p.delta0().iter().map(|v| v * v).sum();
        let l0 = exact.train[0];
        exact
            .train
            .iter()
            .zip(&uniform.train)
            .take_while(|(&e, _)| e >= 1e-3 * l0)
            .map(|(&e, &u)| (e / norm2 - u).abs() / u)
            .fold(0.0, f64::max)
    }

    #[test]
    fn uniform_projections_track_exact_at_large_d() {
        let dev = uniform_vs_exact_deviation(PopulationCovariance::identity(1000, 1.0).unwrap());
        assert!(dev < 0.05, "{dev}");
    }

    #[test]
    fn identity_population_haar_prefactor_is_one() {
        let d = 50;
        let cov = PopulationCovariance::identity(d, 1.0).unwrap();
        let cfg = TSConfig { d_in: d, n_train: 500, eta: 1e-3, steps: 1, cov, seed: RngSeed::new(9, 0) };
        let p = TeacherStudent::new(cfg).unwrap();
        let t = [0.0, 100.0, 1000.0];
        let h = analytic_gen_haar(&p, &t);
        for (hi, &ti) in h.iter().zip(&t) {
            let direct: f64 = p.train_eigenvalues().iter().map(|n| (-4e-3 * n * ti).exp()).sum::<f64>() / d as f64;
            assert!((hi - direct).abs() < 1e-14);
        }
        // For Σ_pop = I the uniform-projection generalization loss is the Haar curve.
        let u = analytic_flow(&p, &t, Projections::Uniform, &GenTarget::Population).unwrap();
        assert!(max_rel(&u.gen, &h) < 1e-12);
    }

    #[test]
    fn haar_matrices_are_orthogonal_and_average_to_scaled_identity() {
        let seed = RngSeed::new(10, 0);
        let q = haar_orthogonal(12, seed, 0);
        let mut qtq = Mat::<f64>::zeros(12, 12);
        matmul(qtq.as_mut(), Accum::Replace, q.transpose(), q.as_ref(), 1.0, faer::Par::Seq);
        assert!((qtq - Mat::<f64>::identity(12, 12)).norm_max() < 1e-12);

        // ‖⟨U X Uᵀ⟩ - (Tr X / d) I‖_F over 10⁴ samples, relative to ‖X‖_F.
        let samples = 10_000;
        let errs: Vec<f64> = [4usize, 16]
            .iter()
            .map(|&d| {
                let s: Vec<f64> = (1..=d).map(|i| i as f64).collect();
                let mut acc = Mat::<f64>::zeros(d, d);
                for k in 0..samples {
                    acc += rotate_diagonal(&haar_orthogonal(d, seed.derive(d as u64), k as u64), &s);
                }
                let mean_x = s.iter().sum::<f64>() / d as f64;
                let avg = acc * faer::Scale(1.0 / samples as f64);
                let diff = avg - Mat::<f64>::identity(d, d) * faer::Scale(mean_x);
                diff.norm_l2() / s.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        assert!(errs.iter().all(|&e| e < 0.05), "{errs:?}");
        assert!(errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn density_form_matches_eigenvalue_sum_at_t0_and_decays() {
        let d = 400;
        let p = TeacherStudent::new(config(d, 1600, 0.25, 1e-3, 1, 11)).unwrap();
        let cov = &p.config().cov;
        let top = p.train_eigenvalues()[d - 1] * 1.5;
        let grid = linspace(1e-3, top, 6000);
        let sol = solve_stieltjes(0.25, cov, &grid, &StieltjesOptions { eps: 1e-2, ..Default::default() });
        let sol = sol.unwrap();
        let times = [0.0, 50.0, 500.0];
        let dens = analytic_gen_density(p.config(), &sol, &times).unwrap();
        let haar = analytic_gen_haar(&p, &times);
        assert!((dens[0] - haar[0]).abs() < 1e-12);
        assert!(dens.windows(2).all(|w| w[1] < w[0]));
        assert!(max_rel(&dens, &haar) < 0.2, "{dens:?} vs {haar:?}");
    }

    #[test]
    fn gen_targets_agree_in_expectation() {
        let p = TeacherStudent::new(config(40, 400, 0.0, 1e-3, 1, 12)).unwrap();
        let u = haar_orthogonal(40, RngSeed::new(1, 0), 0);
        let rotated = rotate_diagonal(&u, p.config().cov.singular_values());
        let diag = Mat::from_fn(40, 40, |i, j| if i == j { p.config().cov.singular_values()[i] } else { 0.0 });
        let a = simulate_gd(&p, p.delta0(), &[0], &GenTarget::Population).unwrap();
        let b = simulate_gd(&p, p.delta0(), &[0], &GenTarget::Matrix(diag)).unwrap();
        assert!((a.gen[0] - b.gen[0]).abs() < 1e-12 * a.gen[0]);
        let c = simulate_gd(&p, p.delta0(), &[0], &GenTarget::Matrix(rotated)).unwrap();
        assert!(c.gen[0] > 0.0);
        let s = simulate_gd(&p, p.delta0(), &[0], &GenTarget::Sample { n_gen: 20_000 }).unwrap();
        assert!((s.gen[0] - a.gen[0]).abs() < 0.1 * a.gen[0]);
    }
}
