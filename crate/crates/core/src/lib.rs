//! Empirical Gram-matrix spectra and the random-matrix diagnostics used to
//! compare real datasets against correlated Gaussian surrogates.
//!
//! The crate is organised by stage of the analysis:
//!
//! - [`datamatrix`]: ingestion (IDX, GRM1, CSV) and centering/standardization.
//! - [`synth`]: uncorrelated and power-law correlated Gaussian data, noise corruption.
//! - [`spectra`]: Gram matrices, eigenvalues, bulk detection, power-law fits,
//!   entropy, histograms and KL divergence.
//! - [`rmtstats`]: unfolding, level spacings, spacing ratios, spectral form factor.
//! - [`theory`]: Marčenko-Pastur law, the self-consistent Stieltjes solver,
//!   bulk power-law prediction, GOE reference sampling.
//! - [`convergence`]: sample-size sweeps and the ergodic threshold.
//! - [`teacher_student`]: linear teacher-student gradient descent and its flow solution.

pub mod convergence;
pub mod datamatrix;
pub mod error;
pub mod numeric;
pub mod rmtstats;
pub mod rng;
pub mod spectra;
pub mod synth;
pub mod teacher_student;
pub mod theory;

pub use error::{Error, Result};
pub use rng::RngSeed;

/// Parallelism hint for faer kernels, following the active rayon pool.
pub(crate) fn faer_par() -> faer::Par {
    match rayon::current_num_threads() {
        0 | 1 => faer::Par::Seq,
        n => faer::Par::rayon(n),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    /// Cyclic Jacobi eigenvalues of a small symmetric row-major matrix.
    /// Independent of faer; used as an oracle.
    pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
        let mut a = a.to_vec();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i * n + i]).collect()
    }
}
