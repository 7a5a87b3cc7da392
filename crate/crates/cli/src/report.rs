//! The JSON diagnostics report.

use serde::Serialize;
use serde_json::Value;
use spectralens_core::datamatrix::{DataMatrix, Preprocessing};
use spectralens_core::numeric::ks_distance;
use spectralens_core::rmtstats::{
    level_spacing, poisson_spacing_cdf, r_statistics, unfold, wigner_cdf, SffCurve, UnfoldConfig, GOE_MEAN_R,
    POISSON_MEAN_R,
};
use spectralens_core::spectra::{fit_power_law, spectral_entropy, BulkRange, Spectrum};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDescriptor {
    pub source: String,
    pub d: usize,
    pub m: usize,
}

impl InputDescriptor {
    pub fn of(x: &DataMatrix) -> Self {
        Self { source: x.source().to_string(), d: x.d(), m: x.m() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub d: usize,
    pub m: usize,
    pub lambda_max: f64,
    pub trace: f64,
    pub bulk_range: BulkRange,
    pub n_bulk: usize,
    pub alpha: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub entropy: f64,
}

impl SpectrumSummary {
    /// `s` must carry a bulk range.
    pub fn of(s: &Spectrum) -> CliResult<Self> {
        let fit = fit_power_law(s)?;
        let range = s.bulk_range().expect("bulk range set by caller");
        Ok(Self {
            d: s.d(),
            m: s.m(),
            lambda_max: s.eigenvalues()[0],
            trace: s.trace(),
            bulk_range: range,
            n_bulk: range.len(),
            alpha: fit.alpha,
            amplitude: fit.amplitude,
            r_squared: fit.r_squared,
            entropy: spectral_entropy(s)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SffSummary {
    pub members: usize,
    pub levels_per_member: f64,
    pub window_half_width: f64,
    /// Mean and standard deviation of `K(τ)` over the `τ ≥ 1` grid points.
    pub plateau_mean: f64,
    pub plateau_std: f64,
}

impl SffSummary {
    pub fn of(curve: &SffCurve) -> Self {
        let tail: Vec<f64> = curve.taus.iter().zip(&curve.values).filter(|(t, _)| **t >= 1.0).map(|(_, v)| *v).collect();
        let n = tail.len().max(1) as f64;
        let mean = tail.iter().sum::<f64>() / n;
        let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            members: curve.members,
            levels_per_member: curve.normalization,
            window_half_width: curve.window.half_width,
            plateau_mean: mean,
            plateau_std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RmtSummary {
    pub mean_r: f64,
    pub r_goe: f64,
    pub r_poisson: f64,
    pub unfold_variable: String,
    pub mean_spacing: f64,
    pub passes_quality_gate: bool,
    pub ks_wigner: f64,
    pub ks_poisson: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sff: Option<SffSummary>,
}

impl RmtSummary {
    pub fn of(s: &Spectrum) -> CliResult<Self> {
        let r = r_statistics(s)?;
        let u = unfold(s, &UnfoldConfig::default())?;
        let sp = level_spacing(&u, 40)?;
        Ok(Self {
            mean_r: r.mean,
            r_goe: GOE_MEAN_R,
            r_poisson: POISSON_MEAN_R,
            unfold_variable: format!("{:?}", u.variable).to_lowercase(),
            mean_spacing: sp.mean(),
            passes_quality_gate: u.passes_quality_gate,
            ks_wigner: ks_distance(&sp.spacings, wigner_cdf),
            ks_poisson: ks_distance(&sp.spacings, poisson_spacing_cdf),
            sff: None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KlComparison {
    pub label: String,
    pub bins: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    /// Effective configuration with every default resolved.
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputDescriptor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<Preprocessing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmt: Option<RmtSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    pub theory_kl: Vec<KlComparison>,
    /// Command-specific results.
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<SeedRecord>,
    pub wall_time_seconds: f64,
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn new(command: &str, config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo::default(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            input: None,
            preprocessing: None,
            spectrum: None,
            rmt: None,
            entropy: None,
            theory_kl: Vec::new(),
            results: Value::Null,
            seed: None,
            wall_time_seconds: 0.0,
            notes: Vec::new(),
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(SeedRecord { seed, threads: rayon::current_num_threads() });
        self
    }

    pub fn with_input(mut self, x: &DataMatrix) -> Self {
        self.input = Some(InputDescriptor::of(x));
        self.preprocessing = Some(x.preprocessing());
        self
    }

    /// Rejects reports holding NaN or infinite numbers, which serde turns into
    /// `null`. Absent optional sections are skipped rather than serialized,
    /// so any `null` outside the free-form `config` and `results` values
    /// marks a non-finite number.
    pub fn check_finite(&self) -> CliResult<()> {
        let Value::Object(map) = serde_json::to_value(self)? else {
            return Ok(());
        };
        for (k, v) in &map {
            if k == "config" || k == "results" {
                continue;
            }
            if let Some(path) = find_null(v, k) {
                return Err(CliError::NonFinite(path));
            }
        }
        Ok(())
    }
}

fn find_null(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Null => Some(path.to_string()),
        Value::Object(map) => map.iter().find_map(|(k, x)| find_null(x, &format!("{path}.{k}"))),
        Value::Array(xs) => xs.iter().enumerate().find_map(|(i, x)| find_null(x, &format!("{path}[{i}]"))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_fields_are_rejected() {
        let mut r = DiagnosticsReport::new("test", &serde_json::json!({ "k": null })).unwrap();
        r.results = serde_json::json!({ "maybe": null });
        assert!(r.check_finite().is_ok());
        r.entropy = Some(f64::NAN);
        match r.check_finite() {
            Err(CliError::NonFinite(path)) => assert_eq!(path, "entropy"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
        r.entropy = Some(1.0);
        r.theory_kl.push(KlComparison { label: "x".into(), bins: 4, kl: f64::INFINITY });
        assert!(matches!(r.check_finite(), Err(CliError::NonFinite(p)) if p == "theory_kl[0].kl"));
    }

    #[test]
    fn sff_summary_uses_tau_at_least_one() {
        let curve = SffCurve {
            taus: vec![0.5, 1.0, 2.0],
            values: vec![0.2, 0.9, 1.1],
            normalization: 100.0,
            members: 2,
            window: Default::default(),
        };
        let s = SffSummary::of(&curve);
        assert!((s.plateau_mean - 1.0).abs() < 1e-12);
        assert!((s.plateau_std - 0.1).abs() < 1e-12);
    }
}
