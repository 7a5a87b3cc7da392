use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spectralens_core::synth::ToeplitzForm;

#[derive(Debug, Parser, Serialize)]
#[command(name = "spectralens", version, about = "Random-matrix diagnostics for Gram-matrix spectra")]
pub struct Cli {
    /// Worker threads for numerical kernels (default: all cores).
    #[arg(long, global = true, env = "SPECTRALENS_THREADS")]
    pub threads: Option<usize>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a Gaussian dataset (UGD or CGD).
    Synth(SynthArgs),
    /// Mix a dataset with variance-matched Gaussian noise.
    Corrupt(CorruptArgs),
    /// Gram spectrum, bulk range, power-law fit, entropy and histogram.
    Spectrum(SpectrumArgs),
    /// Spacing ratios, unfolded level spacings and spectral form factor.
    Rmt(RmtArgs),
    /// Analytic reference curves.
    Theory(TheoryArgs),
    /// Sample-size convergence sweep.
    Converge(ConvergeArgs),
    /// Teacher-student gradient descent against its flow solution.
    Ts(TsArgs),
    /// End-to-end reproduction of a named figure.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// By extension, then by magic bytes.
    Auto,
    Idx,
    Grm1,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvOrientation {
    /// One sample per row.
    Rows,
    /// One feature per row.
    Columns,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Dataset file (IDX, GRM1 or CSV).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,

    #[arg(long, value_enum, default_value_t = CsvOrientation::Rows)]
    pub csv_layout: CsvOrientation,

    /// The CSV file starts with a header row.
    #[arg(long)]
    pub csv_header: bool,

    /// Skip centering (the Gram matrix is then a second-moment matrix).
    #[arg(long)]
    pub no_center: bool,

    /// Scale every feature to unit sample variance after centering.
    #[arg(long, conflicts_with = "no_center")]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormArg {
    PowerLaw,
    PowerLawPlusOne,
    LaplaceSeries,
    DenseSvd,
}

impl From<FormArg> for ToeplitzForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::PowerLaw => ToeplitzForm::PowerLaw,
            FormArg::PowerLawPlusOne => ToeplitzForm::PowerLawPlusOne,
            FormArg::LaplaceSeries => ToeplitzForm::LaplaceSeries,
            FormArg::DenseSvd => ToeplitzForm::DenseSvd,
        }
    }
}

/// Population covariance: uncorrelated (`--ugd`) or power-law correlated.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CovArgs {
    /// Uncorrelated data, Σ = σ² I.
    #[arg(long, conflicts_with_all = ["alpha", "c", "form"])]
    pub ugd: bool,

    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,

    /// Correlation exponent α of the CGD population.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    /// Amplitude c of the CGD population.
    #[arg(long)]
    pub c: Option<f64>,

    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Grm1,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub d: usize,

    #[arg(long)]
    pub m: usize,

    #[command(flatten)]
    pub cov: CovArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = OutputFormat::Grm1)]
    pub out_format: OutputFormat,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorruptArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,

    /// Noise fraction f in [0, 1].
    #[arg(long)]
    pub fraction: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BulkArgs {
    /// First bulk index (1-based).
    #[arg(long, default_value_t = 10)]
    pub bulk_start: usize,

    /// Slope deviation that ends the bulk.
    #[arg(long, default_value_t = 0.5)]
    pub slope_tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub bulk: BulkArgs,

    /// Histogram bins of the max-scaled bulk.
    #[arg(long, default_value_t = 64)]
    pub bins: usize,

    /// JSON diagnostics report.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Eigenvalues as CSV.
    #[arg(long, value_name = "FILE")]
    pub eigenvalues_csv: Option<PathBuf>,

    /// Log-log scree plot.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RmtArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub bulk: BulkArgs,

    /// Spacing histogram bins on [0, 4].
    #[arg(long, default_value_t = 40)]
    pub spacing_bins: usize,

    /// Disjoint column blocks used as form-factor ensemble members.
    #[arg(long, default_value_t = 1)]
    pub sff_members: usize,

    /// Half-width of the τ averaging window (0 disables it).
    #[arg(long, default_value_t = 0.05)]
    pub sff_window: f64,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Spacing histogram with the Wigner surmise.
    #[arg(long, value_name = "FILE")]
    pub spacing_csv: Option<PathBuf>,

    /// Form factor with the GOE curve.
    #[arg(long, value_name = "FILE")]
    pub sff_csv: Option<PathBuf>,

    /// Spacing histogram plot.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TheoryArgs {
    #[command(subcommand)]
    pub curve: TheoryCurve,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "curve", rename_all = "kebab-case")]
pub enum TheoryCurve {
    /// Closed-form Marčenko-Pastur density.
    Mp(MpArgs),
    /// Stieltjes-solver density for a general population.
    Genmp(GenMpArgs),
    /// Predicted bulk eigenvalues `λ_i`.
    Bulk(BulkPredictionArgs),
    /// Toeplitz singular values: dense SVD against the Laplace series.
    Laplace(LaplaceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MpArgs {
    /// d / M.
    #[arg(long)]
    pub gamma: f64,

    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,

    #[arg(long, default_value_t = 400)]
    pub points: usize,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenMpArgs {
    #[arg(long)]
    pub gamma: f64,

    #[arg(long)]
    pub d: usize,

    #[command(flatten)]
    pub cov: CovArgs,

    /// Imaginary offset ε of the evaluation contour.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,

    #[arg(long)]
    pub lambda_min: f64,

    #[arg(long)]
    pub lambda_max: f64,

    #[arg(long, default_value_t = 2000)]
    pub points: usize,

    /// Log-spaced λ grid.
    #[arg(long)]
    pub log_grid: bool,

    /// Use the discrete population sum even when a continuum kernel exists.
    #[arg(long)]
    pub discrete: bool,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BulkPredictionArgs {
    #[arg(long)]
    pub d: usize,

    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LaplaceArgs {
    #[arg(long)]
    pub d: usize,

    #[arg(long, default_value_t = 1.0)]
    pub c: f64,

    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub bulk: BulkArgs,

    /// `log:LO:HI:N` or a comma-separated list.
    #[arg(long, default_value = "log:100:60000:24")]
    pub m_grid: String,

    #[arg(long, default_value_t = 5)]
    pub seeds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Relative band around the plateau.
    #[arg(long, default_value_t = 0.2)]
    pub plateau_tolerance: f64,

    /// Trailing points averaged into the plateau.
    #[arg(long, default_value_t = 3)]
    pub plateau_tail: usize,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// JSON report with the reference values and M_crit.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Log-log plot of δ, Δ and ε.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenTargetArg {
    Population,
    Sample,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TsArgs {
    #[arg(long, default_value_t = 1000)]
    pub d_in: usize,

    #[arg(long, default_value_t = 4000)]
    pub n_train: usize,

    #[command(flatten)]
    pub cov: CovArgs,

    /// Learning rate η₀.
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,

    #[arg(long, default_value_t = 20000)]
    pub steps: usize,

    /// Teacher/student replicas averaged for the generalization curve.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Use the population covariance as given instead of rescaling it to
    /// unit mean eigenvalue.
    #[arg(long)]
    pub raw_scale: bool,

    #[arg(long, value_enum, default_value_t = GenTargetArg::Population)]
    pub gen_target: GenTargetArg,

    /// Size of the generalization set for `--gen-target sample`.
    #[arg(long, default_value_t = 10000)]
    pub n_gen: usize,

    /// Recorded steps (log-spaced).
    #[arg(long, default_value_t = 120)]
    pub points: usize,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureName {
    Fig1Scree,
    Fig2Density,
    Fig3Goe,
    Fig4Convergence,
    Fig5Entropy,
    #[value(name = "appB-genmp")]
    #[serde(rename = "appB-genmp")]
    AppBGenmp,
    #[value(name = "appD-teacher")]
    #[serde(rename = "appD-teacher")]
    AppDTeacher,
}

impl FigureName {
    pub fn slug(self) -> &'static str {
        match self {
            FigureName::Fig1Scree => "fig1-scree",
            FigureName::Fig2Density => "fig2-density",
            FigureName::Fig3Goe => "fig3-goe",
            FigureName::Fig4Convergence => "fig4-convergence",
            FigureName::Fig5Entropy => "fig5-entropy",
            FigureName::AppBGenmp => "appB-genmp",
            FigureName::AppDTeacher => "appD-teacher",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub name: FigureName,

    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Use CGD surrogates only, even if a dataset file is available.
    #[arg(long, conflicts_with = "fmnist")]
    pub synthetic_only: bool,

    /// Fashion-MNIST training images (IDX). Falls back to SPECTRALENS_FMNIST.
    #[arg(long, value_name = "FILE")]
    pub fmnist: Option<PathBuf>,

    /// Reduced sizes for smoke runs.
    #[arg(long)]
    pub quick: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
