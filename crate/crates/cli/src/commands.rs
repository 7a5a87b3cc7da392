//! Subcommand handlers. Each handler computes every artifact in memory
//! before anything is written, so a failing run leaves no partial output.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde_json::json;
use spectralens_core::convergence::{
    entropy_trajectory, locate_mcrit, log_log_slope, sweep, ConvergenceSweep, MGrid, Metric, PlateauConfig,
    SweepConfig,
};
use spectralens_core::datamatrix::{
    load_csv, load_idx, load_raw, preprocess, write_grm1, CsvLayout, DataMatrix, GRM1_MAGIC,
};
use spectralens_core::numeric::{linspace, logspace};
use spectralens_core::rmtstats::{
    goe_sff, level_spacing, poisson_spacing_cdf, spectral_form_factor, unfold, wigner_cdf, wigner_surmise, SffCurve,
    SffWindow, UnfoldConfig, UnfoldedSpectrum,
};
use spectralens_core::spectra::{
    detect_bulk, fit_power_law, histogram, spectrum_of, BulkConfig, HistogramNormalization, Spectrum,
};
use spectralens_core::synth::{
    corrupt_with_noise, laplace_singular_values, sample_gaussian, toeplitz_singular_values, LaplaceMode,
    PopulationCovariance, ToeplitzForm, DENSE_TOEPLITZ_MAX_D,
};
use spectralens_core::teacher_student::{
    analytic_gen_haar, record_schedule, simulate_ensemble, standardized, trajectory_pair, GenTarget, Projections,
    TSConfig, TeacherStudent, TrajectoryPair,
};
use spectralens_core::theory::{
    bulk_prediction, mp_density, mp_edges, solve_stieltjes, PopulationModel, StieltjesOptions,
};
use spectralens_core::RngSeed;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, fmt_opt, write_all, Artifact, Table};
use crate::report::{DiagnosticsReport, RmtSummary, SffSummary, SpectrumSummary};
use crate::svg::{Mark, Plot, Series};

const TAG_SFF_BLOCKS: u64 = 0x5ff;

pub fn dispatch(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Rmt(a) => rmt(a),
        Command::Theory(a) => theory(&a.curve),
        Command::Converge(a) => converge(a),
        Command::Ts(a) => ts(a),
        Command::Figure(a) => crate::figures::run(a),
    }
}

fn sniff_format(path: &Path) -> CliResult<InputFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "csv" | "txt" => return Ok(InputFormat::Csv),
        "grm1" | "grm" => return Ok(InputFormat::Grm1),
        "idx" | "idx3-ubyte" | "ubyte" => return Ok(InputFormat::Idx),
        _ => {}
    }
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    if &magic == GRM1_MAGIC {
        Ok(InputFormat::Grm1)
    } else if magic[0] == 0 && magic[1] == 0 && magic[2] == 0x08 {
        Ok(InputFormat::Idx)
    } else {
        Err(CliError::Usage(format!("cannot infer the format of {}; pass --format", path.display())))
    }
}

pub fn read_matrix(path: &Path, format: InputFormat, layout: CsvOrientation, header: bool) -> CliResult<DataMatrix> {
    let format = if format == InputFormat::Auto { sniff_format(path)? } else { format };
    let x = match format {
        InputFormat::Idx => load_idx(path)?,
        InputFormat::Grm1 => load_raw(path)?,
        InputFormat::Csv => {
            let layout = match layout {
                CsvOrientation::Rows => CsvLayout::SamplesAsRows,
                CsvOrientation::Columns => CsvLayout::SamplesAsColumns,
            };
            load_csv(path, layout, header)?
        }
        InputFormat::Auto => unreachable!(),
    };
    Ok(x)
}

/// Reads the input and applies the requested preprocessing.
pub fn load_input(args: &InputArgs) -> CliResult<DataMatrix> {
    let x = read_matrix(&args.input, args.format, args.csv_layout, args.csv_header)?;
    info!("loaded {} with d = {}, M = {}", x.source(), x.d(), x.m());
    Ok(if args.no_center { x } else { preprocess(&x, args.standardize) })
}

pub fn covariance(d: usize, cov: &CovArgs) -> CliResult<PopulationCovariance> {
    if cov.ugd {
        return Ok(PopulationCovariance::identity(d, cov.sigma2)?);
    }
    let alpha = cov.alpha.ok_or_else(|| CliError::Usage("--alpha is required unless --ugd is given".into()))?;
    let form = cov.form.map(ToeplitzForm::from).unwrap_or(ToeplitzForm::PowerLaw);
    Ok(PopulationCovariance::toeplitz(d, cov.c.unwrap_or(1.0), alpha, form)?)
}

pub fn bulk_config(b: &BulkArgs) -> BulkConfig {
    BulkConfig { i_start: b.bulk_start, slope_tolerance: b.slope_tolerance, ..BulkConfig::default() }
}

fn require(cond: bool, msg: &str) -> CliResult<()> {
    if cond { Ok(()) } else { Err(CliError::Usage(msg.to_string())) }
}

fn finish(artifacts: &[Artifact], report: Option<&DiagnosticsReport>) -> CliResult<()> {
    if let Some(r) = report {
        r.check_finite()?;
    }
    write_all(artifacts)
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    let cov = covariance(a.d, &a.cov)?;
    let x = sample_gaussian(&cov, a.m, RngSeed::new(a.seed, 0))?;
    let bytes = match a.out_format {
        OutputFormat::Grm1 => {
            let mut buf = Vec::new();
            write_grm1(&x, &mut buf)?;
            buf
        }
        OutputFormat::Csv => matrix_csv(&x)?,
    };
    write_all(&[Artifact::new(&a.out, bytes)])?;
    println!("wrote {} (d = {}, M = {})", a.out.display(), x.d(), x.m());
    Ok(())
}

/// One sample per row, one feature per column.
fn matrix_csv(x: &DataMatrix) -> CliResult<Vec<u8>> {
    let names: Vec<String> = (0..x.d()).map(|i| format!("x{i}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for j in 0..x.m() {
        t.push_nums(x.column(j));
    }
    t.to_bytes()
}

fn corrupt(a: &CorruptArgs) -> CliResult<()> {
    let x = read_matrix(&a.input, a.format, CsvOrientation::Rows, false)?;
    let y = corrupt_with_noise(&x, a.fraction, RngSeed::new(a.seed, 0))?;
    let mut buf = Vec::new();
    write_grm1(&y, &mut buf)?;
    write_all(&[Artifact::new(&a.out, buf)])?;
    println!("wrote {} (noise fraction {})", a.out.display(), a.fraction);
    Ok(())
}

/// Gram spectrum with its bulk detected.
pub fn analyze(x: &DataMatrix, bulk: &BulkConfig) -> CliResult<Spectrum> {
    let s = spectrum_of(x)?;
    Ok(detect_bulk(&s, bulk)?)
}

pub fn scree_plot(title: &str, spectra: &[(&str, &Spectrum)]) -> Plot {
    let mut plot = Plot::new(title, "rank i", "eigenvalue").log_log();
    for (label, s) in spectra {
        let pts: Vec<(f64, f64)> =
            s.eigenvalues().iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, v)| (i as f64 + 1.0, *v)).collect();
        plot = plot.with(Series::new(*label, pts, Mark::Line));
        if let (Some(r), Ok(fit)) = (s.bulk_range(), fit_power_law(s)) {
            let line = [r.start, r.end]
                .iter()
                .map(|&i| (i as f64, fit.amplitude * (i as f64).powf(-(1.0 + fit.alpha))))
                .collect();
            plot = plot.with(Series::new(format!("{label} fit, alpha = {:.3}", fit.alpha), line, Mark::Dashed));
        }
    }
    plot
}

fn spectrum(a: &SpectrumArgs) -> CliResult<()> {
    require(a.bins >= 2, "--bins must be at least 2")?;
    let start = Instant::now();
    let x = load_input(&a.input)?;
    let s = analyze(&x, &bulk_config(&a.bulk))?;
    let summary = SpectrumSummary::of(&s)?;
    let hist = histogram(&s, a.bins, HistogramNormalization::MaxScaled)?;

    let mut report = DiagnosticsReport::new("spectrum", a)?.with_input(&x);
    report.entropy = Some(summary.entropy);
    report.spectrum = Some(summary.clone());
    report.results = json!({
        "histogram": { "normalization": "max-scaled", "bin_edges": hist.bin_edges, "masses": hist.masses },
    });

    let mut artifacts = Vec::new();
    if let Some(p) = &a.eigenvalues_csv {
        let r = summary.bulk_range;
        let mut t = Table::new(&["index", "eigenvalue", "in_bulk"]);
        for (i, v) in s.eigenvalues().iter().enumerate() {
            let k = i + 1;
            t.push(vec![k.to_string(), fmt_num(*v), u8::from(k >= r.start && k <= r.end).to_string()]);
        }
        artifacts.push(t.artifact(p)?);
    }
    if let Some(p) = &a.svg {
        artifacts.push(Artifact::new(p, scree_plot("Gram spectrum", &[("data", &s)]).render()));
    }
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    artifacts.push(Artifact::json(&a.out, &report)?);
    finish(&artifacts, Some(&report))?;

    println!("d = {}, M = {}", summary.d, summary.m);
    println!("bulk = [{}, {}] ({} eigenvalues)", summary.bulk_range.start, summary.bulk_range.end, summary.n_bulk);
    println!("alpha = {:.4} (R^2 = {:.4})", summary.alpha, summary.r_squared);
    println!("spectral entropy = {:.4}", summary.entropy);
    Ok(())
}

/// Splits the columns into `k` disjoint blocks after a seeded shuffle.
pub fn column_blocks(x: &DataMatrix, k: usize, seed: RngSeed) -> CliResult<Vec<DataMatrix>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..x.m()).collect();
    idx.shuffle(&mut seed.rng_for(0));
    let size = x.m() / k;
    require(size >= 2, "too few samples for the requested number of form-factor members")?;
    idx.chunks_exact(size)
        .take(k)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            Ok(x.select_columns(&c)?)
        })
        .collect()
}

pub fn sff_taus() -> Vec<f64> {
    linspace(0.02, 3.0, 150)
}

/// Form factor of the unfolded bulk, one member per disjoint column block.
pub fn ensemble_sff(
    x: &DataMatrix,
    full: &UnfoldedSpectrum,
    members: usize,
    bulk: &BulkConfig,
    window: SffWindow,
    seed: RngSeed,
) -> CliResult<SffCurve> {
    let unfolded = if members <= 1 {
        vec![full.clone()]
    } else {
        let blocks = column_blocks(x, members, seed.derive(TAG_SFF_BLOCKS))?;
        blocks
            .iter()
            .map(|b| {
                let s = analyze(&preprocess(b, false), bulk)?;
                Ok(unfold(&s, &UnfoldConfig::default())?)
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    Ok(spectral_form_factor(&unfolded, &sff_taus(), window)?)
}

pub fn spacing_table(edges: &[f64], masses: &[f64]) -> Table {
    let mut t = Table::new(&["s_lo", "s_hi", "s", "density", "wigner", "poisson"]);
    for (w, m) in edges.windows(2).zip(masses) {
        let c = 0.5 * (w[0] + w[1]);
        let width = w[1] - w[0];
        let wig = (wigner_cdf(w[1]) - wigner_cdf(w[0])) / width;
        let poi = (poisson_spacing_cdf(w[1]) - poisson_spacing_cdf(w[0])) / width;
        t.push_nums(&[w[0], w[1], c, m / width, wig, poi]);
    }
    t
}

pub fn sff_table(curve: &SffCurve) -> CliResult<Table> {
    let mut t = Table::new(&["tau", "sff", "sff_goe"]);
    for (tau, k) in curve.taus.iter().zip(&curve.values) {
        t.push_nums(&[*tau, *k, goe_sff(*tau)?]);
    }
    Ok(t)
}

pub fn spacing_plot(title: &str, edges: &[f64], masses: &[f64]) -> Plot {
    let heights: Vec<f64> = edges.windows(2).zip(masses).map(|(w, m)| m / (w[1] - w[0])).collect();
    let s = linspace(0.0, 4.0, 200);
    let wig: Vec<f64> = s.iter().map(|&v| wigner_surmise(v)).collect();
    let poi: Vec<f64> = s.iter().map(|&v| (-v).exp()).collect();
    Plot::new(title, "spacing s", "P(s)")
        .with(Series::histogram("data", edges, &heights))
        .with(Series::from_xy("Wigner surmise", &s, &wig, Mark::Line))
        .with(Series::from_xy("Poisson", &s, &poi, Mark::Dashed))
}

fn rmt(a: &RmtArgs) -> CliResult<()> {
    require(a.spacing_bins >= 2, "--spacing-bins must be at least 2")?;
    require(a.sff_members >= 1, "--sff-members must be at least 1")?;
    require(a.sff_window >= 0.0, "--sff-window must be non-negative")?;
    let start = Instant::now();
    let x = load_input(&a.input)?;
    let bulk = bulk_config(&a.bulk);
    let s = analyze(&x, &bulk)?;
    let mut rmt = RmtSummary::of(&s)?;
    let u = unfold(&s, &UnfoldConfig::default())?;
    let spacing = level_spacing(&u, a.spacing_bins)?;
    let window = if a.sff_window == 0.0 { SffWindow::NONE } else { SffWindow { half_width: a.sff_window, ..SffWindow::default() } };
    let curve = ensemble_sff(&x, &u, a.sff_members, &bulk, window, RngSeed::new(a.seed, 0))?;
    rmt.sff = Some(SffSummary::of(&curve));

    let mut report = DiagnosticsReport::new("rmt", a)?.with_input(&x).with_seed(a.seed);
    let summary = SpectrumSummary::of(&s)?;
    report.entropy = Some(summary.entropy);
    report.spectrum = Some(summary);
    report.rmt = Some(rmt.clone());
    report.results = json!({
        "spacing_histogram": { "bin_edges": spacing.histogram.bin_edges, "masses": spacing.histogram.masses },
        "sff": { "taus": curve.taus, "values": curve.values },
    });
    if !rmt.passes_quality_gate {
        report.notes.push("unfolded mean spacing deviates from 1 by more than the quality tolerance".into());
    }

    let mut artifacts = Vec::new();
    if let Some(p) = &a.spacing_csv {
        artifacts.push(spacing_table(&spacing.histogram.bin_edges, &spacing.histogram.masses).artifact(p)?);
    }
    if let Some(p) = &a.sff_csv {
        artifacts.push(sff_table(&curve)?.artifact(p)?);
    }
    if let Some(p) = &a.svg {
        let plot = spacing_plot("Unfolded level spacings", &spacing.histogram.bin_edges, &spacing.histogram.masses);
        artifacts.push(Artifact::new(p, plot.render()));
    }
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    artifacts.push(Artifact::json(&a.out, &report)?);
    finish(&artifacts, Some(&report))?;

    println!("<r> = {:.4} (GOE {:.4}, Poisson {:.4})", rmt.mean_r, rmt.r_goe, rmt.r_poisson);
    println!("unfolded mean spacing = {:.4} (quality gate {})", rmt.mean_spacing, if rmt.passes_quality_gate { "passed" } else { "failed" });
    println!("KS distance: Wigner {:.4}, Poisson {:.4}", rmt.ks_wigner, rmt.ks_poisson);
    if let Some(sff) = &rmt.sff {
        println!("form factor plateau = {:.3} +/- {:.3} over {} member(s)", sff.plateau_mean, sff.plateau_std, sff.members);
    }
    Ok(())
}

fn theory(curve: &TheoryCurve) -> CliResult<()> {
    match curve {
        TheoryCurve::Mp(a) => {
            require(a.points >= 2, "--points must be at least 2")?;
            let (lo, hi) = mp_edges(a.sigma2, a.gamma)?;
            let mut t = Table::new(&["lambda", "density"]);
            for l in linspace(lo, hi, a.points) {
                t.push_nums(&[l, mp_density(l, a.sigma2, a.gamma)?]);
            }
            write_all(&[t.artifact(&a.out)?])?;
            println!("MP support [{lo:.6}, {hi:.6}], {} points written to {}", a.points, a.out.display());
        }
        TheoryCurve::Genmp(a) => {
            require(a.points >= 2, "--points must be at least 2")?;
            require(a.lambda_min < a.lambda_max, "--lambda-min must be below --lambda-max")?;
            require(!a.log_grid || a.lambda_min > 0.0, "--log-grid needs a positive --lambda-min")?;
            let cov = covariance(a.d, &a.cov)?;
            let grid =
                if a.log_grid { logspace(a.lambda_min, a.lambda_max, a.points) } else { linspace(a.lambda_min, a.lambda_max, a.points) };
            let opts = StieltjesOptions {
                eps: a.eps,
                population: if a.discrete { PopulationModel::Discrete } else { PopulationModel::Auto },
                ..StieltjesOptions::default()
            };
            let sol = solve_stieltjes(a.gamma, &cov, &grid, &opts)?;
            let mut t = Table::new(&["lambda", "density", "g_re", "g_im"]);
            for ((l, r), g) in sol.lambda.iter().zip(&sol.density).zip(&sol.g) {
                t.push_nums(&[*l, *r, g.0, g.1]);
            }
            let mut artifacts = vec![t.artifact(&a.out)?];
            if let Some(p) = &a.svg {
                let mut plot = Plot::new("Limiting spectral density", "lambda", "density")
                    .with(Series::from_xy("solver", &sol.lambda, &sol.density, Mark::Line));
                if a.log_grid {
                    plot = plot.log_x();
                }
                artifacts.push(Artifact::new(p, plot.render()));
            }
            write_all(&artifacts)?;
            println!("mass on grid = {:.6}, max residual = {:.2e}", sol.mass, sol.max_residual);
        }
        TheoryCurve::Bulk(a) => {
            let mut t = Table::new(&["index", "lambda"]);
            for i in 1..=a.d {
                t.push(vec![i.to_string(), fmt_num(bulk_prediction(i, a.d, a.c, a.alpha)?)]);
            }
            write_all(&[t.artifact(&a.out)?])?;
            println!("{} predicted bulk eigenvalues written to {}", a.d, a.out.display());
        }
        TheoryCurve::Laplace(a) => {
            require(a.d <= DENSE_TOEPLITZ_MAX_D, "dimension too large for the dense SVD")?;
            let dense = toeplitz_singular_values(a.d, a.c, a.alpha)?;
            let series = laplace_singular_values(a.d, a.c, a.alpha, LaplaceMode::FullSeries)?;
            let simple = laplace_singular_values(a.d, a.c, a.alpha, LaplaceMode::Simplified).ok();
            let mut t = Table::new(&["s", "dense_svd", "laplace_series", "power_law_plus_one", "rel_err"]);
            let mut max_rel = 0.0f64;
            for s in 0..a.d {
                let rel = (series[s] - dense[s]).abs() / dense[s].abs();
                max_rel = max_rel.max(rel);
                t.push(vec![
                    (s + 1).to_string(),
                    fmt_num(dense[s]),
                    fmt_num(series[s]),
                    fmt_opt(simple.as_ref().map(|v| v[s])),
                    fmt_num(rel),
                ]);
            }
            let mut artifacts = vec![t.artifact(&a.out)?];
            if let Some(p) = &a.svg {
                let idx: Vec<f64> = (1..=a.d).map(|i| i as f64).collect();
                let mut plot = Plot::new("Toeplitz singular values", "s", "singular value")
                    .log_log()
                    .with(Series::from_xy("dense SVD", &idx, &dense, Mark::Points))
                    .with(Series::from_xy("Laplace series", &idx, &series, Mark::Line));
                if let Some(v) = &simple {
                    plot = plot.with(Series::from_xy("1 + power law", &idx, v, Mark::Dashed));
                }
                artifacts.push(Artifact::new(p, plot.render()));
            }
            write_all(&artifacts)?;
            println!("max relative deviation of the Laplace series from the dense SVD: {max_rel:.3e}");
        }
    }
    Ok(())
}

pub fn sweep_table(sw: &ConvergenceSweep) -> CliResult<Table> {
    let traj = entropy_trajectory(sw)?;
    let mut t = Table::new(&[
        "m",
        "delta",
        "delta_se",
        "alpha_distance",
        "alpha_distance_se",
        "epsilon",
        "epsilon_se",
        "entropy",
        "entropy_normalized",
        "r_mean",
        "alpha",
        "skipped",
    ]);
    for (i, p) in sw.points.iter().enumerate() {
        t.push(vec![
            p.m.to_string(),
            fmt_opt(p.delta.map(|e| e.mean)),
            fmt_opt(p.delta.map(|e| e.stderr)),
            fmt_opt(p.alpha_distance.map(|e| e.mean)),
            fmt_opt(p.alpha_distance.map(|e| e.stderr)),
            fmt_num(p.epsilon.mean),
            fmt_num(p.epsilon.stderr),
            fmt_opt(p.entropy.map(|e| e.mean)),
            fmt_opt(traj.normalized_entropy[i]),
            fmt_opt(p.r_mean.map(|e| e.mean)),
            fmt_opt(p.alpha.map(|e| e.mean)),
            p.skipped.to_string(),
        ]);
    }
    Ok(t)
}

pub fn sweep_plot(title: &str, sw: &ConvergenceSweep) -> Plot {
    let pts = |m: Metric| sw.series(m).into_iter().filter(|p| p.1 > 0.0).map(|(m, v)| (m as f64, v)).collect();
    Plot::new(title, "M", "distance")
        .log_log()
        .with(Series::new("delta", pts(Metric::Delta), Mark::Line))
        .with(Series::new("alpha distance", pts(Metric::AlphaDistance), Mark::Line))
        .with(Series::new("epsilon", pts(Metric::Epsilon), Mark::Line))
}

pub fn sweep_results(sw: &ConvergenceSweep, plateau: &PlateauConfig) -> CliResult<serde_json::Value> {
    let mcrit = |m: Metric| -> CliResult<serde_json::Value> {
        Ok(match locate_mcrit(sw, m, plateau) {
            Ok(v) => serde_json::to_value(v)?,
            Err(e) => json!({ "status": "undetermined", "reason": e.to_string() }),
        })
    };
    let eps: Vec<(usize, f64)> = sw.series(Metric::Epsilon).into_iter().filter(|p| p.1 > 0.0).collect();
    let slope = log_log_slope(&eps).ok();
    Ok(json!({
        "reference": sw.reference,
        "m_values": sw.m_values(),
        "seeds_per_point": sw.seeds_per_point,
        "mcrit": {
            "delta": mcrit(Metric::Delta)?,
            "alpha_distance": mcrit(Metric::AlphaDistance)?,
            "epsilon": mcrit(Metric::Epsilon)?,
        },
        "epsilon_log_log_slope": slope,
        "entropy_trajectory": entropy_trajectory(sw)?,
        "points": sw.points,
    }))
}

fn converge(a: &ConvergeArgs) -> CliResult<()> {
    require(a.seeds >= 1, "--seeds must be at least 1")?;
    require(a.plateau_tail >= 1, "--plateau-tail must be at least 1")?;
    require(a.plateau_tolerance > 0.0, "--plateau-tolerance must be positive")?;
    let grid: MGrid = a.m_grid.parse().map_err(|e| CliError::Usage(format!("--m-grid: {e}")))?;
    let start = Instant::now();
    let x = load_input(&a.input)?;
    if let Some(&m) = grid.0.iter().find(|&&m| m > x.m()) {
        return Err(CliError::Usage(format!("grid value {m} exceeds the {} available samples", x.m())));
    }
    let cfg = SweepConfig { bulk: bulk_config(&a.bulk), ..SweepConfig::default() };
    let sw = sweep(&x, &grid.0, a.seeds, RngSeed::new(a.seed, 0), &cfg)?;
    let plateau = PlateauConfig { tail_points: a.plateau_tail, tolerance: a.plateau_tolerance, ..PlateauConfig::default() };
    let results = sweep_results(&sw, &plateau)?;

    let mut artifacts = vec![sweep_table(&sw)?.artifact(&a.out)?];
    if let Some(p) = &a.svg {
        artifacts.push(Artifact::new(p, sweep_plot("Convergence with sample size", &sw).render()));
    }
    let mut report = DiagnosticsReport::new("converge", a)?.with_input(&x).with_seed(a.seed);
    report.results = results.clone();
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    if let Some(p) = &a.report {
        artifacts.push(Artifact::json(p, &report)?);
    }
    finish(&artifacts, Some(&report))?;

    println!("reference: M = {}, <r> = {:.4}, alpha = {:.4}", sw.reference.m_full, sw.reference.r_full, sw.reference.alpha_full);
    for key in ["delta", "alpha_distance", "epsilon"] {
        let m = &results["mcrit"][key];
        match m["m"].as_u64() {
            Some(v) => println!("M_crit({key}) = {v}"),
            None => println!("M_crit({key}): not converged on this grid"),
        }
    }
    if let Some(s) = results["epsilon_log_log_slope"].as_f64() {
        println!("epsilon log-log slope = {s:.3}");
    }
    Ok(())
}

pub struct TsRun {
    pub problem: TeacherStudent,
    pub pair: TrajectoryPair,
    pub gen_replica_mean: Vec<f64>,
    pub gen_haar: Vec<f64>,
}

pub fn run_teacher_student(cfg: TSConfig, seeds: usize, points: usize, target: GenTarget) -> CliResult<TsRun> {
    let problem = TeacherStudent::new(cfg)?;
    let record = record_schedule(problem.config().steps, points);
    let pair = trajectory_pair(&problem, &record, Projections::Exact, &target)?;
    let deltas: Vec<Vec<f64>> = (0..seeds as u64).map(|k| problem.replica_delta0(k)).collect();
    let runs = simulate_ensemble(&problem, &deltas, std::slice::from_ref(&target), &record)?;
    let gen_replica_mean: Vec<f64> =
        (0..record.len()).map(|i| runs.iter().map(|r| r.gen[i]).sum::<f64>() / runs.len() as f64).collect();
    let gen_haar = analytic_gen_haar(&problem, &pair.times);
    Ok(TsRun { problem, pair, gen_replica_mean, gen_haar })
}

pub fn max_rel_error(sim: &[f64], reference: &[f64]) -> f64 {
    sim.iter().zip(reference).map(|(s, r)| (s - r).abs() / r.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

pub fn ts_table(run: &TsRun) -> Table {
    let p = &run.pair;
    let mut t = Table::new(&[
        "step",
        "train_sim",
        "gen_sim",
        "train_analytic",
        "gen_analytic",
        "gen_replica_mean",
        "gen_haar",
    ]);
    for i in 0..p.times.len() {
        t.push(vec![
            (p.times[i] as usize).to_string(),
            fmt_num(p.loss_train_sim[i]),
            fmt_num(p.loss_gen_sim[i]),
            fmt_num(p.loss_train_analytic[i]),
            fmt_num(p.loss_gen_analytic[i]),
            fmt_num(run.gen_replica_mean[i]),
            fmt_num(run.gen_haar[i]),
        ]);
    }
    t
}

pub fn ts_plot(title: &str, run: &TsRun) -> Plot {
    let p = &run.pair;
    let pos = |y: &[f64]| -> Vec<(f64, f64)> {
        p.times.iter().zip(y).filter(|(t, v)| **t > 0.0 && **v > 0.0).map(|(t, v)| (*t, *v)).collect()
    };
    Plot::new(title, "step", "loss")
        .log_log()
        .with(Series::new("train (GD)", pos(&p.loss_train_sim), Mark::Points))
        .with(Series::new("train (flow)", pos(&p.loss_train_analytic), Mark::Line))
        .with(Series::new("gen (GD)", pos(&p.loss_gen_sim), Mark::Points))
        .with(Series::new("gen (flow)", pos(&p.loss_gen_analytic), Mark::Line))
        .with(Series::new("gen (replica mean)", pos(&run.gen_replica_mean), Mark::Points))
        .with(Series::new("gen (rotation average)", pos(&run.gen_haar), Mark::Dashed))
}

pub fn ts_config(a: &TsArgs) -> CliResult<TSConfig> {
    let raw = covariance(a.d_in, &a.cov)?;
    let cov = if a.raw_scale { raw } else { standardized(&raw)? };
    Ok(TSConfig { d_in: a.d_in, n_train: a.n_train, eta: a.eta, steps: a.steps, cov, seed: RngSeed::new(a.seed, 0) })
}

fn ts(a: &TsArgs) -> CliResult<()> {
    require(a.seeds >= 1, "--seeds must be at least 1")?;
    require(a.points >= 2, "--points must be at least 2")?;
    let start = Instant::now();
    let cfg = ts_config(a)?;
    let target = match a.gen_target {
        GenTargetArg::Population => GenTarget::Population,
        GenTargetArg::Sample => GenTarget::Sample { n_gen: a.n_gen },
    };
    let run = run_teacher_student(cfg, a.seeds, a.points, target)?;
    let p = &run.pair;
    let err_train = max_rel_error(&p.loss_train_sim, &p.loss_train_analytic);
    let err_gen = max_rel_error(&p.loss_gen_sim, &p.loss_gen_analytic);

    let mut artifacts = vec![ts_table(&run).artifact(&a.out)?];
    if let Some(path) = &a.svg {
        artifacts.push(Artifact::new(path, ts_plot("Teacher-student losses", &run).render()));
    }
    let mut report = DiagnosticsReport::new("ts", a)?.with_seed(a.seed);
    report.results = json!({
        "ratio": run.problem.config().ratio(),
        "stability_bound": run.problem.stability_bound(),
        "lambda_max_train": run.problem.train_eigenvalues().last(),
        "max_rel_error_train": err_train,
        "max_rel_error_gen": err_gen,
        "replicas": a.seeds,
    });
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &a.report {
        artifacts.push(Artifact::json(path, &report)?);
    }
    finish(&artifacts, Some(&report))?;

    println!("d/n = {:.4}, eta = {} (stability bound {:.4e})", run.problem.config().ratio(), a.eta, run.problem.stability_bound());
    println!("max relative error against the flow solution: train {err_train:.3e}, gen {err_gen:.3e}");
    Ok(())
}
