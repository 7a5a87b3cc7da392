//! End-to-end figure pipelines at desk scale.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use spectralens_core::convergence::{entropy_trajectory, sweep, ConvergenceSweep, MGrid, PlateauConfig, SweepConfig};
use spectralens_core::datamatrix::{load_idx, preprocess, DataMatrix};
use spectralens_core::numeric::{linspace, logspace};
use spectralens_core::rmtstats::{
    goe_r_density, goe_sff, level_spacing, poisson_r_density, r_statistics, unfold, SffWindow, UnfoldConfig,
};
use spectralens_core::spectra::{
    fit_power_law, histogram, kl_divergence, spectral_entropy, BulkConfig, BulkRange, DensityHistogram,
    HistogramNormalization, Spectrum,
};
use spectralens_core::synth::{corrupt_with_noise, sample_gaussian, PopulationCovariance};
use spectralens_core::teacher_student::{standardized, GenTarget, TSConfig};
use spectralens_core::theory::{goe_wigner_sample, solve_stieltjes, StieltjesOptions};
use spectralens_core::{Error, RngSeed};

use crate::args::{FigureArgs, FigureName};
use crate::commands::{
    analyze, ensemble_sff, max_rel_error, run_teacher_student, scree_plot, sff_table, spacing_plot, spacing_table,
    sweep_plot, sweep_results, sweep_table, ts_plot, ts_table,
};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, fmt_num, write_all, Artifact, Table};
use crate::report::{DiagnosticsReport, KlComparison, RmtSummary, SffSummary, SpectrumSummary};
use crate::svg::{Mark, Plot, Series};

pub const FMNIST_ENV: &str = "SPECTRALENS_FMNIST";

const TAG_UGD: u64 = 1;
const TAG_CGD: u64 = 2;
const TAG_CORRUPT: u64 = 3;
const TAG_SWEEP: u64 = 4;
const TAG_SFF: u64 = 5;
const TAG_GOE: u64 = 6;

/// Problem sizes of one pipeline run.
#[derive(Debug, Clone, Copy, serde::Serialize)]
struct Scale {
    d: usize,
    m: usize,
    seeds: usize,
    grid_points: usize,
    members: usize,
}

fn scale(name: FigureName, quick: bool) -> Scale {
    let s = |d, m, seeds, grid_points, members| Scale { d, m, seeds, grid_points, members };
    match (name, quick) {
        (FigureName::Fig1Scree, false) => s(784, 60000, 1, 0, 0),
        (FigureName::Fig1Scree, true) => s(400, 6000, 1, 0, 0),
        (FigureName::Fig2Density, false) => s(784, 50000, 1, 0, 0),
        (FigureName::Fig2Density, true) => s(400, 6000, 1, 0, 0),
        (FigureName::Fig3Goe, false) => s(1000, 50000, 1, 0, 10),
        (FigureName::Fig3Goe, true) => s(600, 12000, 1, 0, 4),
        (FigureName::Fig4Convergence, false) => s(784, 60000, 3, 16, 0),
        (FigureName::Fig4Convergence, true) => s(784, 6000, 2, 8, 0),
        (FigureName::Fig5Entropy, false) => s(784, 50000, 3, 16, 0),
        (FigureName::Fig5Entropy, true) => s(784, 6000, 2, 8, 0),
        (FigureName::AppBGenmp, false) => s(1000, 2632, 8, 0, 0),
        (FigureName::AppBGenmp, true) => s(400, 1053, 2, 0, 0),
        (FigureName::AppDTeacher, false) => s(1000, 4000, 20, 0, 0),
        (FigureName::AppDTeacher, true) => s(300, 1200, 5, 0, 0),
    }
}

/// Rough single-core wall time.
fn budget(name: FigureName, quick: bool) -> &'static str {
    match (name, quick) {
        (FigureName::Fig1Scree, false) => "about 30 seconds",
        (FigureName::Fig2Density, false) => "about 15 seconds",
        (FigureName::Fig3Goe, false) => "about 15 seconds",
        (FigureName::Fig4Convergence, false) => "about 20 seconds",
        (FigureName::Fig5Entropy, false) => "about 30 seconds",
        (FigureName::AppBGenmp, false) => "about 5 seconds",
        (FigureName::AppDTeacher, false) => "about 40 seconds",
        (_, true) => "under 10 seconds",
    }
}

struct Ctx {
    out_dir: PathBuf,
    slug: &'static str,
    seed: RngSeed,
    scale: Scale,
    fmnist: Option<DataMatrix>,
}

impl Ctx {
    fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}{suffix}", self.slug))
    }

    fn cgd(&self, d: usize, m: usize, alpha: f64, tag: u64) -> CliResult<DataMatrix> {
        let cov = PopulationCovariance::cgd(d, 1.0, alpha)?;
        Ok(preprocess(&sample_gaussian(&cov, m, self.seed.derive(tag))?, false))
    }

    fn ugd(&self, d: usize, m: usize) -> CliResult<DataMatrix> {
        let cov = PopulationCovariance::identity(d, 1.0)?;
        Ok(preprocess(&sample_gaussian(&cov, m, self.seed.derive(TAG_UGD))?, false))
    }
}

fn resolve_fmnist(a: &FigureArgs) -> CliResult<Option<DataMatrix>> {
    if a.synthetic_only {
        return Ok(None);
    }
    let path = match &a.fmnist {
        Some(p) => p.clone(),
        None => match std::env::var_os(FMNIST_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => return Ok(None),
        },
    };
    load_fmnist(&path).map(Some)
}

/// Centered and standardized Fashion-MNIST pixels.
pub fn load_fmnist(path: &Path) -> CliResult<DataMatrix> {
    let raw = load_idx(path)?;
    Ok(preprocess(&raw, true))
}

pub fn run(a: &FigureArgs) -> CliResult<()> {
    let fmnist = resolve_fmnist(a)?;
    let slug = a.name.slug();
    let sc = scale(a.name, a.quick);
    println!("{slug}: estimated runtime {} ({} mode)", budget(a.name, a.quick), if a.quick { "quick" } else { "desk-scale" });
    ensure_dir(&a.out_dir)?;
    let start = Instant::now();
    let ctx = Ctx { out_dir: a.out_dir.clone(), slug, seed: RngSeed::new(a.seed, 0), scale: sc, fmnist };
    let mut report = DiagnosticsReport::new("figure", a)?.with_seed(a.seed);
    report.notes.push(format!("scale: d = {}, M = {}", sc.d, sc.m));
    if ctx.fmnist.is_none() {
        report.notes.push("no Fashion-MNIST file; synthetic data only".into());
    }
    let mut artifacts = match a.name {
        FigureName::Fig1Scree => fig1(&ctx, &mut report)?,
        FigureName::Fig2Density => fig2(&ctx, &mut report)?,
        FigureName::Fig3Goe => fig3(&ctx, &mut report)?,
        FigureName::Fig4Convergence => fig4(&ctx, &mut report)?,
        FigureName::Fig5Entropy => fig5(&ctx, &mut report)?,
        FigureName::AppBGenmp => app_b(&ctx, &mut report)?,
        FigureName::AppDTeacher => app_d(&ctx, &mut report)?,
    };
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    report.check_finite()?;
    artifacts.push(Artifact::json(ctx.path(".json"), &report)?);
    write_all(&artifacts)?;
    println!("{} files written to {} in {:.1} s", artifacts.len(), a.out_dir.display(), report.wall_time_seconds);
    Ok(())
}

fn fit_row(t: &mut Table, label: &str, s: &Spectrum) -> CliResult<SpectrumSummary> {
    let sm = SpectrumSummary::of(s)?;
    t.push(vec![
        label.to_string(),
        fmt_num(sm.alpha),
        fmt_num(sm.amplitude),
        fmt_num(sm.r_squared),
        sm.bulk_range.start.to_string(),
        sm.bulk_range.end.to_string(),
        fmt_num(sm.entropy),
    ]);
    Ok(sm)
}

fn fit_table() -> Table {
    Table::new(&["dataset", "alpha", "amplitude", "r_squared", "bulk_start", "bulk_end", "entropy"])
}

fn scree_table(spectra: &[(&str, &Spectrum)]) -> Table {
    let mut t = Table::new(&["dataset", "index", "eigenvalue"]);
    for (label, s) in spectra {
        for (i, v) in s.eigenvalues().iter().enumerate() {
            t.push(vec![label.to_string(), (i + 1).to_string(), fmt_num(*v)]);
        }
    }
    t
}

fn fig1(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, .. } = ctx.scale;
    let bulk = BulkConfig::default();
    let cgd = ctx.cgd(d, m, 0.25, TAG_CGD)?;
    let mut named: Vec<(String, Spectrum)> = vec![
        ("ugd".into(), analyze(&ctx.ugd(d, m)?, &bulk)?),
        ("cgd-alpha-0.25".into(), analyze(&cgd, &bulk)?),
    ];
    if let Some(f) = &ctx.fmnist {
        named.push(("fmnist".into(), analyze(f, &bulk)?));
    }
    let refs: Vec<(&str, &Spectrum)> = named.iter().map(|(l, s)| (l.as_str(), s)).collect();
    let mut fits = fit_table();
    for (l, s) in &refs {
        fit_row(&mut fits, l, s)?;
    }

    let (base, base_label) = match &ctx.fmnist {
        Some(f) => (f, "fmnist"),
        None => (&cgd, "cgd-alpha-0.25"),
    };
    let mut corr = Table::new(&["fraction", "alpha", "r_squared", "bulk_end"]);
    let mut alphas = Vec::new();
    for (k, f) in [0.0, 0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
        let noisy = corrupt_with_noise(base, f, ctx.seed.derive(TAG_CORRUPT).derive(k as u64))?;
        let s = analyze(&preprocess(&noisy, false), &bulk)?;
        let fit = fit_power_law(&s)?;
        alphas.push((f, fit.alpha));
        corr.push_nums(&[f, fit.alpha, fit.r_squared, fit.fit_range.end as f64]);
    }
    report.results = json!({ "corruption_base": base_label, "corruption_alpha": alphas });
    report.spectrum = Some(SpectrumSummary::of(&named[1].1)?);
    for (f, a) in &alphas {
        println!("noise fraction {f:.2}: alpha = {a:.3}");
    }

    let corr_plot = Plot::new("Power-law exponent under noise", "noise fraction", "alpha").with(Series::new(
        base_label,
        alphas.clone(),
        Mark::Points,
    ));
    Ok(vec![
        scree_table(&refs).artifact(ctx.path("-scree.csv"))?,
        fits.artifact(ctx.path("-fits.csv"))?,
        corr.artifact(ctx.path("-corruption.csv"))?,
        Artifact::new(ctx.path("-scree.svg"), scree_plot("Scree plot", &refs).render()),
        Artifact::new(ctx.path("-corruption.svg"), corr_plot.render()),
    ])
}

fn fig2(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, .. } = ctx.scale;
    let bulk = BulkConfig::default();
    let mut named: Vec<(String, Spectrum)> = vec![("ugd".into(), analyze(&ctx.ugd(d, m)?, &bulk)?)];
    for (k, alpha) in [0.0, 0.25, 0.5].into_iter().enumerate() {
        let x = ctx.cgd(d, m, alpha, TAG_CGD + 16 * k as u64)?;
        named.push((format!("cgd-alpha-{alpha}"), analyze(&x, &bulk)?));
    }
    if let Some(f) = &ctx.fmnist {
        named.push(("fmnist".into(), analyze(f, &bulk)?));
    }
    let refs: Vec<(&str, &Spectrum)> = named.iter().map(|(l, s)| (l.as_str(), s)).collect();

    let bins = 64;
    let mut fits = fit_table();
    let mut dens = Table::new(&["dataset", "bin_lo", "bin_hi", "density"]);
    let mut plot = Plot::new("Max-scaled bulk density", "lambda / lambda_max", "density").log_y();
    let mut hists = Vec::new();
    for (label, s) in &refs {
        let sm = fit_row(&mut fits, label, s)?;
        println!("{label}: alpha = {:.3}, bulk = [{}, {}]", sm.alpha, sm.bulk_range.start, sm.bulk_range.end);
        let h = histogram(s, bins, HistogramNormalization::MaxScaled)?;
        for (w, v) in h.bin_edges.windows(2).zip(h.densities()) {
            dens.push(vec![label.to_string(), fmt_num(w[0]), fmt_num(w[1]), fmt_num(v)]);
        }
        let pts = h.centers().into_iter().zip(h.densities()).filter(|p| p.1 > 0.0).collect();
        plot = plot.with(Series::new(*label, pts, Mark::Line));
        hists.push((label.to_string(), h));
    }
    for (label, h) in &hists[1..] {
        report.theory_kl.push(KlComparison { label: format!("{label} vs ugd"), bins, kl: kl_divergence(h, &hists[0].1)? });
    }
    report.spectrum = Some(SpectrumSummary::of(&named[2].1)?);
    Ok(vec![
        dens.artifact(ctx.path(".csv"))?,
        fits.artifact(ctx.path("-fits.csv"))?,
        Artifact::new(ctx.path(".svg"), plot.render()),
        Artifact::new(ctx.path("-scree.svg"), scree_plot("Bulk power laws", &refs).render()),
    ])
}

fn r_table(edges: &[f64], masses: &[f64]) -> CliResult<Table> {
    let mut t = Table::new(&["r_lo", "r_hi", "density", "goe", "poisson"]);
    for (w, mass) in edges.windows(2).zip(masses) {
        let c = 0.5 * (w[0] + w[1]);
        t.push_nums(&[w[0], w[1], mass / (w[1] - w[0]), goe_r_density(c)?, poisson_r_density(c)?]);
    }
    Ok(t)
}

fn fig3(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, members, .. } = ctx.scale;
    let bulk = BulkConfig::default();
    let x = ctx.cgd(d, m, 0.25, TAG_CGD)?;
    let s = analyze(&x, &bulk)?;
    let r = r_statistics(&s)?;
    let mut rmt = RmtSummary::of(&s)?;
    let u = unfold(&s, &UnfoldConfig::default())?;
    let spacing = level_spacing(&u, 40)?;
    let curve = ensemble_sff(&x, &u, members, &bulk, SffWindow::default(), ctx.seed.derive(TAG_SFF))?;
    rmt.sff = Some(SffSummary::of(&curve));
    let goe = r_statistics(&goe_wigner_sample(d, ctx.seed.derive(TAG_GOE))?.with_bulk_range(BulkRange { start: 1, end: d })?)?;

    let mut extra = json!({ "goe_reference_mean_r": goe.mean });
    if let Some(f) = &ctx.fmnist {
        let fs = analyze(f, &bulk)?;
        let fr = RmtSummary::of(&fs)?;
        println!("fmnist: <r> = {:.4}", fr.mean_r);
        extra["fmnist"] = serde_json::to_value(fr)?;
    }
    report.results = extra;
    report.spectrum = Some(SpectrumSummary::of(&s)?);
    report.rmt = Some(rmt.clone());
    println!("cgd: <r> = {:.4} (GOE 0.5359), KS to Wigner = {:.4}", rmt.mean_r, rmt.ks_wigner);
    println!("goe reference: <r> = {:.4}", goe.mean);

    let rs = linspace(0.0, 1.0, 101);
    let r_plot = Plot::new("Spacing ratios", "r", "p(r)")
        .with(Series::histogram("cgd", &r.histogram.bin_edges, &r.histogram.densities()))
        .with(Series::from_xy("GOE", &rs, &rs.iter().map(|&v| goe_r_density(v).unwrap_or(0.0)).collect::<Vec<_>>(), Mark::Line))
        .with(Series::from_xy(
            "Poisson",
            &rs,
            &rs.iter().map(|&v| poisson_r_density(v).unwrap_or(0.0)).collect::<Vec<_>>(),
            Mark::Dashed,
        ));
    let goe_curve: Vec<f64> = curve.taus.iter().map(|&t| goe_sff(t)).collect::<Result<_, Error>>()?;
    let sff_plot = Plot::new("Spectral form factor", "tau", "K(tau)")
        .log_log()
        .with(Series::from_xy("cgd", &curve.taus, &curve.values, Mark::Points))
        .with(Series::from_xy("GOE", &curve.taus, &goe_curve, Mark::Line));
    Ok(vec![
        r_table(&r.histogram.bin_edges, &r.histogram.masses)?.artifact(ctx.path("-r.csv"))?,
        spacing_table(&spacing.histogram.bin_edges, &spacing.histogram.masses).artifact(ctx.path("-spacing.csv"))?,
        sff_table(&curve)?.artifact(ctx.path("-sff.csv"))?,
        Artifact::new(ctx.path("-r.svg"), r_plot.render()),
        Artifact::new(
            ctx.path("-spacing.svg"),
            spacing_plot("Unfolded level spacings", &spacing.histogram.bin_edges, &spacing.histogram.masses).render(),
        ),
        Artifact::new(ctx.path("-sff.svg"), sff_plot.render()),
    ])
}

/// CGD pool of `m` samples swept up to `m / 2`, plus Fashion-MNIST if present.
fn sweeps(ctx: &Ctx) -> CliResult<Vec<(String, ConvergenceSweep)>> {
    let Scale { d, m, seeds, grid_points, .. } = ctx.scale;
    let cfg = SweepConfig::default();
    let mut out = Vec::new();
    let pool = ctx.cgd(d, m, 0.25, TAG_CGD)?;
    let grid = MGrid::log(100, m / 2, grid_points)?;
    out.push(("cgd".to_string(), sweep(&pool, &grid.0, seeds, ctx.seed.derive(TAG_SWEEP), &cfg)?));
    if let Some(f) = &ctx.fmnist {
        let grid = MGrid::log(100, f.m() / 2, grid_points)?;
        out.push(("fmnist".to_string(), sweep(f, &grid.0, seeds, ctx.seed.derive(TAG_SWEEP), &cfg)?));
    }
    Ok(out)
}

fn fig4(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let mut artifacts = Vec::new();
    let mut results = serde_json::Map::new();
    for (label, sw) in sweeps(ctx)? {
        let res = sweep_results(&sw, &PlateauConfig::default())?;
        println!(
            "{label}: M_crit(delta) = {}, M_crit(alpha) = {}, epsilon slope = {}",
            res["mcrit"]["delta"]["m"],
            res["mcrit"]["alpha_distance"]["m"],
            res["epsilon_log_log_slope"]
        );
        artifacts.push(sweep_table(&sw)?.artifact(ctx.path(&format!("-{label}.csv")))?);
        artifacts.push(Artifact::new(
            ctx.path(&format!("-{label}.svg")),
            sweep_plot(&format!("Convergence ({label})"), &sw).render(),
        ));
        results.insert(label, res);
    }
    report.results = serde_json::Value::Object(results);
    Ok(artifacts)
}

/// Entropy over a common index range `[start, end]`.
fn matched_entropy(s: &Spectrum, start: usize, end: usize) -> CliResult<f64> {
    let s = s.clone().with_bulk_range(BulkRange { start, end })?;
    Ok(spectral_entropy(&s)?)
}

fn fig5(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, .. } = ctx.scale;
    let bulk = BulkConfig::default();
    let mut named = vec![("ugd".to_string(), analyze(&ctx.ugd(d, m)?, &bulk)?)];
    for (k, alpha) in [0.25, 0.5].into_iter().enumerate() {
        let x = ctx.cgd(d, m, alpha, TAG_CGD + 16 * k as u64)?;
        named.push((format!("cgd-alpha-{alpha}"), analyze(&x, &bulk)?));
    }
    let start = bulk.i_start;
    let end = named.iter().filter_map(|(_, s)| s.bulk_range()).map(|r| r.end).min().unwrap_or(start);
    if end <= start {
        return Err(CliError::Core(Error::InsufficientSpectrum("no common bulk range for the entropy comparison".into())));
    }
    let mut order = Table::new(&["dataset", "bulk_end", "entropy_own_bulk", "entropy_matched"]);
    let mut ordering = Vec::new();
    for (label, s) in &named {
        let own = spectral_entropy(s)?;
        let matched = matched_entropy(s, start, end)?;
        order.push(vec![label.clone(), s.bulk_range().map_or(0, |r| r.end).to_string(), fmt_num(own), fmt_num(matched)]);
        println!("{label}: H = {own:.4}, H on [{start}, {end}] = {matched:.4}");
        ordering.push(json!({ "dataset": label, "entropy": own, "entropy_matched": matched }));
    }

    let mut artifacts = vec![order.artifact(ctx.path("-ordering.csv"))?];
    let mut trajectories = serde_json::Map::new();
    for (label, sw) in sweeps(ctx)? {
        let traj = entropy_trajectory(&sw)?;
        let mut t = Table::new(&["m", "entropy_ratio", "delta_ratio", "alpha_distance_ratio"]);
        let mut plot = Plot::new(format!("Normalized entropy ({label})"), "M", "ratio").log_x();
        let mut series: [Vec<(f64, f64)>; 3] = Default::default();
        for (i, &mv) in traj.m_values.iter().enumerate() {
            let vals = [traj.normalized_entropy[i], traj.normalized_delta[i], traj.normalized_alpha_distance[i]];
            t.push(
                std::iter::once(mv.to_string())
                    .chain(vals.iter().map(|v| v.map(fmt_num).unwrap_or_default()))
                    .collect(),
            );
            for (k, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    series[k].push((mv as f64, *v));
                }
            }
        }
        let [h, dl, al] = series;
        plot = plot
            .with(Series::new("H_M / H", h, Mark::Line))
            .with(Series::new("delta / delta(M_max)", dl, Mark::Dashed))
            .with(Series::new("Delta / Delta(M_max)", al, Mark::Dashed));
        artifacts.push(t.artifact(ctx.path(&format!("-{label}.csv")))?);
        artifacts.push(Artifact::new(ctx.path(&format!("-{label}.svg")), plot.render()));
        trajectories.insert(label, serde_json::to_value(traj)?);
    }
    report.entropy = Some(spectral_entropy(&named[1].1)?);
    report.results = json!({ "common_range": [start, end], "ordering": ordering, "trajectories": trajectories });
    Ok(artifacts)
}

/// Empirical log-λ histogram of pooled eigenvalues against solver bin masses.
pub struct GenMpComparison {
    pub edges: Vec<f64>,
    pub empirical: DensityHistogram,
    pub theory: DensityHistogram,
    pub mass: f64,
    pub kl: f64,
    pub lambda: Vec<f64>,
    pub density: Vec<f64>,
}

pub fn genmp_comparison(
    cov: &PopulationCovariance,
    m: usize,
    pooled: usize,
    bins: usize,
    seed: RngSeed,
) -> CliResult<GenMpComparison> {
    let d = cov.d();
    let mut eigs = Vec::with_capacity(d * pooled);
    for k in 0..pooled {
        let x = preprocess(&sample_gaussian(cov, m, seed.derive(k as u64))?, false);
        eigs.extend(spectralens_core::spectra::spectrum_of(&x)?.eigenvalues().iter().copied().filter(|v| *v > 0.0));
    }
    let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().copied().fold(0.0, f64::max);
    let edges: Vec<f64> = logspace(lo * 0.999, hi * 1.001, bins + 1);
    let empirical = DensityHistogram::from_samples(&eigs, edges.clone(), HistogramNormalization::Raw)?;
    let grid = logspace(lo * 0.5, hi * 2.0, 6000);
    let sol = solve_stieltjes(d as f64 / m as f64, cov, &grid, &StieltjesOptions::default())?;
    let masses = sol.bin_masses(&edges)?;
    let total: f64 = masses.iter().sum();
    let theory = DensityHistogram {
        bin_edges: edges.clone(),
        masses: masses.iter().map(|q| q / total).collect(),
        normalization: HistogramNormalization::Raw,
        count: 0,
    };
    let kl = kl_divergence(&empirical, &theory)?;
    Ok(GenMpComparison { edges, empirical, theory, mass: sol.mass, kl, lambda: sol.lambda, density: sol.density })
}

fn app_b(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, seeds, .. } = ctx.scale;
    let bins = 64;
    let cov = PopulationCovariance::cgd(d, 1.14, 0.25)?;
    let cmp = genmp_comparison(&cov, m, seeds, bins, ctx.seed.derive(TAG_CGD))?;
    println!("gamma = {:.3}, solver mass = {:.4}, KL(empirical || theory) = {:.4} at {bins} bins", d as f64 / m as f64, cmp.mass, cmp.kl);
    report.theory_kl.push(KlComparison { label: "pooled cgd vs solver".into(), bins, kl: cmp.kl });
    report.results = json!({ "gamma": d as f64 / m as f64, "c": 1.14, "alpha": 0.25, "pooled_samples": seeds, "solver_mass": cmp.mass });

    let mut t = Table::new(&["lambda_lo", "lambda_hi", "empirical_mass", "theory_mass"]);
    for ((w, p), q) in cmp.edges.windows(2).zip(&cmp.empirical.masses).zip(&cmp.theory.masses) {
        t.push_nums(&[w[0], w[1], *p, *q]);
    }
    let mut curve = Table::new(&["lambda", "density"]);
    for (l, r) in cmp.lambda.iter().zip(&cmp.density) {
        curve.push_nums(&[*l, *r]);
    }
    // Densities per unit ln λ, so the histogram and curve share an axis.
    let log_widths: Vec<f64> = cmp.edges.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let emp: Vec<f64> = cmp.empirical.masses.iter().zip(&log_widths).map(|(p, w)| p / w).collect();
    let th: Vec<(f64, f64)> = cmp
        .lambda
        .iter()
        .zip(&cmp.density)
        .filter(|(l, r)| **l >= cmp.edges[0] && **l <= cmp.edges[bins] && **r > 0.0)
        .map(|(l, r)| (*l, l * r))
        .collect();
    let plot = Plot::new("Generalized MP density", "lambda", "density in ln lambda")
        .log_x()
        .with(Series::histogram("pooled cgd", &cmp.edges, &emp))
        .with(Series::new("solver", th, Mark::Line));
    Ok(vec![
        t.artifact(ctx.path(".csv"))?,
        curve.artifact(ctx.path("-density.csv"))?,
        Artifact::new(ctx.path(".svg"), plot.render()),
    ])
}

fn app_d(ctx: &Ctx, report: &mut DiagnosticsReport) -> CliResult<Vec<Artifact>> {
    let Scale { d, m, seeds, .. } = ctx.scale;
    let steps = if ctx.scale.d >= 1000 { 20000 } else { 5000 };
    let cov = standardized(&PopulationCovariance::cgd(d, 1.0, 0.25)?)?;
    let cfg = TSConfig { d_in: d, n_train: m, eta: 1e-3, steps, cov, seed: ctx.seed };
    let run = run_teacher_student(cfg, seeds, 120, GenTarget::Population)?;
    let p = &run.pair;
    let err_train = max_rel_error(&p.loss_train_sim, &p.loss_train_analytic);
    let err_gen = max_rel_error(&p.loss_gen_sim, &p.loss_gen_analytic);
    println!("d/n = {:.3}, max relative error against the flow: train {err_train:.3e}, gen {err_gen:.3e}", d as f64 / m as f64);
    report.results = json!({
        "d_in": d, "n_train": m, "eta": 1e-3, "steps": steps, "replicas": seeds,
        "max_rel_error_train": err_train, "max_rel_error_gen": err_gen,
    });
    Ok(vec![
        ts_table(&run).artifact(ctx.path(".csv"))?,
        Artifact::new(ctx.path(".svg"), ts_plot("Teacher-student losses", &run).render()),
    ])
}
