use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::dim_sweep::{fit, mean_se, SlopeFit};
use super::output::{ensure_dir, metadata, strings, write_csv, Written};
use super::plot::{emit_svg_plot, PlotSpec};
use crate::error::{Error, Result};
use crate::fields::shift_and_score;
use crate::kernels::laplace_moment_ratio;
use crate::sampling::{fmt_f64, MixtureDataset, PointCloud, Role, STREAM_DRAW_P, STREAM_QUERY};
use crate::trainer::KernelKind;
use crate::fields::Coincidence;

/// Second-moment constant linking mean shift to the kernel score at small
/// bandwidth: `c_D` for Laplace, exactly 1 for Gaussian.
pub fn expansion_constant(kernel: KernelKind, dim: usize) -> Result<f64> {
    match kernel {
        KernelKind::Gaussian => Ok(1.0),
        KernelKind::Laplace => laplace_moment_ratio(dim),
    }
}

/// Per-query `|V - c tau^2 s| / |V|` and effective sample sizes. Queries with
/// a zero mean shift are dropped and counted.
pub fn expansion_errors(
    kernel: KernelKind,
    tau: f64,
    c: f64,
    queries: &PointCloud,
    refs: &PointCloud,
    coincidence: Coincidence,
) -> Result<ExpansionErrors> {
    let k = kernel.build(tau)?;
    let refs = refs.view();
    let rows: Vec<Vec<f64>> = queries.data.outer_iter().map(|x| x.to_vec()).collect();
    let per_query: Vec<Option<(f64, f64)>> = rows
        .par_iter()
        .map(|x| {
            let f = shift_and_score(&k, x, refs, coincidence)?;
            let v2: f64 = f.mean_shift.iter().map(|v| v * v).sum();
            if v2 == 0.0 {
                return Ok(None);
            }
            let r2: f64 = f.mean_shift.iter().zip(&f.score).map(|(v, s)| (v - c * tau * tau * s).powi(2)).sum();
            Ok(Some(((r2 / v2).sqrt(), f.ess)))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<(f64, f64)> = per_query.iter().flatten().copied().collect();
    Ok(ExpansionErrors {
        errors: kept.iter().map(|e| e.0).collect(),
        ess: kept.iter().map(|e| e.1).collect(),
        skipped: per_query.len() - kept.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionErrors {
    pub errors: Vec<f64>,
    pub ess: Vec<f64>,
    pub skipped: usize,
}

impl ExpansionErrors {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_ess(&self) -> f64 {
        self.ess.iter().sum::<f64>() / self.ess.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauRow {
    pub kernel: KernelKind,
    pub dim: usize,
    pub tau: f64,
    pub c: f64,
    /// `e(tau)` averaged over repeats, with its standard error.
    pub e_mean: f64,
    pub e_se: f64,
    /// Largest single-query error over all repeats.
    pub e_max: f64,
    pub mean_ess: f64,
    pub skipped_queries: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauFit {
    pub kernel: KernelKind,
    pub dim: usize,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallTauResult {
    pub rows: Vec<TauRow>,
    pub fits: Vec<TauFit>,
    pub written: Written,
}

impl SmallTauResult {
    pub fn slope(&self, kernel: KernelKind, dim: usize) -> Option<f64> {
        self.fits.iter().find(|f| f.kernel == kernel && f.dim == dim).map(|f| f.fit.slope)
    }

    pub fn rows_for(&self, kernel: KernelKind, dim: usize) -> impl Iterator<Item = &TauRow> {
        self.rows.iter().filter(move |r| r.kernel == kernel && r.dim == dim)
    }
}

/// Relative error of the small-bandwidth expansion `V ~ c tau^2 s` along a
/// descending bandwidth list, with a log-log slope per kernel and D.
///
/// References and queries are both drawn from p; the same draws are reused
/// across the bandwidth list within a repeat.
pub fn run_smalltau(cfg: &ExperimentConfig) -> Result<SmallTauResult> {
    if cfg.experiment != ExperimentKind::SmallTau {
        return Err(Error::Config(format!("expected a small_tau config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    if cfg.taus.len() < 2 || cfg.taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("taus must be a strictly descending list of >= 2 values".into()));
    }
    let dataset: MixtureDataset = cfg.mixture_dataset()?;
    ensure_dir(&cfg.out_dir)?;

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &dim in &cfg.dims {
        let draws: Vec<(PointCloud, PointCloud)> = (0..cfg.repeats)
            .map(|i| {
                let seed = cfg.seed + i as u64;
                let p = dataset.spec(dim, Role::P, seed)?;
                Ok((p.sample(cfg.n_refs, seed, STREAM_DRAW_P)?, p.sample(cfg.n_queries, seed, STREAM_QUERY)?))
            })
            .collect::<Result<_>>()?;
        for &kernel in &cfg.kernels {
            let c = expansion_constant(kernel, dim)?;
            let mut kernel_rows = Vec::new();
            for &tau in &cfg.taus {
                let mut means = Vec::new();
                let mut ess = Vec::new();
                let mut e_max: f64 = 0.0;
                let mut skipped = 0;
                for (refs, queries) in &draws {
                    let e = expansion_errors(kernel, tau, c, queries, refs, cfg.coincidence)?;
                    skipped += e.skipped;
                    if e.errors.is_empty() {
                        continue;
                    }
                    means.push(e.mean());
                    ess.push(e.mean_ess());
                    e_max = e_max.max(e.max());
                }
                let (e_mean, e_se) = if means.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&means) };
                let mean_ess = if ess.is_empty() { 0.0 } else { ess.iter().sum::<f64>() / ess.len() as f64 };
                kernel_rows.push(TauRow {
                    kernel,
                    dim,
                    tau,
                    c,
                    e_mean,
                    e_se,
                    e_max,
                    mean_ess,
                    skipped_queries: skipped,
                    flagged: means.is_empty() || mean_ess < cfg.ess_min,
                });
            }
            let usable: Vec<&TauRow> = kernel_rows.iter().filter(|r| !r.flagged).collect();
            let xs: Vec<f64> = usable.iter().map(|r| r.tau).collect();
            let ys: Vec<f64> = usable.iter().map(|r| r.e_mean).collect();
            fits.push(TauFit { kernel, dim, fit: fit("e_tau", &xs, &ys) });
            rows.extend(kernel_rows);
        }
    }

    let meta = metadata(cfg);
    let header = strings(&["kernel", "D", "tau", "c", "e_mean", "e_se", "e_max", "mean_ess", "skipped_queries", "flagged"]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kernel.name().to_string(),
                r.dim.to_string(),
                fmt_f64(r.tau),
                fmt_f64(r.c),
                fmt_f64(r.e_mean),
                fmt_f64(r.e_se),
                fmt_f64(r.e_max),
                fmt_f64(r.mean_ess),
                r.skipped_queries.to_string(),
                u8::from(r.flagged).to_string(),
            ]
        })
        .collect();
    let mut written = Written::default();
    let path = cfg.out_dir.join("small_tau.csv");
    write_csv(&path, &meta, &header, &table)?;
    written.push(path);

    let fit_rows: Vec<Vec<String>> = fits
        .iter()
        .map(|f| {
            vec![
                f.kernel.name().to_string(),
                f.dim.to_string(),
                fmt_f64(f.fit.slope),
                fmt_f64(f.fit.intercept),
                f.fit.points.to_string(),
            ]
        })
        .collect();
    let fit_path = cfg.out_dir.join("small_tau_slopes.csv");
    write_csv(&fit_path, &meta, &strings(&["kernel", "D", "slope", "intercept", "points"]), &fit_rows)?;
    written.push(fit_path);

    if cfg.svg && cfg.kernels.contains(&KernelKind::Laplace) {
        // one single-kernel, single-D table for the plotter
        let dim = cfg.dims[0];
        let lap: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.kernel == KernelKind::Laplace && r.dim == dim)
            .map(|r| vec![fmt_f64(r.tau), fmt_f64(r.e_mean)])
            .collect();
        let lap_path = cfg.out_dir.join("small_tau_laplace.csv");
        write_csv(&lap_path, &meta, &strings(&["tau", "e_mean"]), &lap)?;
        written.push(lap_path.clone());
        let spec = PlotSpec {
            x_col: "tau".into(),
            y_cols: vec!["e_mean".into()],
            log_x: true,
            log_y: true,
            title: format!("small-bandwidth expansion error (laplace, D={dim})"),
        };
        let svg = cfg.out_dir.join("small_tau_laplace.svg");
        emit_svg_plot(&lap_path, &spec, &svg)?;
        written.push(svg);
    }
    Ok(SmallTauResult { rows, fits, written })
}
