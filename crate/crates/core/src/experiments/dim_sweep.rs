use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{ensure_dir, metadata, strings, write_csv, Written};
use super::plot::{emit_svg_plot, PlotSpec};
use crate::error::{Error, Result};
use crate::fields::{evaluate_fields, FieldOptions, FLAG_DEGENERATE_QUERY};
use crate::kernels::BandwidthPolicy;
use crate::metrics::{loglog_slope, AlignmentReport, ALIGNMENT_COLUMNS};
use crate::sampling::{fmt_f64, MixtureDataset, Role, STREAM_DRAW_P, STREAM_DRAW_Q, STREAM_QUERY};
use crate::trainer::KernelKind;
use crate::fields::Coincidence;

/// Columns that get a standard-error companion in the sweep CSV.
pub const SE_COLUMNS: [&str; 7] =
    ["abs_err", "rel_err", "mean_cos", "one_minus_cos", "alpha_ratio", "delta_gap_energy", "C_ratio"];

/// Metrics fitted against D after the sweep.
pub const FIT_METRICS: [&str; 4] = ["abs_err", "rel_err", "one_minus_cos", "delta_gap_energy"];

fn column(name: &str) -> usize {
    ALIGNMENT_COLUMNS.iter().position(|c| *c == name).expect("known alignment column")
}

/// One alignment measurement: sample p, q and queries at `dim`, resolve the
/// bandwidth on the queries and summarise the fields. `Ok(None)` marks a
/// degenerate point.
#[allow(clippy::too_many_arguments)]
pub fn alignment_point(
    dataset: MixtureDataset,
    kernel: KernelKind,
    bandwidth: BandwidthPolicy,
    dim: usize,
    n_refs: usize,
    n_queries: usize,
    seed: u64,
    coincidence: Coincidence,
) -> Result<(Option<AlignmentReport>, usize)> {
    let p = dataset.spec(dim, Role::P, seed)?;
    let q = dataset.spec(dim, Role::Q, seed)?;
    let refs_p = p.sample(n_refs, seed, STREAM_DRAW_P)?;
    let refs_q = q.sample(n_refs, seed, STREAM_DRAW_Q)?;
    let queries = q.sample(n_queries, seed, STREAM_QUERY)?;
    let tau = bandwidth.resolve(dim, queries.view())?;
    let opts = FieldOptions { coincidence, ..FieldOptions::default() };
    let fields = evaluate_fields(&kernel.build(tau)?, queries.view(), refs_p.view(), refs_q.view(), &opts)?;
    let flagged = fields.flags.iter().filter(|f| *f & FLAG_DEGENERATE_QUERY != 0).count();
    match AlignmentReport::from_fields(&fields, n_refs) {
        Ok(r) => Ok((Some(r), flagged)),
        Err(Error::Degenerate(_)) => Ok((None, flagged)),
        Err(e) => Err(e),
    }
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    /// Per-repeat reports; `None` where the point was degenerate.
    pub repeats: Vec<Option<AlignmentReport>>,
    /// Query rows dropped as degenerate, summed over repeats.
    pub flagged_queries: usize,
    /// Means over non-degenerate repeats, in `ALIGNMENT_COLUMNS` order.
    pub mean: [f64; 15],
    pub se: [f64; 15],
}

impl SweepRow {
    fn new(dim: usize, repeats: Vec<Option<AlignmentReport>>, flagged_queries: usize) -> Self {
        let ok: Vec<[f64; 15]> = repeats.iter().flatten().map(|r| r.values()).collect();
        let mut mean = [f64::NAN; 15];
        let mut se = [f64::NAN; 15];
        if !ok.is_empty() {
            for c in 0..15 {
                let col: Vec<f64> = ok.iter().map(|v| v[c]).collect();
                (mean[c], se[c]) = mean_se(&col);
            }
            // keep the identity exact rather than averaging it
            mean[column("one_minus_cos")] = 1.0 - mean[column("mean_cos")];
        }
        mean[0] = dim as f64;
        Self { dim, repeats, flagged_queries, mean, se }
    }

    /// True when every repeat was degenerate; such rows stay out of fits.
    pub fn flagged(&self) -> bool {
        self.repeats.iter().all(Option::is_none)
    }

    pub fn get(&self, col: &str) -> f64 {
        self.mean[column(col)]
    }

    pub fn se_of(&self, col: &str) -> f64 {
        self.se[column(col)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Log-log fit of `metric` against `x` over the unflagged rows; NaN when
/// fewer than two usable points remain.
pub(crate) fn fit(metric: &str, xs: &[f64], ys: &[f64]) -> SlopeFit {
    let (slope, intercept) = loglog_slope(xs, ys).unwrap_or((f64::NAN, f64::NAN));
    SlopeFit { metric: metric.to_string(), slope, intercept, points: xs.len() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSweep {
    pub kernel: KernelKind,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeFit>,
}

impl KernelSweep {
    pub fn slope(&self, metric: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.metric == metric)
    }

    pub fn row(&self, dim: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.dim == dim)
    }

    /// Mean and standard error of `col` over the unflagged rows, in D order.
    pub fn series(&self, col: &str) -> (Vec<f64>, Vec<f64>) {
        self.rows.iter().filter(|r| !r.flagged()).map(|r| (r.get(col), r.se_of(col))).unzip()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimSweepResult {
    pub sweeps: Vec<KernelSweep>,
    pub written: Written,
}

impl DimSweepResult {
    pub fn kernel(&self, kind: KernelKind) -> Option<&KernelSweep> {
        self.sweeps.iter().find(|s| s.kernel == kind)
    }
}

/// True when `values` never rises by more than one combined standard error
/// between consecutive points.
pub fn decreasing_within_se(values: &[f64], se: &[f64]) -> bool {
    values.windows(2).zip(se.windows(2)).all(|(v, s)| {
        let slack = (s[0].powi(2) + s[1].powi(2)).sqrt();
        v[1] <= v[0] || v[1] - v[0] <= slack
    })
}

fn check_grid(dims: &[usize]) -> Result<()> {
    let mut sorted = dims.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 3 || sorted[sorted.len() - 1] < 10 * sorted[0] {
        return Err(Error::Config("dimension sweep needs >= 3 distinct D values spanning a decade".into()));
    }
    Ok(())
}

/// Runs the field-alignment sweep over `cfg.dims` for every configured
/// kernel and writes per-kernel CSVs, slope summaries and plots.
pub fn run_dim_sweep(cfg: &ExperimentConfig) -> Result<DimSweepResult> {
    if cfg.experiment != ExperimentKind::DimSweep {
        return Err(Error::Config(format!("expected a dim_sweep config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    check_grid(&cfg.dims)?;
    let dataset = cfg.mixture_dataset()?;
    ensure_dir(&cfg.out_dir)?;
    let meta = metadata(cfg);
    let mut written = Written::default();
    let mut sweeps = Vec::new();

    for &kernel in &cfg.kernels {
        let mut rows = Vec::new();
        let mut repeat_rows = Vec::new();
        for &dim in &cfg.dims {
            let mut reports = Vec::new();
            let mut flagged = 0;
            for i in 0..cfg.repeats {
                let seed = cfg.seed + i as u64;
                let (report, f) =
                    alignment_point(dataset, kernel, cfg.bandwidth, dim, cfg.n_refs, cfg.n_queries, seed, cfg.coincidence)?;
                let mut line = vec![i.to_string(), seed.to_string(), f.to_string()];
                match &report {
                    Some(r) => {
                        let v = r.values();
                        line.push(dim.to_string());
                        line.extend(v[1..].iter().map(|x| fmt_f64(*x)));
                    }
                    None => {
                        line.push(dim.to_string());
                        line.extend((1..15).map(|_| "nan".to_string()));
                    }
                }
                repeat_rows.push(line);
                flagged += f;
                reports.push(report);
            }
            rows.push(SweepRow::new(dim, reports, flagged));
        }

        let usable: Vec<&SweepRow> = rows.iter().filter(|r| !r.flagged()).collect();
        let xs: Vec<f64> = usable.iter().map(|r| r.dim as f64).collect();
        let slopes: Vec<SlopeFit> = FIT_METRICS
            .iter()
            .map(|m| fit(m, &xs, &usable.iter().map(|r| r.get(m)).collect::<Vec<_>>()))
            .collect();

        let name = kernel.name();
        let mut header = strings(&ALIGNMENT_COLUMNS);
        header.extend(SE_COLUMNS.iter().map(|c| format!("{c}_se")));
        header.extend(strings(&["repeats_ok", "flagged_queries", "flagged"]));
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut line = vec![r.dim.to_string()];
                line.extend(r.mean[1..].iter().map(|x| fmt_f64(*x)));
                line.extend(SE_COLUMNS.iter().map(|c| fmt_f64(r.se_of(c))));
                line.push(r.repeats.iter().flatten().count().to_string());
                line.push(r.flagged_queries.to_string());
                line.push(u8::from(r.flagged()).to_string());
                line
            })
            .collect();
        let path = cfg.out_dir.join(format!("alignment_{name}.csv"));
        write_csv(&path, &meta, &header, &table)?;
        written.push(path.clone());

        let mut rep_header = strings(&["repeat", "seed", "flagged_queries"]);
        rep_header.extend(strings(&ALIGNMENT_COLUMNS));
        let rep_path = cfg.out_dir.join(format!("alignment_{name}_repeats.csv"));
        write_csv(&rep_path, &meta, &rep_header, &repeat_rows)?;
        written.push(rep_path);

        let slope_rows: Vec<Vec<String>> = slopes
            .iter()
            .map(|s| vec![s.metric.clone(), fmt_f64(s.slope), fmt_f64(s.intercept), s.points.to_string()])
            .collect();
        let slope_path = cfg.out_dir.join(format!("slopes_{name}.csv"));
        write_csv(&slope_path, &meta, &strings(&["metric", "slope", "intercept", "points"]), &slope_rows)?;
        written.push(slope_path);

        if cfg.svg && kernel == KernelKind::Laplace {
            let plots = [
                ("errors", vec!["abs_err", "rel_err"], "alignment error vs D"),
                ("cosine", vec!["one_minus_cos"], "1 - cos vs D"),
                ("mechanism", vec!["delta_gap_energy"], "residual gap energy vs D"),
            ];
            for (stem, ys, title) in plots {
                let spec = PlotSpec {
                    x_col: "D".into(),
                    y_cols: ys.into_iter().map(String::from).collect(),
                    log_x: true,
                    log_y: true,
                    title: format!("{title} ({name})"),
                };
                let svg = cfg.out_dir.join(format!("{stem}_{name}.svg"));
                emit_svg_plot(&path, &spec, &svg)?;
                written.push(svg);
            }
        }
        sweeps.push(KernelSweep { kernel, rows, slopes });
    }
    Ok(DimSweepResult { sweeps, written })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_matches_hand_values() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn monotone_slack_rule() {
        assert!(decreasing_within_se(&[3.0, 2.0, 1.0], &[0.0; 3]));
        assert!(decreasing_within_se(&[3.0, 3.1, 1.0], &[0.1, 0.1, 0.1]));
        assert!(!decreasing_within_se(&[3.0, 3.5, 1.0], &[0.1, 0.1, 0.1]));
    }

    #[test]
    fn grid_needs_a_decade() {
        assert!(check_grid(&[4, 8, 16]).is_err());
        assert!(check_grid(&[4, 40]).is_err());
        assert!(check_grid(&[4, 8, 40]).is_ok());
    }

    #[test]
    fn gaussian_point_is_exact() {
        let (r, flagged) = alignment_point(
            MixtureDataset::RingMog,
            KernelKind::Gaussian,
            BandwidthPolicy::Adaptive { base: 0.3 },
            8,
            200,
            20,
            1,
            Coincidence::Exclude,
        )
        .unwrap();
        let r = r.unwrap();
        assert_eq!(flagged, 0);
        assert!(r.abs_err <= 1e-18, "{}", r.abs_err);
        assert!((r.c_theory - r.tau * r.tau).abs() <= 1e-12 * r.c_theory);
    }
}
