//! Scalar diagnostics: drift/score alignment, distribution distances and
//! power-law fits.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::fields::{query_field, Coincidence, FieldEstimate};
use crate::kernels::{squared_distance, RadialKernel};
use crate::sampling::{fmt_f64, stream_rng};

pub const STREAM_SWD: u64 = 64;
/// Rows whose `|drift| |score|` falls below this carry no direction.
pub const COSINE_DEGENERATE_TOL: f64 = 1e-12;
/// Points used for the MMD median heuristic.
pub const MEDIAN_HEURISTIC_POINTS: usize = 1000;

/// `rho * tau` with `rho` the mean of the two averaged preconditioners.
pub fn c_theory(alpha_bar_p: f64, alpha_bar_q: f64, tau: f64) -> Result<f64> {
    if !(alpha_bar_p > 0.0 && alpha_bar_q > 0.0 && tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "c_theory needs positive inputs, got alpha_p={alpha_bar_p} alpha_q={alpha_bar_q} tau={tau}"
        )));
    }
    Ok(0.5 * (alpha_bar_p + alpha_bar_q) * tau)
}

fn check_rows(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidInput(format!("row counts differ: {} vs {}", a.nrows(), b.nrows())));
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("no rows".into()));
    }
    check_dim(a.ncols(), b.ncols())
}

/// Least-squares scale `C* = sum <drift, score> / sum |score|^2`.
pub fn oracle_scale(drift: ArrayView2<'_, f64>, score: ArrayView2<'_, f64>) -> Result<f64> {
    check_rows(&drift, &score)?;
    let num: f64 = drift.iter().zip(score.iter()).map(|(a, b)| a * b).sum();
    let den: f64 = score.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::Degenerate("all score rows are zero".into()));
    }
    Ok(num / den)
}

/// `(mean |drift - C score|^2, that / mean |drift|^2)`.
pub fn alignment_errors(drift: ArrayView2<'_, f64>, score: ArrayView2<'_, f64>, c: f64) -> Result<(f64, f64)> {
    check_rows(&drift, &score)?;
    let n = drift.nrows() as f64;
    let abs = drift.iter().zip(score.iter()).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>() / n;
    let energy = drift.iter().map(|a| a * a).sum::<f64>() / n;
    if energy == 0.0 {
        return Err(Error::Degenerate("drift energy is zero; relative error undefined".into()));
    }
    Ok((abs, abs / energy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineStats {
    pub mean_cos: f64,
    pub one_minus_cos: f64,
    /// Rows skipped because `|drift| |score| < 1e-12`.
    pub skipped: usize,
}

pub fn row_cosines(drift: ArrayView2<'_, f64>, score: ArrayView2<'_, f64>) -> Result<Vec<Option<f64>>> {
    check_rows(&drift, &score)?;
    Ok(drift
        .rows()
        .into_iter()
        .zip(score.rows())
        .map(|(a, b)| {
            let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
            (denom >= COSINE_DEGENERATE_TOL).then(|| (a.dot(&b) / denom).clamp(-1.0, 1.0))
        })
        .collect())
}

pub fn cosine_stats(drift: ArrayView2<'_, f64>, score: ArrayView2<'_, f64>) -> Result<CosineStats> {
    let cos = row_cosines(drift, score)?;
    let kept: Vec<f64> = cos.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("every row is degenerate".into()));
    }
    let mean_cos = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(CosineStats { mean_cos, one_minus_cos: 1.0 - mean_cos, skipped: cos.len() - kept.len() })
}

/// Ordinary least squares of `ln y` on `ln x`; returns `(slope, intercept)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidInput("need at least two (x, y) pairs of equal length".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("log-log fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Seeded uniform directions on the unit sphere, one per row.
pub fn random_directions(dim: usize, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, STREAM_SWD);
    let mut dirs = Array2::zeros((count, dim));
    for mut row in dirs.rows_mut() {
        loop {
            row.iter_mut().for_each(|v: &mut f64| *v = rng.sample(StandardNormal));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }
    dirs
}

/// Average over random projections of the 1-D Wasserstein-2 distance between
/// the projected samples (sorted matching). Both clouds need the same size.
pub fn sliced_wasserstein(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, n_proj: usize, seed: u64) -> Result<f64> {
    check_rows(&a, &b)?;
    if n_proj == 0 {
        return Err(Error::InvalidInput("need at least one projection".into()));
    }
    let dirs = random_directions(a.ncols(), n_proj, seed);
    let pa = a.dot(&dirs.t());
    let pb = b.dot(&dirs.t());
    let n = a.nrows() as f64;
    let mut total = 0.0;
    for (ca, cb) in pa.axis_iter(Axis(1)).zip(pb.axis_iter(Axis(1))) {
        let mut sa = ca.to_vec();
        let mut sb = cb.to_vec();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let w2 = sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
        total += w2.sqrt();
    }
    Ok(total / n_proj as f64)
}

fn mean_rbf(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>, inv_two_sigma2: f64) -> f64 {
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let mut total = 0.0;
    for x in a.rows() {
        let x = x.as_slice().expect("standard layout");
        let mut row = 0.0;
        for y in b.rows() {
            row += (-squared_distance(x, y.as_slice().expect("standard layout")) * inv_two_sigma2).exp();
        }
        total += row;
    }
    total / (a.nrows() as f64 * b.nrows() as f64)
}

/// Median pairwise distance over an evenly strided subset of `A u B`.
pub fn median_heuristic(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    let total = a.nrows() + b.nrows();
    let stride = total.div_ceil(MEDIAN_HEURISTIC_POINTS).max(1);
    let points: Vec<Vec<f64>> = a
        .rows()
        .into_iter()
        .chain(b.rows())
        .step_by(stride)
        .map(|r| r.to_vec())
        .collect();
    let mut dists = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            dists.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Err(Error::Degenerate("median heuristic needs at least two points".into()));
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *median <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    Ok(*median)
}

/// Biased (V-statistic) RBF MMD, returned as `sqrt(max(MMD^2, 0))`.
/// `bandwidth = None` selects the median heuristic.
pub fn rbf_mmd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, bandwidth: Option<f64>) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidInput("MMD needs nonempty clouds".into()));
    }
    check_dim(a.ncols(), b.ncols())?;
    let sigma = match bandwidth {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidInput(format!("MMD bandwidth must be positive, got {s}"))),
        None => median_heuristic(a, b)?,
    };
    let c = 1.0 / (2.0 * sigma * sigma);
    let mmd2 = mean_rbf(&a, &a, c) + mean_rbf(&b, &b, c) - 2.0 * mean_rbf(&a, &b, c);
    Ok(mmd2.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseFisher {
    pub value: f64,
    /// Queries that met a coincident or fully degenerate reference set.
    pub flagged: usize,
}

/// `mean_x |s_p(x) - s_model(x)|^2` over model samples. When the model samples
/// are the model references themselves, each query leaves itself out.
pub fn reverse_fisher_estimate(
    kernel: &RadialKernel,
    model_samples: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    refs_model: ArrayView2<'_, f64>,
) -> Result<ReverseFisher> {
    if model_samples.nrows() == 0 {
        return Err(Error::InvalidInput("no model samples".into()));
    }
    check_dim(model_samples.ncols(), refs_p.ncols())?;
    check_dim(model_samples.ncols(), refs_model.ncols())?;
    let self_refs = model_samples == refs_model;
    let mut total = 0.0;
    let mut flagged = 0;
    let mut used = 0usize;
    for (i, x) in model_samples.rows().into_iter().enumerate() {
        let x = x.to_vec();
        let skip = self_refs.then_some(i);
        let fields = query_field(kernel, &x, refs_p, None, Coincidence::Exclude)
            .and_then(|p| Ok((p, query_field(kernel, &x, refs_model, skip, Coincidence::Exclude)?)));
        match fields {
            Ok((p, q)) => {
                if p.coincident + q.coincident > 0 {
                    flagged += 1;
                }
                total += p.score.iter().zip(&q.score).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                used += 1;
            }
            Err(Error::DegenerateQuery(_)) => flagged += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every query was degenerate".into()));
    }
    Ok(ReverseFisher { value: total / used as f64, flagged })
}

/// Alignment diagnostics at one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub dim: usize,
    pub abs_err: f64,
    pub rel_err: f64,
    pub mean_cos: f64,
    pub one_minus_cos: f64,
    pub alpha_bar_p: f64,
    pub alpha_bar_q: f64,
    pub alpha_ratio: f64,
    pub delta_gap_energy: f64,
    pub c_theory: f64,
    pub c_star: f64,
    pub c_ratio: f64,
    pub n_queries: usize,
    pub n_refs: usize,
    pub tau: f64,
}

pub const ALIGNMENT_COLUMNS: [&str; 15] = [
    "D",
    "abs_err",
    "rel_err",
    "mean_cos",
    "one_minus_cos",
    "alpha_bar_p",
    "alpha_bar_q",
    "alpha_ratio",
    "delta_gap_energy",
    "C_theory",
    "C_star",
    "C_ratio",
    "n_queries",
    "n_refs",
    "tau",
];

impl AlignmentReport {
    /// Builds the report from evaluated fields, scaling the score mismatch by
    /// `C_theory`. Rows flagged as degenerate queries are left out.
    pub fn from_fields(fields: &FieldEstimate, n_refs: usize) -> Result<Self> {
        let rows = fields.valid_rows();
        if rows.is_empty() {
            return Err(Error::Degenerate("no valid query rows".into()));
        }
        let drift = fields.drift.select(Axis(0), &rows);
        let score = fields.score_mismatch.select(Axis(0), &rows);
        let gap = fields.delta_gap.select(Axis(0), &rows);
        let n = rows.len() as f64;
        let alpha_bar_p = rows.iter().map(|&i| fields.alpha_p[i]).sum::<f64>() / n;
        let alpha_bar_q = rows.iter().map(|&i| fields.alpha_q[i]).sum::<f64>() / n;
        let c_theory = c_theory(alpha_bar_p, alpha_bar_q, fields.tau)?;
        let (abs_err, rel_err) = alignment_errors(drift.view(), score.view(), c_theory)?;
        let cos = cosine_stats(drift.view(), score.view())?;
        let c_star = oracle_scale(drift.view(), score.view())?;
        Ok(Self {
            dim: fields.dim(),
            abs_err,
            rel_err,
            mean_cos: cos.mean_cos,
            one_minus_cos: cos.one_minus_cos,
            alpha_bar_p,
            alpha_bar_q,
            alpha_ratio: alpha_bar_p / alpha_bar_q,
            delta_gap_energy: gap.iter().map(|v| v * v).sum::<f64>() / n,
            c_theory,
            c_star,
            c_ratio: c_star / c_theory,
            n_queries: rows.len(),
            n_refs,
            tau: fields.tau,
        })
    }

    /// Values in [`ALIGNMENT_COLUMNS`] order.
    pub fn values(&self) -> [f64; 15] {
        [
            self.dim as f64,
            self.abs_err,
            self.rel_err,
            self.mean_cos,
            self.one_minus_cos,
            self.alpha_bar_p,
            self.alpha_bar_q,
            self.alpha_ratio,
            self.delta_gap_energy,
            self.c_theory,
            self.c_star,
            self.c_ratio,
            self.n_queries as f64,
            self.n_refs as f64,
            self.tau,
        ]
    }

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> Result<()> {
        let v = self.values();
        let mut cols = vec![self.dim.to_string()];
        cols.extend(v[1..12].iter().map(|x| fmt_f64(*x)));
        cols.push(self.n_queries.to_string());
        cols.push(self.n_refs.to_string());
        cols.push(fmt_f64(self.tau));
        writeln!(out, "{}", cols.join(","))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn c_theory_examples() {
        assert_eq!(c_theory(2.0, 2.0, 0.5).unwrap(), 1.0);
        assert_eq!(c_theory(1.0, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(c_theory(0.7, 0.7, 0.3).unwrap(), 0.7 * 0.3);
        assert!(c_theory(0.0, 1.0, 1.0).is_err());
        assert!(c_theory(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn oracle_scale_examples() {
        let s = array![[1.0, 0.5], [-0.2, 0.3]];
        assert_eq!(oracle_scale((&s * 2.0).view(), s.view()).unwrap(), 2.0);
        assert_eq!(oracle_scale(array![[0.0, 1.0]].view(), array![[1.0, 0.0]].view()).unwrap(), 0.0);
        let d = array![[1.0, 0.0], [0.0, 2.0]];
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(oracle_scale(d.view(), s.view()).unwrap(), 1.5);
        assert!(oracle_scale(d.view(), Array2::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn alignment_error_examples() {
        let s = array![[1.0, 0.5], [-0.2, 0.3]];
        assert_eq!(alignment_errors((&s * 3.0).view(), s.view(), 3.0).unwrap(), (0.0, 0.0));
        let d = array![[1.0, 2.0], [3.0, -1.0]];
        let (abs, rel) = alignment_errors(d.view(), s.view(), 0.0).unwrap();
        assert_eq!(abs, (1.0 + 4.0 + 9.0 + 1.0) / 2.0);
        assert_eq!(rel, 1.0);
        assert_eq!(alignment_errors(array![[1.0, 0.0]].view(), array![[0.0, 1.0]].view(), 1.0).unwrap(), (2.0, 2.0));
        assert!(alignment_errors(Array2::zeros((1, 2)).view(), s.row(0).insert_axis(Axis(0)), 1.0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let d = array![[1.0, 2.0], [-0.5, 0.1]];
        let c = cosine_stats(d.view(), (&d * 3.0).view()).unwrap();
        assert!((c.mean_cos - 1.0).abs() < 1e-15 && c.one_minus_cos.abs() < 1e-15);
        let c = cosine_stats(array![[1.0, 0.0]].view(), array![[0.0, 5.0]].view()).unwrap();
        assert_eq!((c.mean_cos, c.one_minus_cos), (0.0, 1.0));
        let c = cosine_stats(array![[1.0, 0.0], [1.0, 0.0]].view(), array![[2.0, 0.0], [0.0, 2.0]].view()).unwrap();
        assert_eq!((c.mean_cos, c.one_minus_cos), (0.5, 0.5));
        let c = cosine_stats(array![[1.0, 0.0], [0.0, 0.0]].view(), array![[1.0, 0.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!((c.mean_cos, c.skipped), (1.0, 1));
        assert!(cosine_stats(Array2::zeros((2, 2)).view(), Array2::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn loglog_examples() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let (s, _) = loglog_slope(&xs, &xs.map(|x| 7.0 / x)).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        let (s, _) = loglog_slope(&xs, &xs.map(|x| 5.0 / (x * x))).unwrap();
        assert!((s + 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[1.0, 2.0, 4.0], &[1.0, 1.0, 1.0]).unwrap(), (0.0, 0.0));
        assert!(loglog_slope(&[1.0, -2.0], &[1.0, 1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn swd_examples() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        assert_eq!(sliced_wasserstein(a.view(), a.view(), 50, 0).unwrap(), 0.0);
        let zeros = Array2::zeros((5, 1));
        let ones = Array2::from_elem((5, 1), 1.0);
        assert!((sliced_wasserstein(zeros.view(), ones.view(), 10, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(sliced_wasserstein(a.view(), zeros.view(), 10, 0).is_err());
    }

    #[test]
    fn mmd_examples() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        assert_eq!(rbf_mmd(a.view(), a.view(), Some(1.0)).unwrap(), 0.0);
        assert_eq!(rbf_mmd(a.view(), a.view(), None).unwrap(), 0.0);
        let (x, y) = (array![[0.0, 0.0]], array![[1.0, 1.0]]);
        let expect = (2.0 * (1.0 - (-1.0f64).exp())).sqrt();
        assert!((rbf_mmd(x.view(), y.view(), Some(1.0)).unwrap() - expect).abs() < 1e-15);
        let far = array![[1e3, 0.0]];
        assert!((rbf_mmd(x.view(), far.view(), Some(1.0)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(rbf_mmd(Array2::zeros((0, 2)).view(), x.view(), None).is_err());
    }

    #[test]
    fn reverse_fisher_examples() {
        let l = RadialKernel::laplace(1.0).unwrap();
        let refs = array![[1.0, 0.0], [0.0, 2.0]];
        let queries = array![[0.3, -0.7], [5.0, 5.0]];
        let rf = reverse_fisher_estimate(&l, queries.view(), refs.view(), refs.view()).unwrap();
        assert_eq!(rf.value, 0.0);

        // one query at the origin: s_p = (0.731, 0.269) from the refs above,
        // s_q from a single reference along -e1 is (-1, 0)
        let x = array![[0.0, 0.0]];
        let model_refs = array![[-3.0, 0.0]];
        let rf = reverse_fisher_estimate(&l, x.view(), refs.view(), model_refs.view()).unwrap();
        let (a, b) = ((-1.0f64).exp(), (-2.0f64).exp());
        let sp = [a / (a + b), b / (a + b)];
        let expect = (sp[0] + 1.0).powi(2) + sp[1].powi(2);
        assert!((rf.value - expect).abs() < 1e-14);
    }

    #[test]
    fn report_csv_column_count() {
        let r = AlignmentReport {
            dim: 4,
            abs_err: 1.0,
            rel_err: 0.5,
            mean_cos: 0.9,
            one_minus_cos: 0.1,
            alpha_bar_p: 1.0,
            alpha_bar_q: 1.0,
            alpha_ratio: 1.0,
            delta_gap_energy: 0.0,
            c_theory: 1.0,
            c_star: 1.0,
            c_ratio: 1.0,
            n_queries: 10,
            n_refs: 20,
            tau: 0.3,
        };
        let mut buf = Vec::new();
        r.write_csv_row(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(line.trim().split(',').count(), ALIGNMENT_COLUMNS.len());
        assert!(line.starts_with("4,"));
    }
}
