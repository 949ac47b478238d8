//! Monte Carlo estimators of the mean-shift and kernel-score fields.
//!
//! For a query `x` and references `y_1..y_N`, with softmax weights
//! `w_j = k(x, y_j) / sum_l k(x, y_l)`:
//!
//! ```text
//! V(x) = sum_j w_j (y_j - x)                          mean shift
//! s(x) = sum_j w_j grad_x log k(x, y_j)               kernel score
//!      = (1/tau^2) sum_j w_j b(r_j) (y_j - x)
//! ```
//!
//! Writing `a_j = 1 / b(r_j)` and `g_j = b(r_j) (y_j - x)` gives the exact
//! finite-sample decomposition
//!
//! ```text
//! V = alpha * tau * s + delta,   alpha = tau * E_w[a],   delta = Cov_w(a, g)
//! ```
//!
//! For the Laplace kernel `alpha = sum_j w_j r_j` (the kernel-weighted mean
//! radius) and `delta = E_w[r u] - E_w[r] E_w[u]` with `u` the unit direction.
//! For the Gaussian kernel `b = 1`, so `s = V / tau^2` and `delta = 0`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{squared_distance, KernelFamily, RadialKernel};
use crate::sampling::fmt_f64;

/// References closer than this to the query count as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-12;
/// Below this norm the score has no usable direction.
pub const SCORE_DIRECTION_TOL: f64 = 1e-10;

pub const FLAG_COINCIDENT_P: u8 = 1;
pub const FLAG_COINCIDENT_Q: u8 = 1 << 1;
pub const FLAG_FLAT_SCORE_P: u8 = 1 << 2;
pub const FLAG_FLAT_SCORE_Q: u8 = 1 << 3;
pub const FLAG_DEGENERATE_QUERY: u8 = 1 << 4;

/// Treatment of references that coincide with the query under a kernel whose
/// log-gradient is singular at zero distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coincidence {
    /// Drop coincident references from every sum at that query and
    /// renormalize the weights over the survivors.
    #[default]
    Exclude,
    /// Keep them in the weights with zero displacement and zero direction.
    Include,
}

impl Coincidence {
    pub fn name(self) -> &'static str {
        match self {
            Coincidence::Exclude => "exclude",
            Coincidence::Include => "include",
        }
    }
}

/// All per-query quantities for one reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryField {
    pub mean_shift: Vec<f64>,
    pub score: Vec<f64>,
    /// `tau * E_w[1/b]`; the kernel-weighted mean radius for Laplace.
    pub alpha: f64,
    pub delta: Vec<f64>,
    /// Number of coincident references encountered.
    pub coincident: usize,
    /// Effective sample size `1 / sum_j w_j^2` of the kernel weights.
    pub ess: f64,
}

fn check_refs(x: &[f64], refs: &ArrayView2<'_, f64>) -> Result<()> {
    if refs.nrows() == 0 {
        return Err(Error::InvalidInput("reference set is empty".into()));
    }
    check_dim(x.len(), refs.ncols())
}

/// Max-shifted exponentials of the log-kernel values; `None` marks a
/// reference removed from the sums. Returns `(exps, normalizer, coincident)`.
fn shifted_exponentials(
    kernel: &RadialKernel,
    x: &[f64],
    refs: &ArrayView2<'_, f64>,
    skip: Option<usize>,
    coincidence: Coincidence,
) -> Result<(Vec<Option<(f64, f64)>>, f64, usize)> {
    let singular = kernel.is_singular_at_zero();
    let mut coincident = 0;
    let mut max_log = f64::NEG_INFINITY;
    let mut entries: Vec<Option<(f64, f64)>> = refs
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, y)| {
            if skip == Some(j) {
                return None;
            }
            let r2 = squared_distance(x, y.as_slice().expect("standard layout"));
            let r = r2.sqrt();
            if singular && r < COINCIDENCE_TOL {
                coincident += 1;
                if coincidence == Coincidence::Exclude {
                    return None;
                }
            }
            let log_k = kernel.log_kernel_sq(r2);
            max_log = max_log.max(log_k);
            Some((log_k, r))
        })
        .collect();
    if max_log == f64::NEG_INFINITY {
        return Err(Error::DegenerateQuery(refs.nrows()));
    }
    let mut total = 0.0;
    for (log_k, _) in entries.iter_mut().flatten() {
        *log_k = (*log_k - max_log).exp();
        total += *log_k;
    }
    Ok((entries, total, coincident))
}

/// Full per-query evaluation. `skip` removes one reference index (leave-one-out
/// when the query itself belongs to `refs`).
pub fn query_field(
    kernel: &RadialKernel,
    x: &[f64],
    refs: ArrayView2<'_, f64>,
    skip: Option<usize>,
    coincidence: Coincidence,
) -> Result<QueryField> {
    query_field_impl(kernel, x, refs, skip, coincidence, true)
}

/// Like [`query_field`] but skips the covariance pass; `delta` comes back empty.
pub(crate) fn shift_and_score(
    kernel: &RadialKernel,
    x: &[f64],
    refs: ArrayView2<'_, f64>,
    coincidence: Coincidence,
) -> Result<QueryField> {
    query_field_impl(kernel, x, refs, None, coincidence, false)
}

fn query_field_impl(
    kernel: &RadialKernel,
    x: &[f64],
    refs: ArrayView2<'_, f64>,
    skip: Option<usize>,
    coincidence: Coincidence,
    want_delta: bool,
) -> Result<QueryField> {
    check_refs(x, &refs)?;
    let refs_std = refs.as_standard_layout();
    let refs = refs_std.view();
    let d = x.len();
    let tau = kernel.tau();
    let singular = kernel.is_singular_at_zero();
    let (entries, total, coincident) = shifted_exponentials(kernel, x, &refs, skip, coincidence)?;

    // a_j = 1/b_j, g_j = b_j (y_j - x); coincident references carry a = g = 0.
    let weights_ab = |r: f64| -> (f64, f64) {
        if singular && r < COINCIDENCE_TOL {
            return (0.0, 0.0);
        }
        let b = kernel.b_weight(r).unwrap_or(0.0);
        (1.0 / b, b)
    };

    let mut v = vec![0.0; d];
    let mut g_mean = vec![0.0; d];
    let mut a_mean = 0.0;
    let mut w2 = 0.0;
    for (entry, y) in entries.iter().zip(refs.rows()) {
        let Some((e, r)) = *entry else { continue };
        let w = e / total;
        let (a, b) = weights_ab(r);
        a_mean += w * a;
        w2 += w * w;
        for ((vi, gi), (yi, xi)) in v.iter_mut().zip(g_mean.iter_mut()).zip(y.iter().zip(x)) {
            let diff = yi - xi;
            *vi += w * diff;
            *gi += w * b * diff;
        }
    }
    let score: Vec<f64> = g_mean.iter().map(|g| g / (tau * tau)).collect();

    let delta = if !want_delta {
        Vec::new()
    } else if kernel.is_gaussian() {
        vec![0.0; d]
    } else {
        // centered second pass: Cov_w(a, g) = sum_j w_j (a_j - E a)(g_j - E g)
        let mut delta = vec![0.0; d];
        for (entry, y) in entries.iter().zip(refs.rows()) {
            let Some((e, r)) = *entry else { continue };
            let w = e / total;
            let (a, b) = weights_ab(r);
            let da = w * (a - a_mean);
            for ((di, gm), (yi, xi)) in delta.iter_mut().zip(&g_mean).zip(y.iter().zip(x)) {
                *di += da * (b * (yi - xi) - gm);
            }
        }
        delta
    };

    Ok(QueryField { mean_shift: v, score, alpha: tau * a_mean, delta, coincident, ess: 1.0 / w2 })
}

/// Mean shift only, written into `out`; the hot path of the trainer.
/// Mean shift written into `out`. Coincident references are handled by
/// `coincidence` for singular kernels, or for every kernel when
/// `all_kernels` is set.
pub(crate) fn mean_shift_into(
    kernel: &RadialKernel,
    x: &[f64],
    refs: &ArrayView2<'_, f64>,
    skip: Option<usize>,
    coincidence: Coincidence,
    all_kernels: bool,
    out: &mut [f64],
) -> Result<usize> {
    let tau = kernel.tau();
    let singular = all_kernels || kernel.is_singular_at_zero();
    match kernel.family() {
        KernelFamily::Gaussian => {
            let c = -0.5 / (tau * tau);
            mean_shift_with(|r2| c * r2, singular, x, refs, skip, coincidence, out)
        }
        KernelFamily::Laplace => {
            let c = -1.0 / tau;
            mean_shift_with(|r2| c * r2.sqrt(), singular, x, refs, skip, coincidence, out)
        }
        KernelFamily::Custom(_) => {
            mean_shift_with(|r2| kernel.log_kernel_sq(r2), singular, x, refs, skip, coincidence, out)
        }
    }
}

// Single pass; the running sums are rescaled whenever the max log-kernel grows.
#[inline(always)]
fn mean_shift_with(
    log_kernel_sq: impl Fn(f64) -> f64,
    singular: bool,
    x: &[f64],
    refs: &ArrayView2<'_, f64>,
    skip: Option<usize>,
    coincidence: Coincidence,
    out: &mut [f64],
) -> Result<usize> {
    let mut coincident = 0;
    let mut max_log = f64::NEG_INFINITY;
    let mut total = 0.0;
    out.iter_mut().for_each(|o| *o = 0.0);
    let flat = refs.as_slice().expect("standard layout");
    let tol2 = COINCIDENCE_TOL * COINCIDENCE_TOL;
    for (j, y) in flat.chunks_exact(x.len().max(1)).enumerate() {
        if skip == Some(j) {
            continue;
        }
        let r2 = squared_distance(x, y);
        let mut zero_dir = false;
        if singular && r2 < tol2 {
            coincident += 1;
            if coincidence == Coincidence::Exclude {
                continue;
            }
            zero_dir = true;
        }
        let log_k = log_kernel_sq(r2);
        if log_k > max_log {
            let scale = (max_log - log_k).exp();
            total *= scale;
            out.iter_mut().for_each(|o| *o *= scale);
            max_log = log_k;
        }
        let e = (log_k - max_log).exp();
        total += e;
        if !zero_dir {
            for ((o, yi), xi) in out.iter_mut().zip(y).zip(x) {
                *o += e * (yi - xi);
            }
        }
    }
    if max_log == f64::NEG_INFINITY {
        return Err(Error::DegenerateQuery(refs.nrows()));
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(coincident)
}

/// Softmax attention weights over all references.
pub fn softmax_weights(kernel: &RadialKernel, x: &[f64], refs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_refs(x, &refs)?;
    let refs_std = refs.as_standard_layout();
    let (entries, total, _) = shifted_exponentials(kernel, x, &refs_std.view(), None, Coincidence::Include)?;
    Ok(entries.into_iter().map(|e| e.map_or(0.0, |(v, _)| v / total)).collect())
}

/// `sum_j w_j (y_j - x)` over all references.
pub fn mean_shift(kernel: &RadialKernel, x: &[f64], refs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_refs(x, &refs)?;
    let refs_std = refs.as_standard_layout();
    let mut out = vec![0.0; x.len()];
    mean_shift_into(kernel, x, &refs_std.view(), None, Coincidence::Include, false, &mut out)?;
    Ok(out)
}

/// Kernel score with coincident references excluded and weights renormalized.
pub fn kernel_score(kernel: &RadialKernel, x: &[f64], refs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(query_field(kernel, x, refs, None, Coincidence::Exclude)?.score)
}

/// `eta (V_p(x) - V_q(x))`.
pub fn drift_field(
    kernel: &RadialKernel,
    x: &[f64],
    refs_p: ArrayView2<'_, f64>,
    refs_q: ArrayView2<'_, f64>,
    eta: f64,
) -> Result<Vec<f64>> {
    let vp = mean_shift(kernel, x, refs_p)?;
    let vq = mean_shift(kernel, x, refs_q)?;
    Ok(vp.iter().zip(&vq).map(|(a, b)| eta * (a - b)).collect())
}

/// `s_p(x) - s_q(x)`.
pub fn score_mismatch_field(
    kernel: &RadialKernel,
    x: &[f64],
    refs_p: ArrayView2<'_, f64>,
    refs_q: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    let sp = kernel_score(kernel, x, refs_p)?;
    let sq = kernel_score(kernel, x, refs_q)?;
    Ok(sp.iter().zip(&sq).map(|(a, b)| a - b).collect())
}

/// `(alpha, delta)` of the preconditioned-score decomposition.
pub fn precond_diagnostics(kernel: &RadialKernel, x: &[f64], refs: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
    let f = query_field(kernel, x, refs, None, Coincidence::Exclude)?;
    Ok((f.alpha, f.delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffScore {
    pub residual: Vec<f64>,
    /// Set when `|s|` is too small to define a direction; `residual` is then `delta`.
    pub degenerate: bool,
}

/// Component of `delta` orthogonal to `s`.
///
/// The projection is applied twice so that `<residual, s>` is at roundoff
/// level relative to `|residual| |s|` rather than to `|delta| |s|`; a residual
/// that is itself below roundoff of `delta` is returned as exact zeros.
pub fn offscore_residual(delta: &[f64], s: &[f64]) -> OffScore {
    let s2: f64 = s.iter().map(|v| v * v).sum();
    if s2.sqrt() <= SCORE_DIRECTION_TOL {
        return OffScore { residual: delta.to_vec(), degenerate: true };
    }
    let project = |v: &[f64]| -> Vec<f64> {
        let coef = v.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / s2;
        v.iter().zip(s).map(|(d, si)| d - coef * si).collect()
    };
    let mut residual = project(&project(delta));
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm(&residual) <= 64.0 * f64::EPSILON * norm(delta) {
        residual.iter_mut().for_each(|r| *r = 0.0);
    }
    OffScore { residual, degenerate: false }
}

fn mean_kernel_gradient(kernel: &RadialKernel, x: &[f64], refs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_refs(x, &refs)?;
    let tau2 = kernel.tau() * kernel.tau();
    let singular = kernel.is_singular_at_zero();
    let mut out = vec![0.0; x.len()];
    let mut coincident = 0;
    for y in refs.rows() {
        let y = y.to_vec();
        let r2 = squared_distance(x, &y);
        let r = r2.sqrt();
        if singular && r < COINCIDENCE_TOL {
            coincident += 1;
            continue;
        }
        let k = kernel.log_kernel_sq(r2).exp();
        let b = if r == 0.0 { 0.0 } else { kernel.b_weight(r)? };
        for ((o, yi), xi) in out.iter_mut().zip(&y).zip(x) {
            *o += k * b * (yi - xi) / tau2;
        }
    }
    if coincident == refs.nrows() {
        return Err(Error::DegenerateQuery(coincident));
    }
    let n = refs.nrows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Unnormalized force `E_p[grad_x k] - E_q[grad_x k]`.
pub fn coulomb_force_field(
    kernel: &RadialKernel,
    x: &[f64],
    refs_p: ArrayView2<'_, f64>,
    refs_q: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    let fp = mean_kernel_gradient(kernel, x, refs_p)?;
    let fq = mean_kernel_gradient(kernel, x, refs_q)?;
    Ok(fp.iter().zip(&fq).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOptions {
    pub coincidence: Coincidence,
    /// Query `i` is also row `i` of `refs_q`; exclude it from its own q sums.
    pub q_leave_one_out: bool,
    /// Step size on the drift; defaults to 1.
    pub eta: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self { coincidence: Coincidence::Exclude, q_leave_one_out: false, eta: 1.0 }
    }
}

/// Per-query field rows (`n_queries x D` for vector fields).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimate {
    pub tau: f64,
    pub eta: f64,
    pub v_p: Array2<f64>,
    pub v_q: Array2<f64>,
    pub s_p: Array2<f64>,
    pub s_q: Array2<f64>,
    pub drift: Array2<f64>,
    pub score_mismatch: Array2<f64>,
    pub alpha_p: Array1<f64>,
    pub alpha_q: Array1<f64>,
    pub delta_p: Array2<f64>,
    pub delta_q: Array2<f64>,
    pub delta_gap: Array2<f64>,
    pub delta_perp_p: Array2<f64>,
    pub delta_perp_q: Array2<f64>,
    pub flags: Vec<u8>,
}

impl FieldEstimate {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.v_p.ncols()
    }

    /// Rows usable for statistics (no degenerate-query flag).
    pub fn valid_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.flags[i] & FLAG_DEGENERATE_QUERY == 0).collect()
    }

    pub fn csv_header(&self) -> String {
        let d = self.dim();
        let mut cols = vec!["query_index".to_string()];
        for name in ["v_p", "v_q", "s_p", "s_q", "drift", "score_mismatch"] {
            cols.extend((0..d).map(|k| format!("{name}_{k}")));
        }
        cols.extend(["alpha_p", "alpha_q", "delta_gap_norm2", "flags"].map(String::from));
        cols.join(",")
    }

    /// CSV rows in the fixed column order of [`Self::csv_header`].
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.len() {
            let mut cols = vec![i.to_string()];
            for m in [&self.v_p, &self.v_q, &self.s_p, &self.s_q, &self.drift, &self.score_mismatch] {
                cols.extend(m.row(i).iter().map(|v| fmt_f64(*v)));
            }
            let gap = self.delta_gap.row(i);
            cols.push(fmt_f64(self.alpha_p[i]));
            cols.push(fmt_f64(self.alpha_q[i]));
            cols.push(fmt_f64(gap.dot(&gap)));
            cols.push(self.flags[i].to_string());
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

struct Row {
    p: QueryField,
    q: QueryField,
    flags: u8,
}

fn evaluate_row(
    kernel: &RadialKernel,
    x: &[f64],
    i: usize,
    refs_p: &ArrayView2<'_, f64>,
    refs_q: &ArrayView2<'_, f64>,
    opts: &FieldOptions,
) -> Result<Row> {
    let skip_q = opts.q_leave_one_out.then_some(i);
    let zero = || QueryField {
        mean_shift: vec![0.0; x.len()],
        score: vec![0.0; x.len()],
        alpha: 0.0,
        delta: vec![0.0; x.len()],
        coincident: 0,
        ess: 0.0,
    };
    let mut flags = 0;
    let mut eval = |refs: &ArrayView2<'_, f64>, skip, flag| match query_field(kernel, x, refs.view(), skip, opts.coincidence) {
        Ok(f) => {
            if f.coincident > 0 {
                flags |= flag;
            }
            Ok(f)
        }
        Err(Error::DegenerateQuery(_)) => {
            flags |= FLAG_DEGENERATE_QUERY;
            Ok(zero())
        }
        Err(e) => Err(e),
    };
    let p = eval(refs_p, None, FLAG_COINCIDENT_P)?;
    let q = eval(refs_q, skip_q, FLAG_COINCIDENT_Q)?;
    Ok(Row { p, q, flags })
}

/// Batched driver: every field quantity at every query row.
///
/// Rows are computed independently (in parallel), so the result does not
/// depend on the worker count.
pub fn evaluate_fields(
    kernel: &RadialKernel,
    queries: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    refs_q: ArrayView2<'_, f64>,
    opts: &FieldOptions,
) -> Result<FieldEstimate> {
    let d = queries.ncols();
    check_dim(d, refs_p.ncols())?;
    check_dim(d, refs_q.ncols())?;
    if refs_p.nrows() == 0 || refs_q.nrows() == 0 || queries.nrows() == 0 {
        return Err(Error::InvalidInput("queries and both reference sets must be nonempty".into()));
    }
    if opts.q_leave_one_out && queries.nrows() != refs_q.nrows() {
        return Err(Error::InvalidInput("leave-one-out needs queries to be the q references".into()));
    }
    let queries = queries.as_standard_layout();
    let (rp, rq) = (refs_p.as_standard_layout(), refs_q.as_standard_layout());
    let (rp, rq) = (rp.view(), rq.view());
    let rows: Vec<Row> = queries
        .rows()
        .into_iter()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, x)| evaluate_row(kernel, x.as_slice().expect("standard layout"), i, &rp, &rq, opts))
        .collect::<Result<_>>()?;

    let n = rows.len();
    let mut est = FieldEstimate {
        tau: kernel.tau(),
        eta: opts.eta,
        v_p: Array2::zeros((n, d)),
        v_q: Array2::zeros((n, d)),
        s_p: Array2::zeros((n, d)),
        s_q: Array2::zeros((n, d)),
        drift: Array2::zeros((n, d)),
        score_mismatch: Array2::zeros((n, d)),
        alpha_p: Array1::zeros(n),
        alpha_q: Array1::zeros(n),
        delta_p: Array2::zeros((n, d)),
        delta_q: Array2::zeros((n, d)),
        delta_gap: Array2::zeros((n, d)),
        delta_perp_p: Array2::zeros((n, d)),
        delta_perp_q: Array2::zeros((n, d)),
        flags: Vec::with_capacity(n),
    };
    for (i, row) in rows.into_iter().enumerate() {
        let Row { p, q, mut flags } = row;
        let perp_p = offscore_residual(&p.delta, &p.score);
        let perp_q = offscore_residual(&q.delta, &q.score);
        if perp_p.degenerate {
            flags |= FLAG_FLAT_SCORE_P;
        }
        if perp_q.degenerate {
            flags |= FLAG_FLAT_SCORE_Q;
        }
        for k in 0..d {
            est.v_p[[i, k]] = p.mean_shift[k];
            est.v_q[[i, k]] = q.mean_shift[k];
            est.s_p[[i, k]] = p.score[k];
            est.s_q[[i, k]] = q.score[k];
            est.drift[[i, k]] = opts.eta * (p.mean_shift[k] - q.mean_shift[k]);
            est.score_mismatch[[i, k]] = p.score[k] - q.score[k];
            est.delta_p[[i, k]] = p.delta[k];
            est.delta_q[[i, k]] = q.delta[k];
            est.delta_gap[[i, k]] = p.delta[k] - q.delta[k];
            est.delta_perp_p[[i, k]] = perp_p.residual[k];
            est.delta_perp_q[[i, k]] = perp_q.residual[k];
        }
        est.alpha_p[i] = p.alpha;
        est.alpha_q[i] = q.alpha;
        est.flags.push(flags);
    }
    Ok(est)
}
