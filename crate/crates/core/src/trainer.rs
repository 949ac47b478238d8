//! One-step generator trained by drifting: each step moves generated samples
//! along the mean-shift drift and regresses the generator onto the moved
//! samples with the target held fixed.
//!
//! With `x_i = f(z_i)` and drift `d_i = eta (V_p(x_i) - V_q(x_i))`, the loss
//! `mean_i |f(z_i) - stopgrad(x_i + d_i)|^2` has value `mean_i |d_i|^2` and
//! semi-gradient `-2 mean_i J(z_i)^T d_i`.

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::fields::{evaluate_fields, mean_shift_into, Coincidence, FieldOptions};
use crate::kernels::{KernelFamily, RadialKernel};
use crate::metrics::{c_theory, rbf_mmd, sliced_wasserstein};
use crate::sampling::{draw_prior, stream_rng, Toy2d};

pub const STREAM_TRAIN_DATA: u64 = 80;
pub const STREAM_TRAIN_PRIOR: u64 = 81;
pub const STREAM_TRAIN_INIT: u64 = 82;
pub const STREAM_EVAL_DATA: u64 = 83;
pub const STREAM_EVAL_PRIOR: u64 = 84;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => fast_tanh(v),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// `tanh` through a single `exp`; absolute error within a few ulps of 1.
#[inline]
fn fast_tanh(v: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * v).exp() + 1.0)
}

/// Fully connected network with all parameters in one flat vector.
///
/// Layer `l` stores its weight as a row-major `dims[l] x dims[l+1]` block
/// followed by its bias, so a layer computes `h W + b`. The activation is
/// applied after every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!("invalid layer dims {dims:?}")));
        }
        Ok(Self { dims: dims.to_vec(), activation, params: vec![0.0; param_count(dims)] })
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization for weights and biases.
    pub fn init<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activation)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let len = w[0] * w[1] + w[1];
            for p in &mut mlp.params[offset..offset + len] {
                *p = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        Ok(mlp)
    }

    /// Four affine layers `latent -> hidden -> hidden -> hidden -> out` with tanh.
    pub fn generator<R: Rng>(latent: usize, hidden: usize, out: usize, rng: &mut R) -> Result<Self> {
        Self::init(&[latent, hidden, hidden, hidden, out], Activation::Tanh, rng)
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mlp = Self::zeros(dims, activation)?;
        if params.len() != mlp.params.len() {
            return Err(Error::InvalidInput(format!("expected {} parameters, got {}", mlp.params.len(), params.len())));
        }
        Ok(Self { params, ..mlp })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.dims[..=layer])
    }

    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offset(l);
        let w = &self.params[start..start + fan_in * fan_out];
        let b = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
        (
            ArrayView2::from_shape((fan_in, fan_out), w).expect("layer shape"),
            ArrayView1::from(b),
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offset(l);
        let (w, b) = self.params[start..start + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        (
            ArrayViewMut2::from_shape((fan_in, fan_out), w).expect("layer shape"),
            ArrayViewMut1::from(b),
        )
    }

    /// Input followed by the output of every layer.
    fn forward_cached(&self, z: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        check_dim(self.input_dim(), z.ncols())?;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(z.to_owned());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut h = acts[l].dot(&w);
            h += &b;
            if l + 1 < self.n_layers() {
                let act = self.activation;
                h.mapv_inplace(|v| act.apply(v));
            }
            acts.push(h);
        }
        Ok(acts)
    }

    pub fn forward(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(z)?.pop().expect("output layer"))
    }

    /// `(1/n) sum_i J(z_i)^T g_i` as a flat parameter-shaped vector.
    pub fn vjp(&self, z: ArrayView2<'_, f64>, cotangents: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let acts = self.forward_cached(z)?;
        self.vjp_cached(&acts, cotangents)
    }

    fn vjp_cached(&self, acts: &[Array2<f64>], cotangents: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let n = acts[0].nrows();
        check_dim(self.output_dim(), cotangents.ncols())?;
        if cotangents.nrows() != n {
            return Err(Error::InvalidInput(format!("{} cotangent rows for {n} inputs", cotangents.nrows())));
        }
        let mut grad = Mlp::zeros(&self.dims, self.activation)?;
        let mut upstream = cotangents.mapv(|g| g / n as f64);
        for l in (0..self.n_layers()).rev() {
            let input = &acts[l];
            {
                let (mut gw, mut gb) = grad.layer_mut(l);
                gw.assign(&input.t().dot(&upstream));
                gb.assign(&upstream.sum_axis(Axis(0)));
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut next = upstream.dot(&w.t());
                let act = self.activation;
                next.zip_mut_with(input, |g, out| *g *= act.grad_from_output(*out));
                upstream = next;
            }
        }
        Ok(grad.params)
    }

    /// Text dump: one line of layer dims, then one parameter per line with 17
    /// significant digits in storage order.
    pub fn to_text(&self) -> String {
        let mut s = self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        s.push('\n');
        for p in &self.params {
            s.push_str(&crate::sampling::fmt_f64(*p));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, activation: Activation) -> Result<Self> {
        let mut lines = text.lines();
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty model file".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad layer dim '{t}'"))))
            .collect::<Result<_>>()?;
        let params: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().map_err(|_| Error::Parse(format!("bad parameter '{l}'"))))
            .collect::<Result<_>>()?;
        Self::from_params(&dims, activation, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Bias-corrected Adam update in place.
    pub fn step(&self, params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
            return Err(Error::InvalidInput("parameter, gradient and state lengths differ".into()));
        }
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Model reference set used for `V_q` at each generated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelRefs {
    /// The generated batch without the query's own row.
    #[default]
    LeaveOneOut,
    /// The whole generated batch, self-pair included.
    IncludeSelf,
}

impl ModelRefs {
    pub fn name(self) -> &'static str {
        match self {
            ModelRefs::LeaveOneOut => "leave_one_out",
            ModelRefs::IncludeSelf => "include_self",
        }
    }

    fn skip(self, i: usize) -> Option<usize> {
        matches!(self, ModelRefs::LeaveOneOut).then_some(i)
    }

    fn coincidence(self) -> Coincidence {
        match self {
            ModelRefs::LeaveOneOut => Coincidence::Exclude,
            ModelRefs::IncludeSelf => Coincidence::Include,
        }
    }

    fn field_options(self, eta: f64) -> FieldOptions {
        FieldOptions { coincidence: self.coincidence(), q_leave_one_out: self == ModelRefs::LeaveOneOut, eta }
    }
}

impl std::str::FromStr for ModelRefs {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leave_one_out" => Ok(ModelRefs::LeaveOneOut),
            "include_self" => Ok(ModelRefs::IncludeSelf),
            other => Err(Error::InvalidInput(format!("unknown model reference policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriftStep {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub generated: Array2<f64>,
    pub drift: Array2<f64>,
    /// Queries that met a coincident reference.
    pub flagged: usize,
}

/// Drift `eta (V_p - V_q)` at every row of `x`, with `x` itself as the model references.
pub fn drift_at_samples(
    kernel: &RadialKernel,
    x: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    eta: f64,
    model_refs: ModelRefs,
) -> Result<(Array2<f64>, usize)> {
    check_dim(x.ncols(), refs_p.ncols())?;
    if refs_p.nrows() == 0 {
        return Err(Error::InvalidInput("data references are empty".into()));
    }
    let x = x.as_standard_layout();
    let refs_p = refs_p.as_standard_layout();
    let (xv, pv) = (x.view(), refs_p.view());
    let d = x.ncols();
    let rows: Vec<(Vec<f64>, usize)> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi = xv.row(i);
            let xi = xi.as_slice().expect("standard layout");
            let mut vp = vec![0.0; d];
            let mut vq = vec![0.0; d];
            // a data point sitting exactly on the query is treated like the query's own model sample
            let policy = model_refs.coincidence();
            let cp = mean_shift_into(kernel, xi, &pv, None, policy, true, &mut vp)?;
            let cq = mean_shift_into(kernel, xi, &xv, model_refs.skip(i), policy, true, &mut vq)?;
            let drift = vp.iter().zip(&vq).map(|(a, b)| eta * (a - b)).collect();
            Ok((drift, usize::from(cp + cq > 0)))
        })
        .collect::<Result<_>>()?;
    let flagged = rows.iter().map(|r| r.1).sum();
    let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.0).collect();
    Ok((Array2::from_shape_vec((x.nrows(), d), flat).expect("drift shape"), flagged))
}

fn check_batch(z: &ArrayView2<'_, f64>) -> Result<()> {
    if z.nrows() < 2 {
        return Err(Error::InvalidInput("model batch needs at least two samples".into()));
    }
    Ok(())
}

/// Loss value and stop-gradient semi-gradient of the drifting objective.
pub fn drifting_loss_and_semigrad(
    gen: &Mlp,
    z: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    kernel: &RadialKernel,
    eta: f64,
    model_refs: ModelRefs,
) -> Result<DriftStep> {
    check_batch(&z)?;
    let acts = gen.forward_cached(z)?;
    let x = acts.last().expect("output layer");
    let (drift, flagged) = drift_at_samples(kernel, x.view(), refs_p, eta, model_refs)?;
    let loss = drift.iter().map(|v| v * v).sum::<f64>() / drift.nrows() as f64;
    let grad = gen.vjp_cached(&acts, drift.mapv(|v| -2.0 * v).view())?;
    Ok(DriftStep { loss, grad, generated: x.clone(), drift, flagged })
}

/// Semi-gradient of the score-transport comparator with field
/// `eta C (s_p - s_q)`.
pub fn score_transport_semigrad(
    gen: &Mlp,
    z: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    kernel: &RadialKernel,
    eta: f64,
    scale: f64,
    model_refs: ModelRefs,
) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidInput(format!("transport scale must be positive, got {scale}")));
    }
    check_batch(&z)?;
    let acts = gen.forward_cached(z)?;
    let x = acts.last().expect("output layer");
    let fields = evaluate_fields(kernel, x.view(), refs_p, x.view(), &model_refs.field_options(eta))?;
    gen.vjp_cached(&acts, fields.score_mismatch.mapv(|v| -2.0 * eta * scale * v).view())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigradCosine {
    pub cosine: f64,
    /// Scale used for the score-transport field, from the batch preconditioners.
    pub c_theory: f64,
    pub drift_norm: f64,
    pub transport_norm: f64,
    pub degenerate: bool,
}

pub fn flat_cosine(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb), na, nb)
}

/// Cosine between the drifting and score-transport semi-gradients on one batch.
pub fn semigrad_cosine(
    gen: &Mlp,
    z: ArrayView2<'_, f64>,
    refs_p: ArrayView2<'_, f64>,
    kernel: &RadialKernel,
    eta: f64,
    model_refs: ModelRefs,
) -> Result<SemigradCosine> {
    check_batch(&z)?;
    let acts = gen.forward_cached(z)?;
    let x = acts.last().expect("output layer");
    let fields = evaluate_fields(kernel, x.view(), refs_p, x.view(), &model_refs.field_options(eta))?;
    let rows = fields.valid_rows();
    let n = rows.len().max(1) as f64;
    let alpha_p = rows.iter().map(|&i| fields.alpha_p[i]).sum::<f64>() / n;
    let alpha_q = rows.iter().map(|&i| fields.alpha_q[i]).sum::<f64>() / n;
    let c = c_theory(alpha_p, alpha_q, kernel.tau())?;
    let g_drift = gen.vjp_cached(&acts, fields.drift.mapv(|v| -2.0 * v).view())?;
    let g_st = gen.vjp_cached(&acts, fields.score_mismatch.mapv(|v| -2.0 * eta * c * v).view())?;
    let (cosine, nd, ns) = flat_cosine(&g_drift, &g_st);
    if nd.max(ns) <= 1e-12 || !cosine.is_finite() {
        return Ok(SemigradCosine { cosine: 0.0, c_theory: c, drift_norm: nd, transport_norm: ns, degenerate: true });
    }
    Ok(SemigradCosine { cosine: cosine.clamp(-1.0, 1.0), c_theory: c, drift_norm: nd, transport_norm: ns, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Laplace,
}

impl KernelKind {
    pub fn build(self, scale: f64) -> Result<RadialKernel> {
        match self {
            KernelKind::Gaussian => RadialKernel::gaussian(scale),
            KernelKind::Laplace => RadialKernel::laplace(scale),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Laplace => "laplace",
        }
    }

    pub fn of(kernel: &RadialKernel) -> Option<Self> {
        match kernel.family() {
            KernelFamily::Gaussian => Some(KernelKind::Gaussian),
            KernelFamily::Laplace => Some(KernelKind::Laplace),
            KernelFamily::Custom(_) => None,
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "laplace" => Ok(KernelKind::Laplace),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: Toy2d,
    pub kernel: KernelKind,
    /// Laplace `tau` or Gaussian `sigma`.
    pub kernel_scale: f64,
    pub data_batch: usize,
    pub model_batch: usize,
    pub eta: f64,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub swd_projections: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub model_refs: ModelRefs,
    /// Also record the drifting/score-transport semi-gradient cosine at evals.
    pub track_cosine: bool,
}

impl TrainConfig {
    /// Batch 2048, 5000 steps, lr 1e-3, kernel scale 0.30 on the ring and
    /// 0.05 on the other targets.
    pub fn new(dataset: Toy2d, kernel: KernelKind) -> Self {
        Self {
            dataset,
            kernel,
            kernel_scale: if dataset == Toy2d::RingMog { 0.30 } else { 0.05 },
            data_batch: 2048,
            model_batch: 2048,
            eta: 1.0,
            lr: 1e-3,
            steps: 5000,
            seed: 0,
            eval_interval: 500,
            eval_samples: 5000,
            swd_projections: 200,
            latent_dim: 32,
            hidden: 256,
            model_refs: ModelRefs::LeaveOneOut,
            track_cosine: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.data_batch < 2 || self.model_batch < 2 {
            return bad("batch sizes must be >= 2");
        }
        if self.steps < 1 {
            return bad("steps must be >= 1");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.kernel_scale > 0.0) {
            return bad("kernel scale must be positive");
        }
        if self.eval_interval < 1 || self.eval_samples < 2 || self.swd_projections < 1 {
            return bad("eval interval, eval sample count and projections must be positive");
        }
        if self.latent_dim < 1 || self.hidden < 1 {
            return bad("network sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub loss: f64,
    pub swd: f64,
    pub mmd: f64,
    pub semigrad_cosine: Option<f64>,
    pub wallclock_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: Mlp,
    /// Evaluation of the untrained generator (step 0).
    pub initial: EvalRecord,
    /// One record every `eval_interval` optimizer steps.
    pub timeline: Vec<EvalRecord>,
    /// Set when training stopped on a non-finite loss: `(step, loss)`.
    pub aborted: Option<(usize, f64)>,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &EvalRecord {
        self.timeline.last().unwrap_or(&self.initial)
    }
}

struct Evaluator<'a> {
    config: &'a TrainConfig,
    kernel: RadialKernel,
    rng_data: rand_chacha::ChaCha8Rng,
    rng_prior: rand_chacha::ChaCha8Rng,
    started: Instant,
}

impl Evaluator<'_> {
    fn record(&mut self, gen: &Mlp, step: usize, loss: Option<f64>) -> Result<EvalRecord> {
        let cfg = self.config;
        let target = cfg.dataset.draw(cfg.eval_samples, cfg.dataset.default_noise(), cfg.seed, &mut self.rng_data)?;
        let z = draw_prior(cfg.latent_dim, cfg.eval_samples, &mut self.rng_prior);
        let generated = gen.forward(z.view())?;
        let swd = sliced_wasserstein(generated.view(), target.view(), cfg.swd_projections, cfg.seed)?;
        let mmd = rbf_mmd(generated.view(), target.view(), None)?;

        let needs_batch = loss.is_none() || cfg.track_cosine;
        let (loss, cosine) = if needs_batch {
            let refs = cfg.dataset.draw(cfg.data_batch, cfg.dataset.default_noise(), cfg.seed, &mut self.rng_data)?;
            let zb = draw_prior(cfg.latent_dim, cfg.model_batch, &mut self.rng_prior);
            let loss = match loss {
                Some(l) => l,
                None => drifting_loss_and_semigrad(gen, zb.view(), refs.view(), &self.kernel, cfg.eta, cfg.model_refs)?.loss,
            };
            let cosine = if cfg.track_cosine {
                Some(semigrad_cosine(gen, zb.view(), refs.view(), &self.kernel, cfg.eta, cfg.model_refs)?.cosine)
            } else {
                None
            };
            (loss, cosine)
        } else {
            (loss.expect("loss present"), None)
        };
        Ok(EvalRecord {
            step,
            loss,
            swd,
            mmd,
            semigrad_cosine: cosine,
            wallclock_ms: self.started.elapsed().as_millis(),
        })
    }
}

/// Runs the drifting training loop; deterministic for a given config.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let kernel = config.kernel.build(config.kernel_scale)?;
    let mut gen = Mlp::generator(config.latent_dim, config.hidden, 2, &mut stream_rng(config.seed, STREAM_TRAIN_INIT))?;
    let adam = Adam::new(config.lr);
    let mut state = OptimizerState::new(gen.params().len());
    let mut rng_data = stream_rng(config.seed, STREAM_TRAIN_DATA);
    let mut rng_prior = stream_rng(config.seed, STREAM_TRAIN_PRIOR);
    let mut evaluator = Evaluator {
        config,
        kernel,
        rng_data: stream_rng(config.seed, STREAM_EVAL_DATA),
        rng_prior: stream_rng(config.seed, STREAM_EVAL_PRIOR),
        started: Instant::now(),
    };

    let initial = evaluator.record(&gen, 0, None)?;
    let mut timeline = Vec::with_capacity(config.steps / config.eval_interval);
    for step in 1..=config.steps {
        let data = config.dataset.draw(config.data_batch, config.dataset.default_noise(), config.seed, &mut rng_data)?;
        let z = draw_prior(config.latent_dim, config.model_batch, &mut rng_prior);
        let out = drifting_loss_and_semigrad(&gen, z.view(), data.view(), &kernel, config.eta, config.model_refs)?;
        if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
            return Ok(TrainOutcome { generator: gen, initial, timeline, aborted: Some((step, out.loss)) });
        }
        adam.step(gen.params_mut(), &out.grad, &mut state)?;
        if step % config.eval_interval == 0 {
            timeline.push(evaluator.record(&gen, step, Some(out.loss))?);
        }
    }
    Ok(TrainOutcome { generator: gen, initial, timeline, aborted: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_net(seed: u64) -> Mlp {
        Mlp::init(&[3, 5, 4, 2], Activation::Tanh, &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let gen = Mlp::zeros(&[4, 8, 8, 8, 2], Activation::Tanh).unwrap();
        let out = gen.forward(Array2::from_elem((3, 4), 1.5).view()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn last_bias_passes_through() {
        let mut gen = Mlp::zeros(&[4, 8, 8, 8, 2], Activation::Tanh).unwrap();
        gen.layer_mut(3).1.assign(&array![0.7, -1.25]);
        let out = gen.forward(Array2::from_elem((5, 4), -3.0).view()).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.7, -1.25]);
        }
    }

    #[test]
    fn forward_matches_scalar_reimplementation() {
        let gen = small_net(1);
        let z = array![[0.1, -0.4, 0.9], [1.2, 0.3, -0.7]];
        let out = gen.forward(z.view()).unwrap();
        for (i, zi) in z.rows().into_iter().enumerate() {
            let mut h: Vec<f64> = zi.to_vec();
            for l in 0..gen.n_layers() {
                let (w, b) = gen.layer(l);
                let mut next = vec![0.0; w.ncols()];
                for (o, nv) in next.iter_mut().enumerate() {
                    let mut acc = b[o];
                    for (k, hv) in h.iter().enumerate() {
                        acc += hv * w[[k, o]];
                    }
                    *nv = if l + 1 < gen.n_layers() { acc.tanh() } else { acc };
                }
                h = next;
            }
            for (a, b) in out.row(i).iter().zip(&h) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn vjp_of_zero_cotangent_is_zero() {
        let gen = small_net(2);
        let g = gen.vjp(Array2::from_elem((4, 3), 0.5).view(), Array2::zeros((4, 2)).view()).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vjp_single_linear_layer_matches_hand_calculus() {
        let gen = Mlp::init(&[3, 2], Activation::Identity, &mut stream_rng(3, 0)).unwrap();
        let z = array![[1.0, 2.0, -1.0], [0.5, -0.5, 3.0]];
        let g = array![[0.2, -1.0], [1.5, 0.25]];
        let grad = gen.vjp(z.view(), g.view()).unwrap();
        let gw = ArrayView2::from_shape((3, 2), &grad[..6]).unwrap();
        for b in 0..3 {
            for a in 0..2 {
                let expect = (z[[0, b]] * g[[0, a]] + z[[1, b]] * g[[1, a]]) / 2.0;
                assert!((gw[[b, a]] - expect).abs() < 1e-15);
            }
        }
        assert!((grad[6] - (0.2 + 1.5) / 2.0).abs() < 1e-15);
        assert!((grad[7] - (-1.0 + 0.25) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn vjp_dimension_checks() {
        let gen = small_net(4);
        assert!(gen.vjp(Array2::zeros((2, 3)).view(), Array2::zeros((2, 3)).view()).is_err());
        assert!(gen.vjp(Array2::zeros((2, 3)).view(), Array2::zeros((3, 2)).view()).is_err());
        assert!(gen.forward(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn adam_examples() {
        let adam = Adam::new(0.01);
        let mut p = vec![1.0, -2.0];
        let mut st = OptimizerState::new(2);
        adam.step(&mut p, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![0.5];
        let mut st = OptimizerState::new(1);
        adam.step(&mut p, &[1.0], &mut st).unwrap();
        assert!((0.5 - p[0] - 0.01).abs() < 1e-9);

        let (mut p1, mut p2) = (vec![0.3, 0.1], vec![0.3, 0.1]);
        let (mut s1, mut s2) = (OptimizerState::new(2), OptimizerState::new(2));
        for _ in 0..3 {
            adam.step(&mut p1, &[0.2, -0.7], &mut s1).unwrap();
            adam.step(&mut p2, &[0.2, -0.7], &mut s2).unwrap();
        }
        assert_eq!((p1, s1), (p2, s2));
    }

    #[test]
    fn drifting_loss_scales_with_eta() {
        let gen = Mlp::init(&[4, 16, 16, 16, 2], Activation::Tanh, &mut stream_rng(5, 0)).unwrap();
        let z = draw_prior(4, 32, &mut stream_rng(6, 0));
        let refs = Toy2d::RingMog.draw(40, 0.4, 0, &mut stream_rng(7, 0)).unwrap();
        let k = RadialKernel::laplace(0.3).unwrap();
        let a = drifting_loss_and_semigrad(&gen, z.view(), refs.view(), &k, 1.0, ModelRefs::LeaveOneOut).unwrap();
        let b = drifting_loss_and_semigrad(&gen, z.view(), refs.view(), &k, 2.0, ModelRefs::LeaveOneOut).unwrap();
        assert!((b.loss - 4.0 * a.loss).abs() <= 1e-12 * b.loss);
        for (ga, gb) in a.grad.iter().zip(&b.grad) {
            assert!((gb - 2.0 * ga).abs() <= 1e-12 * (1.0 + gb.abs()));
        }
    }

    #[test]
    fn score_transport_is_linear_in_scale() {
        let gen = Mlp::init(&[4, 8, 8, 8, 2], Activation::Tanh, &mut stream_rng(8, 0)).unwrap();
        let z = draw_prior(4, 16, &mut stream_rng(9, 0));
        let refs = Toy2d::TwoMoons.draw(20, 0.05, 0, &mut stream_rng(10, 0)).unwrap();
        let k = RadialKernel::laplace(0.5).unwrap();
        let g1 = score_transport_semigrad(&gen, z.view(), refs.view(), &k, 1.0, 0.7, ModelRefs::LeaveOneOut).unwrap();
        let g2 = score_transport_semigrad(&gen, z.view(), refs.view(), &k, 1.0, 1.4, ModelRefs::LeaveOneOut).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert!(score_transport_semigrad(&gen, z.view(), refs.view(), &k, 1.0, 0.0, ModelRefs::LeaveOneOut).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let gen = small_net(11);
        let back = Mlp::from_text(&gen.to_text(), Activation::Tanh).unwrap();
        assert_eq!(back, gen);
        assert!(gen.to_text().starts_with("3 5 4 2\n"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(Toy2d::RingMog, KernelKind::Laplace);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.kernel_scale, 0.30);
        assert_eq!(TrainConfig::new(Toy2d::SwissRoll, KernelKind::Gaussian).kernel_scale, 0.05);
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
        cfg.steps = 1;
        cfg.model_batch = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_step_one_record() {
        let mut cfg = TrainConfig::new(Toy2d::Checkerboard, KernelKind::Gaussian);
        cfg.steps = 1;
        cfg.eval_interval = 1;
        cfg.data_batch = 16;
        cfg.model_batch = 16;
        cfg.eval_samples = 32;
        cfg.hidden = 8;
        let out = train(&cfg).unwrap();
        assert_eq!(out.timeline.len(), 1);
        assert_eq!(out.timeline[0].step, 1);
        assert_eq!(out.initial.step, 0);
        assert!(out.aborted.is_none());
    }
}
