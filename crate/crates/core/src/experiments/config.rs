//! Flat `key = value` config files with one `[section]` per experiment.
//!
//! ```text
//! # shared by every experiment
//! seed = 0
//!
//! [dim_sweep]
//! dims = 4, 8, 16, 32, 64
//! repeats = 3
//!
//! [train]
//! steps = 2000
//! track_cosine = true
//! ```
//!
//! Keys before the first section apply to all experiments; a section only
//! applies to the experiment of the same name. Lists are comma-separated,
//! booleans are `true`/`false`, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fields::Coincidence;
use crate::kernels::BandwidthPolicy;
use crate::sampling::{MixtureDataset, Toy2d};
use crate::trainer::{KernelKind, ModelRefs, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    DimSweep,
    SmallTau,
    Train,
    FieldsDump,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] =
        [ExperimentKind::DimSweep, ExperimentKind::SmallTau, ExperimentKind::Train, ExperimentKind::FieldsDump];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DimSweep => "dim_sweep",
            ExperimentKind::SmallTau => "small_tau",
            ExperimentKind::Train => "train",
            ExperimentKind::FieldsDump => "fields_dump",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Parsed but uninterpreted config text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub global: Vec<(String, String)>,
    pub sections: BTreeMap<String, Vec<(String, String)>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = ConfigFile::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse(format!("line {}: {msg}: '{}'", lineno + 1, raw.trim()));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header"))?.trim();
                if name.is_empty() {
                    return Err(err("empty section name"));
                }
                file.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err("empty key"));
            }
            let entry = (key.to_string(), value.to_string());
            match &section {
                Some(name) => file.sections.get_mut(name).expect("section exists").push(entry),
                None => file.global.push(entry),
            }
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Training knobs used by the `train` experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub eta: f64,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub swd_projections: usize,
    /// Kernel scale shared by both kernels; `None` takes the dataset default.
    pub kernel_scale: Option<f64>,
    pub latent_dim: usize,
    pub hidden: usize,
    pub model_refs: ModelRefs,
    pub track_cosine: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = TrainConfig::new(Toy2d::RingMog, KernelKind::Laplace);
        Self {
            steps: base.steps,
            batch: base.data_batch,
            lr: base.lr,
            eta: base.eta,
            eval_interval: base.eval_interval,
            eval_samples: base.eval_samples,
            swd_projections: base.swd_projections,
            kernel_scale: None,
            latent_dim: base.latent_dim,
            hidden: base.hidden,
            model_refs: base.model_refs,
            track_cosine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dataset: String,
    pub kernels: Vec<KernelKind>,
    pub bandwidth: BandwidthPolicy,
    pub dims: Vec<usize>,
    pub taus: Vec<f64>,
    pub n_refs: usize,
    pub n_queries: usize,
    pub seed: u64,
    pub repeats: usize,
    pub out_dir: PathBuf,
    pub coincidence: Coincidence,
    /// Minimum mean effective sample size before a small-tau row is flagged.
    pub ess_min: f64,
    pub svg: bool,
    pub train: TrainSettings,
}

pub const DEFAULT_DIMS: [usize; 9] = [4, 8, 16, 32, 64, 128, 256, 512, 1024];
pub const DEFAULT_TAUS: [f64; 5] = [0.4, 0.28, 0.2, 0.14, 0.1];
pub const DEFAULT_TAU_BASE: f64 = 0.3;

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            dataset: "ring_mog".into(),
            kernels: vec![KernelKind::Laplace],
            bandwidth: BandwidthPolicy::Adaptive { base: DEFAULT_TAU_BASE },
            dims: DEFAULT_DIMS.to_vec(),
            taus: DEFAULT_TAUS.to_vec(),
            n_refs: 3000,
            n_queries: 500,
            seed: 0,
            repeats: 3,
            out_dir: PathBuf::from("out").join(experiment.name()),
            coincidence: Coincidence::Exclude,
            ess_min: 10.0,
            svg: true,
            train: TrainSettings::default(),
        };
        match experiment {
            ExperimentKind::DimSweep => {}
            ExperimentKind::SmallTau => {
                cfg.kernels = vec![KernelKind::Laplace, KernelKind::Gaussian];
                cfg.dims = vec![2];
                // at 3000 references the O(tau^2) residual is buried in Monte
                // Carlo noise below tau ~ 0.2
                cfg.n_refs = 100_000;
                cfg.n_queries = 500;
            }
            ExperimentKind::Train => {
                cfg.kernels = vec![KernelKind::Laplace, KernelKind::Gaussian];
                cfg.dims = vec![2];
                cfg.repeats = 1;
            }
            ExperimentKind::FieldsDump => {
                cfg.dims = vec![2];
                cfg.n_queries = 400;
                cfg.repeats = 1;
                cfg.svg = false;
            }
        }
        cfg
    }

    /// Defaults, then global keys, then the experiment's own section.
    pub fn from_file(experiment: ExperimentKind, file: &ConfigFile) -> Result<Self> {
        let mut cfg = Self::defaults(experiment);
        for (k, v) in &file.global {
            cfg.set(k, v)?;
        }
        if let Some(section) = file.sections.get(experiment.name()) {
            for (k, v) in section {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: ExperimentKind, path: &Path) -> Result<Self> {
        Self::from_file(experiment, &ConfigFile::read(path)?)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("bad value for '{key}': '{value}'"));
        fn num<T: FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<T> {
            v.trim().parse().map_err(|_| bad())
        }
        fn list<T: FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<Vec<T>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(s, &bad)).collect()
        }
        let boolean = |v: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad()),
        };
        match key {
            "dataset" => self.dataset = value.to_string(),
            "kernel" | "kernels" => {
                self.kernels = value.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
            }
            "bandwidth" => {
                self.bandwidth = match value {
                    "adaptive" => BandwidthPolicy::Adaptive { base: self.tau_base() },
                    "fixed" => BandwidthPolicy::Fixed { base: self.tau_base(), exponent: 0.0 },
                    _ => return Err(bad()),
                }
            }
            "tau_base" => {
                let base = num(value, bad)?;
                self.bandwidth = match self.bandwidth {
                    BandwidthPolicy::Adaptive { .. } => BandwidthPolicy::Adaptive { base },
                    BandwidthPolicy::Fixed { exponent, .. } => BandwidthPolicy::Fixed { base, exponent },
                };
            }
            "tau_exponent" => match self.bandwidth {
                BandwidthPolicy::Fixed { base, .. } => {
                    self.bandwidth = BandwidthPolicy::Fixed { base, exponent: num(value, bad)? }
                }
                BandwidthPolicy::Adaptive { .. } => {
                    return Err(Error::Config("tau_exponent needs 'bandwidth = fixed' first".into()))
                }
            },
            "dims" | "dim" => self.dims = list(value, bad)?,
            "taus" => self.taus = list(value, bad)?,
            "n_refs" => self.n_refs = num(value, bad)?,
            "n_queries" => self.n_queries = num(value, bad)?,
            "seed" => self.seed = num(value, bad)?,
            "repeats" => self.repeats = num(value, bad)?,
            "out" => self.out_dir = PathBuf::from(value),
            "coincidence" => {
                self.coincidence = match value {
                    "exclude" => Coincidence::Exclude,
                    "include" => Coincidence::Include,
                    _ => return Err(bad()),
                }
            }
            "ess_min" => self.ess_min = num(value, bad)?,
            "svg" => self.svg = boolean(value)?,
            "steps" => self.train.steps = num(value, bad)?,
            "batch" => self.train.batch = num(value, bad)?,
            "lr" => self.train.lr = num(value, bad)?,
            "eta" => self.train.eta = num(value, bad)?,
            "eval_interval" => self.train.eval_interval = num(value, bad)?,
            "eval_samples" => self.train.eval_samples = num(value, bad)?,
            "swd_projections" => self.train.swd_projections = num(value, bad)?,
            "kernel_scale" => self.train.kernel_scale = Some(num(value, bad)?),
            "latent_dim" => self.train.latent_dim = num(value, bad)?,
            "hidden" => self.train.hidden = num(value, bad)?,
            "model_refs" => self.train.model_refs = value.parse()?,
            "track_cosine" => self.train.track_cosine = boolean(value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn tau_base(&self) -> f64 {
        match self.bandwidth {
            BandwidthPolicy::Adaptive { base } | BandwidthPolicy::Fixed { base, .. } => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kernels.is_empty() {
            return bad("kernel list is empty".into());
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a nonempty list of positive integers".into());
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("taus must be a nonempty list of positive reals".into());
        }
        if self.n_refs < 2 {
            return bad("n_refs must be >= 2".into());
        }
        if self.n_queries < 1 || self.repeats < 1 {
            return bad("n_queries and repeats must be >= 1".into());
        }
        self.bandwidth.validate()?;
        match self.experiment {
            ExperimentKind::Train => {
                self.toy_dataset()?;
                self.train_config(KernelKind::Laplace)?;
            }
            _ => {
                self.mixture_dataset()?;
            }
        }
        Ok(())
    }

    pub fn mixture_dataset(&self) -> Result<MixtureDataset> {
        self.dataset.parse()
    }

    pub fn toy_dataset(&self) -> Result<Toy2d> {
        self.dataset.parse()
    }

    /// The trainer config for one kernel, with shared settings applied.
    pub fn train_config(&self, kernel: KernelKind) -> Result<TrainConfig> {
        let t = &self.train;
        let mut tc = TrainConfig::new(self.toy_dataset()?, kernel);
        if let Some(scale) = t.kernel_scale {
            tc.kernel_scale = scale;
        }
        tc.data_batch = t.batch;
        tc.model_batch = t.batch;
        tc.eta = t.eta;
        tc.lr = t.lr;
        tc.steps = t.steps;
        tc.seed = self.seed;
        tc.eval_interval = t.eval_interval;
        tc.eval_samples = t.eval_samples;
        tc.swd_projections = t.swd_projections;
        tc.latent_dim = t.latent_dim;
        tc.hidden = t.hidden;
        tc.model_refs = t.model_refs;
        tc.track_cosine = t.track_cosine;
        tc.validate()?;
        Ok(tc)
    }

    /// Every setting in canonical `key = value` form, for run metadata.
    pub fn echo(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(",");
        let num = |x: f64| x.to_string();
        let mut out = vec![
            ("experiment", self.experiment.name().to_string()),
            ("dataset", self.dataset.clone()),
            ("kernel", join(self.kernels.iter().map(|k| k.name().to_string()).collect())),
        ];
        match self.bandwidth {
            BandwidthPolicy::Adaptive { base } => {
                out.push(("bandwidth", "adaptive".into()));
                out.push(("tau_base", num(base)));
            }
            BandwidthPolicy::Fixed { base, exponent } => {
                out.push(("bandwidth", "fixed".into()));
                out.push(("tau_base", num(base)));
                out.push(("tau_exponent", num(exponent)));
            }
        }
        out.extend([
            ("dims", join(self.dims.iter().map(|d| d.to_string()).collect())),
            ("taus", join(self.taus.iter().map(|t| num(*t)).collect())),
            ("n_refs", self.n_refs.to_string()),
            ("n_queries", self.n_queries.to_string()),
            ("seed", self.seed.to_string()),
            ("repeats", self.repeats.to_string()),
            ("coincidence", self.coincidence.name().to_string()),
            ("ess_min", num(self.ess_min)),
            ("svg", self.svg.to_string()),
        ]);
        if self.experiment == ExperimentKind::Train {
            let t = &self.train;
            out.extend([
                ("steps", t.steps.to_string()),
                ("batch", t.batch.to_string()),
                ("lr", num(t.lr)),
                ("eta", num(t.eta)),
                ("eval_interval", t.eval_interval.to_string()),
                ("eval_samples", t.eval_samples.to_string()),
                ("swd_projections", t.swd_projections.to_string()),
                ("kernel_scale", t.kernel_scale.map_or("dataset_default".into(), num)),
                ("latent_dim", t.latent_dim.to_string()),
                ("hidden", t.hidden.to_string()),
                ("model_refs", t.model_refs.name().to_string()),
                ("track_cosine", t.track_cosine.to_string()),
            ]);
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
