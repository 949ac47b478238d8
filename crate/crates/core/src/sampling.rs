//! Seeded samplers for the synthetic targets.
//!
//! Every sampler draws from a ChaCha8 generator keyed by `(seed, stream)`.
//! ChaCha is counter based, so each stream is an independent sequence for the
//! same seed. Stream ids are fixed per sampler and role:
//!
//! | stream | use |
//! |--------|-----|
//! | 1      | Ring MoG plane (shared by both roles) |
//! | 2, 3   | Raw MoG mode directions for roles p, q |
//! | 16, 17 | mixture draws for roles p, q |
//! | 18     | query batches drawn from a mixture |
//! | 32     | prior draws |
//! | 48     | 2-D toy targets |
//!
//! Callers that need further independent batches from the same geometry use
//! [`MixtureSpec::sample`] with their own stream id.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const STREAM_RING_PLANE: u64 = 1;
pub const STREAM_RAW_DIRS_P: u64 = 2;
pub const STREAM_RAW_DIRS_Q: u64 = 3;
pub const STREAM_DRAW_P: u64 = 16;
pub const STREAM_DRAW_Q: u64 = 17;
pub const STREAM_QUERY: u64 = 18;
pub const STREAM_PRIOR: u64 = 32;
pub const STREAM_TOY2D: u64 = 48;

pub const RING_RADIUS: f64 = 3.0;
pub const RING_NOISE_SD: f64 = 0.40;
pub const RING_MODES: usize = 6;
pub const RING_Q_ROTATION: f64 = PI / 6.0;
pub const RAW_P_RADII: [f64; 6] = [1.5, 2.5, 3.0, 4.0, 5.0, 6.0];
pub const RAW_Q_RADII: [f64; 4] = [2.0, 3.5, 4.0, 5.5];
pub const RAW_NOISE_SD: f64 = 0.5;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    DataP,
    ModelQ,
    Prior,
    Generated,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::DataP => "data_p",
            Label::ModelQ => "model_q",
            Label::Prior => "prior",
            Label::Generated => "generated",
        })
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data_p" => Ok(Label::DataP),
            "model_q" => Ok(Label::ModelQ),
            "prior" => Ok(Label::Prior),
            "generated" => Ok(Label::Generated),
            other => Err(Error::Parse(format!("unknown cloud label '{other}'"))),
        }
    }
}

/// Which side of a p/q pair a mixture describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    P,
    Q,
}

impl Role {
    pub fn label(self) -> Label {
        match self {
            Role::P => Label::DataP,
            Role::Q => Label::ModelQ,
        }
    }

    fn draw_stream(self) -> u64 {
        match self {
            Role::P => STREAM_DRAW_P,
            Role::Q => STREAM_DRAW_Q,
        }
    }
}

/// `N x D` sample matrix plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub data: Array2<f64>,
    pub seed: u64,
    pub label: Label,
}

impl PointCloud {
    pub fn new(data: Array2<f64>, seed: u64, label: Label) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("point cloud needs at least one row and one column".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("point cloud contains non-finite values".into()));
        }
        Ok(Self { data, seed, label })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Writes the cloud as CSV: a `dim=D,n=N,seed=S,label=L` header, then one
    /// row per point with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dim={},n={},seed={},label={}", self.dim(), self.len(), self.seed, self.label)?;
        for row in self.data.rows() {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty cloud file".into()))??;
        let (mut dim, mut n, mut seed, mut label) = (None, None, None, None);
        for field in header.trim().split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header field '{field}'")))?;
            let bad = |_| Error::Parse(format!("bad header value '{field}'"));
            match key {
                "dim" => dim = Some(value.parse::<usize>().map_err(bad)?),
                "n" => n = Some(value.parse::<usize>().map_err(bad)?),
                "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
                "label" => label = Some(value.parse::<Label>()?),
                other => return Err(Error::Parse(format!("unknown header key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("header is missing '{k}'"));
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        let mut values = Vec::with_capacity(dim * n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split(',') {
                values.push(tok.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{tok}': {e}")))?);
            }
            if values.len() - before != dim {
                return Err(Error::Parse(format!("row has {} values, expected {dim}", values.len() - before)));
            }
        }
        if values.len() != dim * n {
            return Err(Error::Parse(format!("expected {n} rows, found {}", values.len() / dim.max(1))));
        }
        let data = Array2::from_shape_vec((n, dim), values).map_err(|e| Error::Parse(e.to_string()))?;
        PointCloud::new(data, seed.ok_or_else(|| missing("seed"))?, label.ok_or_else(|| missing("label"))?)
    }
}

/// Locale-independent 17-significant-digit formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Finite mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub centers: Array2<f64>,
    pub noise_sd: f64,
    pub weights: Vec<f64>,
    pub label: Label,
}

impl MixtureSpec {
    pub fn new(centers: Array2<f64>, noise_sd: f64, weights: Option<Vec<f64>>, label: Label) -> Result<Self> {
        let k = centers.nrows();
        if k == 0 {
            return Err(Error::InvalidInput("mixture needs at least one center".into()));
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidInput(format!("noise_sd must be >= 0, got {noise_sd}")));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        if weights.len() != k || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("mixture weights must be nonnegative, one per center".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("mixture weights must sum to 1".into()));
        }
        Ok(Self { centers, noise_sd, weights, label })
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Result<Self> {
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidInput(format!("noise_sd must be >= 0, got {noise_sd}")));
        }
        self.noise_sd = noise_sd;
        Ok(self)
    }

    /// Draws `n` points; also returns the mode index of each point.
    pub fn sample_with_modes<R: Rng>(&self, n: usize, rng: &mut R) -> Result<(Array2<f64>, Vec<usize>)> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let d = self.dim();
        let pick = WeightedIndex::new(&self.weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut data = Array2::zeros((n, d));
        let mut modes = Vec::with_capacity(n);
        for mut row in data.rows_mut() {
            let k = pick.sample(rng);
            modes.push(k);
            for (v, c) in row.iter_mut().zip(self.centers.row(k)) {
                let z: f64 = rng.sample(StandardNormal);
                *v = c + self.noise_sd * z;
            }
        }
        Ok((data, modes))
    }

    pub fn sample(&self, n: usize, seed: u64, stream: u64) -> Result<PointCloud> {
        let (data, _) = self.sample_with_modes(n, &mut stream_rng(seed, stream))?;
        PointCloud::new(data, seed, self.label)
    }
}

fn gaussian_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v = gaussian_vector(dim, rng);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Seeded orthonormal pair spanning a random 2-plane in `R^dim`.
pub fn random_plane(dim: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!("a plane needs D >= 2, got {dim}")));
    }
    let mut rng = stream_rng(seed, STREAM_RING_PLANE);
    let e1 = unit_vector(dim, &mut rng);
    loop {
        let v = gaussian_vector(dim, &mut rng);
        let proj: f64 = v.iter().zip(&e1).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = v.iter().zip(&e1).map(|(a, b)| a - proj * b).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return Ok((e1, w.into_iter().map(|x| x / norm).collect()));
        }
    }
}

/// Six modes on a radius-3 ring in a seeded plane; role q rotates the ring by
/// pi/6 within the same plane.
pub fn ring_mog_spec(dim: usize, role: Role, seed: u64) -> Result<MixtureSpec> {
    let (e1, e2) = random_plane(dim, seed)?;
    let offset = match role {
        Role::P => 0.0,
        Role::Q => RING_Q_ROTATION,
    };
    let mut centers = Array2::zeros((RING_MODES, dim));
    for (k, mut row) in centers.rows_mut().into_iter().enumerate() {
        let theta = 2.0 * PI * k as f64 / RING_MODES as f64 + offset;
        let (s, c) = theta.sin_cos();
        for (i, v) in row.iter_mut().enumerate() {
            *v = RING_RADIUS * (c * e1[i] + s * e2[i]);
        }
    }
    MixtureSpec::new(centers, RING_NOISE_SD, None, role.label())
}

/// Modes at fixed radii along independent seeded directions (six for p, four
/// for q). Directions are redrawn for every `(dim, seed)`.
pub fn raw_mog_spec(dim: usize, role: Role, seed: u64) -> Result<MixtureSpec> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    let (radii, stream): (&[f64], u64) = match role {
        Role::P => (&RAW_P_RADII, STREAM_RAW_DIRS_P),
        Role::Q => (&RAW_Q_RADII, STREAM_RAW_DIRS_Q),
    };
    let mut rng = stream_rng(seed, stream);
    let mut centers = Array2::zeros((radii.len(), dim));
    for (row, &r) in centers.rows_mut().into_iter().zip(radii) {
        let u = unit_vector(dim, &mut rng);
        for (v, ui) in row.into_iter().zip(u) {
            *v = r * ui;
        }
    }
    MixtureSpec::new(centers, RAW_NOISE_SD, None, role.label())
}

pub fn sample_ring_mog(dim: usize, n: usize, role: Role, seed: u64) -> Result<PointCloud> {
    ring_mog_spec(dim, role, seed)?.sample(n, seed, role.draw_stream())
}

pub fn sample_raw_mog(dim: usize, n: usize, role: Role, seed: u64) -> Result<PointCloud> {
    raw_mog_spec(dim, role, seed)?.sample(n, seed, role.draw_stream())
}

/// Synthetic mixture families used by the field experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureDataset {
    RingMog,
    RawMog,
}

impl MixtureDataset {
    pub fn spec(self, dim: usize, role: Role, seed: u64) -> Result<MixtureSpec> {
        match self {
            MixtureDataset::RingMog => ring_mog_spec(dim, role, seed),
            MixtureDataset::RawMog => raw_mog_spec(dim, role, seed),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MixtureDataset::RingMog => "ring_mog",
            MixtureDataset::RawMog => "raw_mog",
        }
    }
}

impl FromStr for MixtureDataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring_mog" => Ok(MixtureDataset::RingMog),
            "raw_mog" => Ok(MixtureDataset::RawMog),
            other => Err(Error::InvalidInput(format!("unknown mixture dataset '{other}'"))),
        }
    }
}

/// The 2-D training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toy2d {
    RingMog,
    SwissRoll,
    Checkerboard,
    TwoMoons,
}

pub const SWISS_ROLL_NOISE_SD: f64 = 0.05;
pub const TWO_MOONS_NOISE_SD: f64 = 0.05;

impl Toy2d {
    pub const ALL: [Toy2d; 4] = [Toy2d::RingMog, Toy2d::SwissRoll, Toy2d::Checkerboard, Toy2d::TwoMoons];

    pub fn name(self) -> &'static str {
        match self {
            Toy2d::RingMog => "ring_mog",
            Toy2d::SwissRoll => "swiss_roll",
            Toy2d::Checkerboard => "checkerboard",
            Toy2d::TwoMoons => "two_moons",
        }
    }

    /// Default `(noise sd)` of the target; the ring uses its mixture noise.
    pub fn default_noise(self) -> f64 {
        match self {
            Toy2d::RingMog => RING_NOISE_SD,
            Toy2d::SwissRoll => SWISS_ROLL_NOISE_SD,
            Toy2d::Checkerboard => 0.0,
            Toy2d::TwoMoons => TWO_MOONS_NOISE_SD,
        }
    }

    /// Draws `n` points with an explicit noise level from a caller-owned rng.
    /// The ring's plane is fixed by `geometry_seed`.
    pub fn draw<R: Rng>(self, n: usize, noise_sd: f64, geometry_seed: u64, rng: &mut R) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let mut out = Array2::zeros((n, 2));
        match self {
            Toy2d::RingMog => {
                let spec = ring_mog_spec(2, Role::P, geometry_seed)?.with_noise_sd(noise_sd)?;
                return Ok(spec.sample_with_modes(n, rng)?.0);
            }
            Toy2d::SwissRoll => {
                for mut row in out.rows_mut() {
                    let t = rng.random_range(1.5 * PI..4.5 * PI);
                    let (s, c) = t.sin_cos();
                    row[0] = t * c / 3.0 + noise_sd * rng.sample::<f64, _>(StandardNormal);
                    row[1] = t * s / 3.0 + noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Toy2d::Checkerboard => {
                let black = checkerboard_black_cells();
                for mut row in out.rows_mut() {
                    let (i, j) = black[rng.random_range(0..black.len())];
                    row[0] = -2.0 + i as f64 + rng.random::<f64>();
                    row[1] = -2.0 + j as f64 + rng.random::<f64>();
                }
            }
            Toy2d::TwoMoons => {
                for mut row in out.rows_mut() {
                    let t = rng.random_range(0.0..PI);
                    let (s, c) = t.sin_cos();
                    let (x, y) = if rng.random::<bool>() { (c, s) } else { (1.0 - c, 0.5 - s) };
                    row[0] = x + noise_sd * rng.sample::<f64, _>(StandardNormal);
                    row[1] = y + noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        Ok(out)
    }
}

/// Cells `(i, j)` of the 4x4 board on `[-2, 2]^2` with `i + j` even; cell
/// `(i, j)` covers `[-2 + i, -1 + i] x [-2 + j, -1 + j]`.
pub fn checkerboard_black_cells() -> Vec<(usize, usize)> {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|(i, j)| (i + j) % 2 == 0).collect()
}

impl FromStr for Toy2d {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Toy2d::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown 2-D dataset '{s}'")))
    }
}

pub fn sample_toy2d(name: &str, n: usize, seed: u64) -> Result<PointCloud> {
    let target: Toy2d = name.parse()?;
    let data = target.draw(n, target.default_noise(), seed, &mut stream_rng(seed, STREAM_TOY2D))?;
    PointCloud::new(data, seed, Label::DataP)
}

pub fn draw_prior<R: Rng>(m: usize, n: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || rng.sample(StandardNormal))
}

/// `n` standard normal vectors in `R^m`.
pub fn sample_prior(m: usize, n: usize, seed: u64) -> Result<PointCloud> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("prior needs m >= 1 and n >= 1".into()));
    }
    PointCloud::new(draw_prior(m, n, &mut stream_rng(seed, STREAM_PRIOR)), seed, Label::Prior)
}
