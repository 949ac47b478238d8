use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::sampling::fmt_f64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn query_source(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::SmallTau => "independent_p_draws",
        ExperimentKind::Train => "generated_batch",
        _ => "independent_q_draws",
    }
}

/// Fixed choices the results depend on, echoed into every CSV header.
pub fn switches(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let mut out = vec![
        ("coincidence", cfg.coincidence.name().to_string()),
        ("query_source", query_source(cfg.experiment).into()),
        ("raw_mog_directions", "resampled_per_dim_and_seed".into()),
        ("alignment_scale", "c_theory".into()),
        ("cosine_degenerate_rows", "skip_and_count".into()),
        ("repeat_seeds", "seed_plus_i".into()),
    ];
    if cfg.experiment == ExperimentKind::Train {
        out.extend([
            ("model_refs", cfg.train.model_refs.name().to_string()),
            ("eta", fmt_f64(cfg.train.eta)),
            ("activation", "tanh".into()),
            ("optimizer", "adam".into()),
            ("swd_order", "w2_per_projection_mean".into()),
            ("mmd_estimator", "biased_v_statistic".into()),
            ("mmd_bandwidth", "median_heuristic".into()),
            ("score_transport_scale", "c_theory_per_batch".into()),
        ]);
    }
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// `#`-prefixed metadata lines: version, seed, config echo, switches.
pub fn metadata(cfg: &ExperimentConfig) -> Vec<String> {
    let mut lines = vec![
        format!("driftscore_version={VERSION}"),
        format!("experiment={}", cfg.experiment),
        format!("seed={}", cfg.seed),
    ];
    lines.extend(cfg.echo().into_iter().map(|(k, v)| format!("config.{k}={v}")));
    lines.extend(switches(cfg).into_iter().map(|(k, v)| format!("switch.{k}={v}")));
    lines
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes metadata comments, a header row and pre-formatted rows.
pub fn write_csv(path: &Path, meta: &[String], header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in meta {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn strings<S: ToString>(items: &[S]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Output files written by a run, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Written(pub Vec<PathBuf>);

impl Written {
    pub(crate) fn push(&mut self, p: PathBuf) {
        self.0.push(p);
    }
}
