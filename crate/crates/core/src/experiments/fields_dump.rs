use std::fs::File;
use std::io::{BufWriter, Write};

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{ensure_dir, metadata, Written};
use crate::error::{Error, Result};
use crate::fields::{evaluate_fields, FieldEstimate, FieldOptions};
use crate::sampling::{fmt_f64, Role, STREAM_DRAW_P, STREAM_DRAW_Q, STREAM_QUERY};
use crate::trainer::KernelKind;

#[derive(Debug, Clone)]
pub struct FieldDump {
    pub kernel: KernelKind,
    pub dim: usize,
    pub fields: FieldEstimate,
}

#[derive(Debug, Clone)]
pub struct FieldsDumpResult {
    pub dumps: Vec<FieldDump>,
    pub written: Written,
}

/// Per-query field rows at every configured D and kernel, for external
/// plotting. Both kernels see the same references, queries and bandwidth.
pub fn run_fields_dump(cfg: &ExperimentConfig) -> Result<FieldsDumpResult> {
    if cfg.experiment != ExperimentKind::FieldsDump {
        return Err(Error::Config(format!("expected a fields_dump config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    let dataset = cfg.mixture_dataset()?;
    ensure_dir(&cfg.out_dir)?;
    let meta = metadata(cfg);
    let mut written = Written::default();
    let mut dumps = Vec::new();
    let seed = cfg.seed;

    for &dim in &cfg.dims {
        let p = dataset.spec(dim, Role::P, seed)?;
        let q = dataset.spec(dim, Role::Q, seed)?;
        let refs_p = p.sample(cfg.n_refs, seed, STREAM_DRAW_P)?;
        let refs_q = q.sample(cfg.n_refs, seed, STREAM_DRAW_Q)?;
        let queries = q.sample(cfg.n_queries, seed, STREAM_QUERY)?;
        let tau = cfg.bandwidth.resolve(dim, queries.view())?;
        let opts = FieldOptions { coincidence: cfg.coincidence, ..FieldOptions::default() };
        for &kernel in &cfg.kernels {
            let fields = evaluate_fields(&kernel.build(tau)?, queries.view(), refs_p.view(), refs_q.view(), &opts)?;
            let path = cfg.out_dir.join(format!("fields_{}_d{dim}.csv", kernel.name()));
            let mut w = BufWriter::new(File::create(&path)?);
            for line in &meta {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "# run.kernel={}", kernel.name())?;
            writeln!(w, "# run.D={dim}")?;
            writeln!(w, "# run.tau={}", fmt_f64(tau))?;
            writeln!(w, "{}", fields.csv_header())?;
            fields.write_csv_rows(&mut w)?;
            w.flush()?;
            written.push(path);
            dumps.push(FieldDump { kernel, dim, fields });
        }
    }
    Ok(FieldsDumpResult { dumps, written })
}
