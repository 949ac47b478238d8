//! Per-query fields on a 2-D grid of q samples, written as CSV for plotting.
//!
//! `cargo run --release --example fields_dump [out_dir]`

use driftscore::experiments::{run_fields_dump, ExperimentConfig, ExperimentKind};
use driftscore::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::FieldsDump);
    cfg.out_dir = std::env::args().nth(1).unwrap_or_else(|| "out/example_fields_dump".into()).into();
    cfg.set("kernels", "laplace, gaussian")?;
    let res = run_fields_dump(&cfg)?;
    for d in &res.dumps {
        let f = &d.fields;
        let max_drift = f.drift.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("{} D={} rows={} tau={:.4} max |drift_k|={max_drift:.4}", d.kernel.name(), d.dim, f.len(), f.tau);
    }
    for p in &res.written.0 {
        println!("wrote {}", p.display());
    }
    Ok(())
}
