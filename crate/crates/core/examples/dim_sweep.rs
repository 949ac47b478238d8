//! A reduced alignment sweep over D with the Laplace kernel.
//!
//! `cargo run --release --example dim_sweep [out_dir]`

use driftscore::experiments::{run_dim_sweep, ExperimentConfig, ExperimentKind};
use driftscore::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::DimSweep);
    cfg.out_dir = std::env::args().nth(1).unwrap_or_else(|| "out/example_dim_sweep".into()).into();
    cfg.set("dims", "4, 16, 64, 256")?;
    cfg.set("n_refs", "1000")?;
    cfg.set("n_queries", "200")?;
    cfg.set("repeats", "2")?;
    let res = run_dim_sweep(&cfg)?;
    for sweep in &res.sweeps {
        println!("{}:", sweep.kernel.name());
        for row in &sweep.rows {
            println!(
                "  D={:<4} abs_err={:.3e} rel_err={:.4} cos={:.4} alpha_ratio={:.4} C_ratio={:.4}",
                row.dim,
                row.get("abs_err"),
                row.get("rel_err"),
                row.get("mean_cos"),
                row.get("alpha_ratio"),
                row.get("C_ratio"),
            );
        }
        for s in &sweep.slopes {
            println!("  slope {:<16} {:.3}", s.metric, s.slope);
        }
    }
    for p in &res.written.0 {
        println!("wrote {}", p.display());
    }
    Ok(())
}
