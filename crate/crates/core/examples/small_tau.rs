//! Relative error of `V ~ c_D tau^2 s` as the bandwidth shrinks, at D = 2.
//!
//! `cargo run --release --example small_tau [out_dir]`

use driftscore::experiments::{run_smalltau, ExperimentConfig, ExperimentKind};
use driftscore::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::SmallTau);
    cfg.out_dir = std::env::args().nth(1).unwrap_or_else(|| "out/example_small_tau".into()).into();
    cfg.set("n_refs", "20000")?;
    cfg.set("repeats", "1")?;
    let res = run_smalltau(&cfg)?;
    for r in &res.rows {
        println!(
            "{:<8} tau={:<5} c={:.3} e={:.3e} ess={:.0}{}",
            r.kernel.name(),
            r.tau,
            r.c,
            r.e_mean,
            r.mean_ess,
            if r.flagged { " (flagged)" } else { "" }
        );
    }
    for f in &res.fits {
        println!("{} slope {:.3}", f.kernel.name(), f.fit.slope);
    }
    Ok(())
}
