//! Short drifting run on a 2-D target with both kernels.
//!
//! `cargo run --release --example train_toy2d [steps] [dataset]`

use driftscore::sampling::Toy2d;
use driftscore::trainer::{train, KernelKind};
use driftscore::{Result, TrainConfig};

fn main() -> Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let dataset: Toy2d = std::env::args().nth(2).unwrap_or_else(|| "ring_mog".into()).parse()?;
    for kernel in [KernelKind::Laplace, KernelKind::Gaussian] {
        let mut cfg = TrainConfig::new(dataset, kernel);
        cfg.steps = steps;
        cfg.eval_interval = (steps / 4).max(1);
        cfg.data_batch = 512;
        cfg.model_batch = 512;
        cfg.eval_samples = 2000;
        let out = train(&cfg)?;
        println!("{} on {}:", kernel.name(), dataset.name());
        for r in std::iter::once(&out.initial).chain(&out.timeline) {
            println!("  step {:<5} loss={:.3e} swd={:.4} mmd={:.4}", r.step, r.loss, r.swd, r.mmd);
        }
    }
    Ok(())
}
