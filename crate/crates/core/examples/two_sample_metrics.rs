//! SWD and MMD between two toy targets and between two draws of the same one.

use driftscore::metrics::{rbf_mmd, sliced_wasserstein};
use driftscore::sampling::sample_toy2d;
use driftscore::Result;

fn main() -> Result<()> {
    let a = sample_toy2d("ring_mog", 3000, 0)?;
    let b = sample_toy2d("ring_mog", 3000, 1)?;
    let c = sample_toy2d("two_moons", 3000, 0)?;
    for (name, other) in [("ring vs ring", &b), ("ring vs moons", &c)] {
        let swd = sliced_wasserstein(a.view(), other.view(), 200, 0)?;
        let mmd = rbf_mmd(a.view(), other.view(), None)?;
        println!("{name:<14} swd={swd:.4} mmd={mmd:.4}");
    }
    Ok(())
}
