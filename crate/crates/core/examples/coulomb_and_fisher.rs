//! Unnormalized kernel force between p and q next to the normalized drift,
//! and a reverse Fisher estimate under q.

use driftscore::fields::{coulomb_force_field, drift_field};
use driftscore::metrics::reverse_fisher_estimate;
use driftscore::sampling::{ring_mog_spec, STREAM_DRAW_P, STREAM_DRAW_Q, STREAM_QUERY};
use driftscore::{RadialKernel, Result, Role};

fn main() -> Result<()> {
    let dim = 2;
    let p = ring_mog_spec(dim, Role::P, 0)?.sample(2000, 0, STREAM_DRAW_P)?;
    let q = ring_mog_spec(dim, Role::Q, 0)?.sample(2000, 0, STREAM_DRAW_Q)?;
    let queries = ring_mog_spec(dim, Role::Q, 0)?.sample(4, 0, STREAM_QUERY)?;
    let k = RadialKernel::laplace(0.5)?;
    for x in queries.view().rows() {
        let x = x.to_vec();
        let force = coulomb_force_field(&k, &x, p.view(), q.view())?;
        let drift = drift_field(&k, &x, p.view(), q.view(), 1.0)?;
        println!("x=({:+.3}, {:+.3}) force=({:+.4}, {:+.4}) drift=({:+.4}, {:+.4})", x[0], x[1], force[0], force[1], drift[0], drift[1]);
    }
    let fisher = reverse_fisher_estimate(&k, q.view(), p.view(), q.view())?;
    println!("reverse Fisher under q: {:.4} ({} flagged)", fisher.value, fisher.flagged);
    Ok(())
}
