//! Gaussian mean shift is exactly tau^2 times the kernel score; the Laplace
//! mean shift splits into a preconditioned score plus a covariance residual.

use driftscore::fields::{offscore_residual, query_field};
use driftscore::sampling::{ring_mog_spec, STREAM_DRAW_P, STREAM_QUERY};
use driftscore::{Coincidence, RadialKernel, Result, Role};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn main() -> Result<()> {
    let dim = 16;
    let refs = ring_mog_spec(dim, Role::P, 7)?.sample(2000, 7, STREAM_DRAW_P)?;
    let queries = ring_mog_spec(dim, Role::P, 7)?.sample(5, 7, STREAM_QUERY)?;
    let tau = 1.5;

    let gauss = RadialKernel::gaussian(tau)?;
    let lap = RadialKernel::laplace(tau)?;
    for x in queries.view().rows() {
        let x = x.to_vec();
        let g = query_field(&gauss, &x, refs.view(), None, Coincidence::Exclude)?;
        let diff: Vec<f64> = g.mean_shift.iter().zip(&g.score).map(|(v, s)| v - tau * tau * s).collect();
        let l = query_field(&lap, &x, refs.view(), None, Coincidence::Exclude)?;
        let resid: Vec<f64> = (0..dim).map(|k| l.mean_shift[k] - l.alpha * tau * l.score[k] - l.delta[k]).collect();
        let off = offscore_residual(&l.delta, &l.score);
        println!(
            "|V|={:.4}  gaussian |V - tau^2 s|={:.1e}  laplace alpha={:.4} |delta|={:.4} |delta_perp|={:.4} recon={:.1e}",
            norm(&g.mean_shift),
            norm(&diff),
            l.alpha,
            norm(&l.delta),
            norm(&off.residual),
            norm(&resid),
        );
    }
    Ok(())
}
