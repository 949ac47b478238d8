//! Cosine between the drifting semi-gradient and the score-transport
//! semi-gradient of a random generator, for both kernels.

use driftscore::sampling::{draw_prior, ring_mog_spec, stream_rng, STREAM_DRAW_P};
use driftscore::trainer::{semigrad_cosine, ModelRefs};
use driftscore::{Mlp, RadialKernel, Result, Role};
use ndarray::Array2;

fn mean_norm(a: &Array2<f64>) -> f64 {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / a.nrows() as f64
}

fn main() -> Result<()> {
    let dim = 64;
    let mut gen = Mlp::generator(32, 128, dim, &mut stream_rng(0, 1))?;
    let z = draw_prior(32, 512, &mut stream_rng(0, 2));
    let refs = ring_mog_spec(dim, Role::P, 0)?.sample(512, 0, STREAM_DRAW_P)?;

    // put generated samples on the same norm shell as the data
    let s = mean_norm(&refs.data) / mean_norm(&gen.forward(z.view())?);
    let (mut w, mut b) = gen.layer_mut(gen.n_layers() - 1);
    w *= s;
    b *= s;
    let tau = 0.3 * mean_norm(&gen.forward(z.view())?);

    for kernel in [RadialKernel::gaussian(tau)?, RadialKernel::laplace(tau)?] {
        let c = semigrad_cosine(&gen, z.view(), refs.view(), &kernel, 1.0, ModelRefs::LeaveOneOut)?;
        println!("{:<8} D={dim} tau={tau:.3} cosine={:.6} C={:.4}", kernel.name(), c.cosine, c.c_theory);
    }
    Ok(())
}
