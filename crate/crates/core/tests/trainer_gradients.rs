use driftscore::fields::{evaluate_fields, FieldOptions};
use driftscore::sampling::{draw_prior, stream_rng};
use driftscore::trainer::{
    drift_at_samples, drifting_loss_and_semigrad, score_transport_semigrad, Activation, Adam, ModelRefs,
    OptimizerState,
};
use driftscore::{Coincidence, Mlp, RadialKernel};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Central differences of `mean_i <G_i, f(Z_i)>` in every parameter.
fn finite_difference(gen: &Mlp, z: &Array2<f64>, g: &Array2<f64>, h: f64) -> Vec<f64> {
    let objective = |m: &Mlp| (m.forward(z.view()).unwrap() * g).sum() / z.nrows() as f64;
    let mut work = gen.clone();
    (0..gen.params().len())
        .map(|i| {
            let p0 = work.params()[i];
            work.params_mut()[i] = p0 + h;
            let up = objective(&work);
            work.params_mut()[i] = p0 - h;
            let down = objective(&work);
            work.params_mut()[i] = p0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn vjp_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = stream_rng(seed, 500);
        let latent = rng.random_range(1..5);
        let hidden = rng.random_range(2..9);
        let out = rng.random_range(1..4);
        let gen = Mlp::init(&[latent, hidden, hidden, out], Activation::Tanh, &mut rng).unwrap();
        let batch = rng.random_range(1..6);
        let z = gaussian_matrix(batch, latent, &mut rng);
        let g = gaussian_matrix(batch, out, &mut rng);
        let analytic = gen.vjp(z.view(), g.view()).unwrap();
        let numeric = finite_difference(&gen, &z, &g, 1e-5);
        let e = rel(&analytic, &numeric);
        assert!(e <= 1e-5, "seed {seed}: relative error {e}");
        worst = worst.max(e);
    }
    assert!(worst > 0.0);
}

fn batch(seed: u64, d: usize, n: usize) -> (Mlp, Array2<f64>, Array2<f64>) {
    let mut rng = stream_rng(seed, 501);
    let gen = Mlp::init(&[4, 12, 12, d], Activation::Tanh, &mut rng).unwrap();
    let z = draw_prior(4, n, &mut rng);
    let refs = gaussian_matrix(n + 7, d, &mut rng);
    (gen, z, refs)
}

#[test]
fn gaussian_drifting_equals_score_transport() {
    for seed in 0..10u64 {
        let (gen, z, refs) = batch(seed, 2 + seed as usize % 3, 24);
        let tau = 0.5 + 0.2 * seed as f64;
        let k = RadialKernel::gaussian(tau).unwrap();
        for refs_policy in [ModelRefs::LeaveOneOut, ModelRefs::IncludeSelf] {
            let drift = drifting_loss_and_semigrad(&gen, z.view(), refs.view(), &k, 0.7, refs_policy).unwrap();
            let st = score_transport_semigrad(&gen, z.view(), refs.view(), &k, 0.7, tau * tau, refs_policy).unwrap();
            let e = rel(&drift.grad, &st);
            assert!(e <= 1e-10, "seed {seed} {refs_policy:?}: {e}");
        }
    }
}

#[test]
fn loss_is_mean_squared_drift_from_the_field_driver() {
    for seed in 0..6u64 {
        let (gen, z, refs) = batch(seed, 3, 30);
        for k in [RadialKernel::gaussian(0.8).unwrap(), RadialKernel::laplace(0.8).unwrap()] {
            let step = drifting_loss_and_semigrad(&gen, z.view(), refs.view(), &k, 1.3, ModelRefs::LeaveOneOut).unwrap();
            let x = gen.forward(z.view()).unwrap();
            let opts = FieldOptions { coincidence: Coincidence::Exclude, q_leave_one_out: true, eta: 1.3 };
            let f = evaluate_fields(&k, x.view(), refs.view(), x.view(), &opts).unwrap();
            let expected = f.drift.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64;
            assert!((step.loss - expected).abs() <= 1e-12 * expected.max(1.0), "{} vs {expected}", step.loss);
        }
    }
}

#[test]
fn copied_batch_is_stationary() {
    for seed in 0..4u64 {
        let (gen, z, _) = batch(seed, 2, 20);
        let x = gen.forward(z.view()).unwrap();
        for k in [RadialKernel::gaussian(0.3).unwrap(), RadialKernel::laplace(0.3).unwrap()] {
            for policy in [ModelRefs::LeaveOneOut, ModelRefs::IncludeSelf] {
                let (drift, _) = drift_at_samples(&k, x.view(), x.view(), 1.0, policy).unwrap();
                assert!(drift.iter().all(|v| *v == 0.0), "{} {policy:?}", k.name());
                let step = drifting_loss_and_semigrad(&gen, z.view(), x.view(), &k, 1.0, policy).unwrap();
                assert_eq!(step.loss, 0.0);
                assert!(step.grad.iter().all(|g| *g == 0.0));
            }
        }
    }
}

#[test]
fn adam_first_step_and_determinism() {
    let adam = Adam::new(0.01);
    let mut p = vec![1.0];
    let mut state = OptimizerState::new(1);
    adam.step(&mut p, &[1.0], &mut state).unwrap();
    assert!((p[0] - 0.99).abs() < 1e-9);

    let mut a = vec![0.3, -0.2, 0.5];
    let mut b = a.clone();
    let (mut sa, mut sb) = (OptimizerState::new(3), OptimizerState::new(3));
    for g in [[0.1, -2.0, 0.0], [0.4, 0.4, 1e-3]] {
        adam.step(&mut a, &g, &mut sa).unwrap();
        adam.step(&mut b, &g, &mut sb).unwrap();
    }
    assert_eq!(a, b);

    let before = a.clone();
    adam.step(&mut a, &[0.0; 3], &mut OptimizerState::new(3)).unwrap();
    assert_eq!(a, before);
}
