use driftscore::fields::{offscore_residual, query_field, softmax_weights};
use driftscore::metrics::{alignment_errors, loglog_slope, oracle_scale, row_cosines, sliced_wasserstein};
use driftscore::{Coincidence, RadialKernel};
use ndarray::Array2;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// A query, a reference set and a bandwidth.
fn config() -> impl Strategy<Value = (Vec<f64>, Array2<f64>, f64)> {
    (1usize..6, 1usize..25).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-3.0..3.0f64, d),
            prop::collection::vec(-3.0..3.0f64, d * n),
            0.2..3.0f64,
        )
            .prop_map(move |(x, r, tau)| (x, Array2::from_shape_vec((n, d), r).unwrap(), tau))
    })
}

fn cloud(rows: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-4.0..4.0f64, rows * d).prop_map(move |v| Array2::from_shape_vec((rows, d), v).unwrap())
}

proptest! {
    #[test]
    fn gaussian_mean_shift_is_scaled_score((x, refs, tau) in config()) {
        let k = RadialKernel::gaussian(tau).unwrap();
        let f = query_field(&k, &x, refs.view(), None, Coincidence::Exclude).unwrap();
        let diff: Vec<f64> = f.mean_shift.iter().zip(&f.score).map(|(v, s)| v - tau * tau * s).collect();
        prop_assert!(norm(&diff) <= 1e-10 * norm(&f.mean_shift) + 1e-14);
        prop_assert!(norm(&f.delta) <= 1e-10 * (1.0 + norm(&f.mean_shift)));
    }

    #[test]
    fn laplace_decomposition_reconstructs((x, refs, tau) in config()) {
        let k = RadialKernel::laplace(tau).unwrap();
        let f = query_field(&k, &x, refs.view(), None, Coincidence::Exclude).unwrap();
        let resid: Vec<f64> =
            (0..x.len()).map(|i| f.mean_shift[i] - f.alpha * tau * f.score[i] - f.delta[i]).collect();
        prop_assert!(norm(&resid) <= 1e-10 * (1.0 + norm(&f.mean_shift)));
    }

    #[test]
    fn off_score_residual_is_orthogonal((x, refs, tau) in config()) {
        let k = RadialKernel::laplace(tau).unwrap();
        let f = query_field(&k, &x, refs.view(), None, Coincidence::Exclude).unwrap();
        let off = offscore_residual(&f.delta, &f.score);
        if !off.degenerate {
            let dot: f64 = off.residual.iter().zip(&f.score).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() <= 1e-10 * norm(&off.residual) * norm(&f.score) + 1e-300);
        }
    }

    #[test]
    fn fields_are_translation_equivariant((x, refs, tau) in config(), shift in -5.0..5.0f64) {
        for k in [RadialKernel::gaussian(tau).unwrap(), RadialKernel::laplace(tau).unwrap()] {
            let a = query_field(&k, &x, refs.view(), None, Coincidence::Exclude).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let rs = refs.mapv(|v| v + shift);
            let b = query_field(&k, &xs, rs.view(), None, Coincidence::Exclude).unwrap();
            prop_assert!(dist(&a.mean_shift, &b.mean_shift) <= 1e-9 * (1.0 + norm(&a.mean_shift)));
            prop_assert!(dist(&a.score, &b.score) <= 1e-9 * (1.0 + norm(&a.score)));
        }
    }

    #[test]
    fn fields_scale_with_the_bandwidth((x, refs, tau) in config(), lambda in 0.1..10.0f64) {
        // x, refs, tau -> lambda x, lambda refs, lambda tau: V scales by lambda, s by 1/lambda
        for k in [RadialKernel::gaussian(tau).unwrap(), RadialKernel::laplace(tau).unwrap()] {
            let a = query_field(&k, &x, refs.view(), None, Coincidence::Exclude).unwrap();
            let ks = k.with_tau(lambda * tau).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            let b = query_field(&ks, &xs, refs.mapv(|v| v * lambda).view(), None, Coincidence::Exclude).unwrap();
            let va: Vec<f64> = a.mean_shift.iter().map(|v| v * lambda).collect();
            let sa: Vec<f64> = a.score.iter().map(|v| v / lambda).collect();
            prop_assert!(dist(&va, &b.mean_shift) <= 1e-9 * (1.0 + norm(&va)));
            prop_assert!(dist(&sa, &b.score) <= 1e-9 * (1.0 + norm(&sa)));
        }
    }

    #[test]
    fn weights_form_a_simplex_even_when_far((x, refs, tau) in config(), far in 0.0..1e4f64) {
        let k = RadialKernel::laplace(tau).unwrap();
        let w = softmax_weights(&k, &x, refs.mapv(|v| v + far).view()).unwrap();
        prop_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn oracle_scale_minimizes_the_error(drift in cloud(12, 3), score in cloud(12, 3), eps in 1e-3..1.0f64) {
        let c = oracle_scale(drift.view(), score.view()).unwrap();
        let at = |c: f64| alignment_errors(drift.view(), score.view(), c).unwrap().0;
        let best = at(c);
        prop_assert!(best <= at(c + eps) + 1e-12);
        prop_assert!(best <= at(c - eps) + 1e-12);
    }

    #[test]
    fn row_cosines_are_bounded(a in cloud(10, 4), b in cloud(10, 4)) {
        for c in row_cosines(a.view(), b.view()).unwrap().into_iter().flatten() {
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn planted_power_laws_are_recovered(k in -3.0..3.0f64, c in 0.01..100.0f64) {
        let xs = [4.0, 8.0, 16.0, 64.0, 1024.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(k)).collect();
        let (slope, intercept) = loglog_slope(&xs, &ys).unwrap();
        prop_assert!((slope - k).abs() <= 1e-10);
        prop_assert!((intercept - c.ln()).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swd_is_a_symmetric_pseudometric(a in cloud(40, 2), b in cloud(40, 2), c in cloud(40, 2), seed in 0u64..1000) {
        let d = |x: &Array2<f64>, y: &Array2<f64>| sliced_wasserstein(x.view(), y.view(), 32, seed).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }
}
