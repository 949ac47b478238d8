use driftscore::fields::{kernel_score, mean_shift, softmax_weights};
use driftscore::sampling::{random_plane, sample_prior, sample_raw_mog, sample_ring_mog, stream_rng, RAW_NOISE_SD, RAW_P_RADII};
use driftscore::{laplace_moment_ratio, RadialKernel, Role};
use ndarray::array;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

/// Monte Carlo `E[z_1^2]` under the density proportional to `exp(-|z|)` in
/// `R^D`: the radius is Gamma(D, 1), the direction uniform.
fn mc_laplace_second_moment(dim: usize, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 900);
    let gamma = Gamma::new(dim as f64, 1.0).unwrap();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let r: f64 = rng.sample(gamma);
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z1 = r * g[0] / norm;
        sum += z1 * z1;
        sum2 += z1.powi(4);
    }
    let mean = sum / n as f64;
    let var = sum2 / n as f64 - mean * mean;
    (mean, (var / n as f64).sqrt())
}

#[test]
fn moment_ratio_matches_monte_carlo() {
    for dim in [1usize, 2, 3] {
        let (mc, se) = mc_laplace_second_moment(dim, 400_000, dim as u64);
        let c = laplace_moment_ratio(dim).unwrap();
        assert!((c - mc).abs() <= 4.0 * se, "D={dim}: quadrature {c}, monte carlo {mc} +- {se}");
    }
}

#[test]
fn moment_ratio_hand_values() {
    // E[r^2] = D (D + 1) for a Gamma(D, 1) radius, so c_D = D + 1
    for dim in [1usize, 2, 3, 8, 64, 512] {
        let c = laplace_moment_ratio(dim).unwrap();
        assert!((c - (dim as f64 + 1.0)).abs() <= 1e-6 * (dim as f64 + 1.0), "D={dim}: {c}");
    }
}

#[test]
fn laplace_weights_and_fields_by_hand() {
    let k = RadialKernel::laplace(1.0).unwrap();
    let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
    let (w1, w2) = (e1 / (e1 + e2), e2 / (e1 + e2));
    let refs = array![[1.0, 0.0], [2.0, 0.0]];
    let w = softmax_weights(&k, &[0.0, 0.0], refs.view()).unwrap();
    assert!((w[0] - w1).abs() < 1e-15 && (w[1] - w2).abs() < 1e-15);
    assert!((w1 - 0.731059).abs() < 1e-6);
    let v = mean_shift(&k, &[0.0, 0.0], refs.view()).unwrap();
    assert!((v[0] - (w1 + 2.0 * w2)).abs() < 1e-15 && v[1] == 0.0);
    let s = kernel_score(&k, &[0.0, 0.0], array![[1.0, 0.0], [0.0, 2.0]].view()).unwrap();
    assert!((s[0] - w1).abs() < 1e-15 && (s[1] - w2).abs() < 1e-15);
}

fn mean_sq_norm(data: &ndarray::Array2<f64>) -> f64 {
    data.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / data.nrows() as f64
}

#[test]
fn ring_mog_second_moment_and_rotation() {
    let dim = 32;
    let n = 20_000;
    let p = sample_ring_mog(dim, n, Role::P, 5).unwrap();
    let q = sample_ring_mog(dim, n, Role::Q, 5).unwrap();
    // E|x|^2 = R^2 + D sigma^2
    let expected = 9.0 + dim as f64 * 0.16;
    for c in [&p, &q] {
        let m = mean_sq_norm(&c.data);
        assert!((m - expected).abs() < 0.02 * expected, "{m} vs {expected}");
    }
    // in-plane angle: modes at k pi/3 for p, shifted by pi/6 for q
    let (u, v) = random_plane(dim, 5).unwrap();
    let six_theta = |c: &driftscore::PointCloud| {
        c.data
            .rows()
            .into_iter()
            .map(|r| {
                let a: f64 = r.iter().zip(&u).map(|(x, y)| x * y).sum();
                let b: f64 = r.iter().zip(&v).map(|(x, y)| x * y).sum();
                (6.0 * b.atan2(a)).cos()
            })
            .sum::<f64>()
            / n as f64
    };
    // angular sd ~ 0.4 / 3, so E cos(6 theta) ~ exp(-(6 * 0.133)^2 / 2) ~ 0.73
    let (cp, cq) = (six_theta(&p), six_theta(&q));
    assert!(cp > 0.6 && cq < -0.6, "{cp} {cq}");
    assert!((cp + cq).abs() < 0.05);
}

#[test]
fn raw_mog_second_moment() {
    let dim = 16;
    let c = sample_raw_mog(dim, 30_000, Role::P, 2).unwrap();
    let mean_r2 = RAW_P_RADII.iter().map(|r| r * r).sum::<f64>() / RAW_P_RADII.len() as f64;
    let expected = mean_r2 + dim as f64 * RAW_NOISE_SD * RAW_NOISE_SD;
    let m = mean_sq_norm(&c.data);
    assert!((m - expected).abs() < 0.03 * expected, "{m} vs {expected}");
}

#[test]
fn prior_is_standard_normal() {
    let c = sample_prior(8, 50_000, 3).unwrap();
    let n = c.len() as f64;
    for col in c.data.columns() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.03, "{mean} {var}");
    }
}
