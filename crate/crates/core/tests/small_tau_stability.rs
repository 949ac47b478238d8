use driftscore::experiments::{run_smalltau, ExperimentConfig, ExperimentKind};
use driftscore::trainer::KernelKind;

fn laplace_slope(n_refs: usize, dir: &std::path::Path) -> f64 {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::SmallTau);
    cfg.kernels = vec![KernelKind::Laplace];
    cfg.n_refs = n_refs;
    cfg.svg = false;
    cfg.out_dir = dir.join(n_refs.to_string());
    let res = run_smalltau(&cfg).unwrap();
    assert!(res.rows.iter().all(|r| !r.flagged));
    res.slope(KernelKind::Laplace, 2).unwrap()
}

// Doubling the reference count at the default N must not move the fitted
// rate by more than 0.3.
#[test]
fn slope_is_stable_under_doubling_n() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ExperimentConfig::defaults(ExperimentKind::SmallTau).n_refs;
    let a = laplace_slope(base, tmp.path());
    let b = laplace_slope(2 * base, tmp.path());
    println!("slope at N={base}: {a:.4}, at N={}: {b:.4}", 2 * base);
    assert!((a - b).abs() <= 0.3, "{a} vs {b}");
}
