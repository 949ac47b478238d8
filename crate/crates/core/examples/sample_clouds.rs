//! Draws the synthetic targets, writes one cloud to CSV and reads it back.

use driftscore::sampling::{sample_raw_mog, sample_ring_mog, sample_toy2d};
use driftscore::{PointCloud, Result, Role};

fn summary(name: &str, c: &PointCloud) {
    let n = c.len() as f64;
    let mean_norm = c.view().rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / n;
    println!("{name:<14} n={} D={} mean |x|={mean_norm:.3}", c.len(), c.dim());
}

fn main() -> Result<()> {
    summary("ring_mog p", &sample_ring_mog(64, 1000, Role::P, 0)?);
    summary("ring_mog q", &sample_ring_mog(64, 1000, Role::Q, 0)?);
    summary("raw_mog p", &sample_raw_mog(64, 1000, Role::P, 0)?);
    for name in ["ring_mog", "swiss_roll", "checkerboard", "two_moons"] {
        summary(name, &sample_toy2d(name, 1000, 0)?);
    }

    let cloud = sample_ring_mog(3, 4, Role::P, 1)?;
    let mut buf = Vec::new();
    cloud.write_csv(&mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    let back = PointCloud::read_csv(buf.as_slice())?;
    assert_eq!(back, cloud);
    Ok(())
}
