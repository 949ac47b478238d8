//! Writes a small table and renders it as a log-log SVG.

use std::fs;

use driftscore::experiments::{emit_svg_plot, PlotSpec};
use driftscore::Result;

fn main() -> Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/example_plot".into()));
    fs::create_dir_all(&dir)?;
    let csv = dir.join("power_laws.csv");
    let mut text = String::from("# two power laws\nD,inv_d,inv_sqrt_d\n");
    for d in [4.0f64, 16.0, 64.0, 256.0, 1024.0] {
        text.push_str(&format!("{d},{},{}\n", 1.0 / d, 1.0 / d.sqrt()));
    }
    fs::write(&csv, text)?;
    let spec = PlotSpec {
        x_col: "D".into(),
        y_cols: vec!["inv_d".into(), "inv_sqrt_d".into()],
        log_x: true,
        log_y: true,
        title: "1/D and 1/sqrt(D)".into(),
    };
    let svg = dir.join("power_laws.svg");
    emit_svg_plot(&csv, &spec, &svg)?;
    println!("wrote {}", svg.display());
    Ok(())
}
