use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftscore::experiments::{
    emit_svg_plot, run_dim_sweep, run_fields_dump, run_smalltau, run_train, ConfigFile, ExperimentConfig,
    ExperimentKind, PlotSpec,
};
use driftscore::trainer::KernelKind;
use driftscore::Result;

#[derive(Parser)]
#[command(name = "driftscore", version, about = "Drift/score alignment experiments")]
struct Cli {
    /// Worker threads for field evaluation (defaults to all cores).
    #[arg(long, env = "DRIFTSCORE_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alignment of drift and score mismatch as D grows.
    DimSweep(Common),
    /// Relative error of the small-bandwidth expansion at fixed D.
    SmallTau(Common),
    /// Train a generator per kernel and compare.
    Train(Common),
    /// Dump per-query fields to CSV.
    FieldsDump(Common),
    /// Render a CSV column set as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to one kernel.
    #[arg(long, value_parser = ["laplace", "gaussian"])]
    kernel: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<String>,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value = "")]
    title: String,
    /// Output SVG path; defaults to the CSV path with an .svg extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig> {
    let file = match &c.config {
        Some(path) => ConfigFile::read(path)?,
        None => ConfigFile::default(),
    };
    let mut cfg = ExperimentConfig::from_file(kind, &file)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(k) = &c.kernel {
        cfg.kernels = vec![k.parse::<KernelKind>()?];
    }
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| driftscore::Error::Config(format!("expected KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DimSweep(c) => {
            let res = run_dim_sweep(&load(ExperimentKind::DimSweep, &c)?)?;
            for sweep in &res.sweeps {
                for s in &sweep.slopes {
                    println!("{} {} slope {:.4} ({} points)", sweep.kernel.name(), s.metric, s.slope, s.points);
                }
                let flagged = sweep.rows.iter().filter(|r| r.flagged()).count();
                if flagged > 0 {
                    println!("{}: {flagged} flagged D values excluded from fits", sweep.kernel.name());
                }
            }
        }
        Command::SmallTau(c) => {
            let res = run_smalltau(&load(ExperimentKind::SmallTau, &c)?)?;
            for f in &res.fits {
                println!("{} D={} e(tau) slope {:.4} ({} points)", f.kernel.name(), f.dim, f.fit.slope, f.fit.points);
            }
        }
        Command::Train(c) => {
            let res = run_train(&load(ExperimentKind::Train, &c)?)?;
            for r in &res.runs {
                let (i, f) = (&r.outcome.initial, r.outcome.final_record());
                println!("{}: swd {:.4} -> {:.4}, mmd {:.4} -> {:.4}", r.kernel.name(), i.swd, f.swd, i.mmd, f.mmd);
            }
            if let Some(ratio) = res.swd_ratio {
                println!("final swd ratio laplace/gaussian {ratio:.4}");
            }
        }
        Command::FieldsDump(c) => {
            let res = run_fields_dump(&load(ExperimentKind::FieldsDump, &c)?)?;
            for p in &res.written.0 {
                println!("{}", p.display());
            }
        }
        Command::Plot(p) => {
            let out = p.out.unwrap_or_else(|| p.csv.with_extension("svg"));
            let spec = PlotSpec { x_col: p.x, y_cols: p.y, log_x: p.log_x, log_y: p.log_y, title: p.title };
            emit_svg_plot(&p.csv, &spec, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
