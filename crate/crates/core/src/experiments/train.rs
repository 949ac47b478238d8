use std::path::Path;

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{ensure_dir, metadata, strings, write_csv, Written};
use super::plot::{emit_svg_plot, PlotSpec};
use crate::error::{Error, Result};
use crate::sampling::fmt_f64;
use crate::trainer::{train, EvalRecord, KernelKind, TrainOutcome};

pub const TIMELINE_COLUMNS: [&str; 6] = ["step", "loss", "swd", "mmd", "semigrad_cosine", "wallclock_ms"];

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub kernel: KernelKind,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub runs: Vec<TrainRun>,
    /// Final SWD and MMD of Laplace over Gaussian, when both ran.
    pub swd_ratio: Option<f64>,
    pub mmd_ratio: Option<f64>,
    pub written: Written,
}

impl TrainResult {
    pub fn run(&self, kernel: KernelKind) -> Option<&TrainRun> {
        self.runs.iter().find(|r| r.kernel == kernel)
    }
}

fn record_row(r: &EvalRecord, with_cosine: bool) -> Vec<String> {
    let mut row = vec![r.step.to_string(), fmt_f64(r.loss), fmt_f64(r.swd), fmt_f64(r.mmd)];
    if with_cosine {
        row.push(r.semigrad_cosine.map_or("nan".into(), fmt_f64));
    }
    row.push(r.wallclock_ms.to_string());
    row
}

/// Timeline CSV with the step-0 evaluation first. The cosine column is only
/// present when it was tracked.
pub fn write_timeline(path: &Path, meta: &[String], outcome: &TrainOutcome, with_cosine: bool) -> Result<()> {
    let header: Vec<String> =
        TIMELINE_COLUMNS.iter().filter(|c| with_cosine || **c != "semigrad_cosine").map(|c| c.to_string()).collect();
    let rows: Vec<Vec<String>> =
        std::iter::once(&outcome.initial).chain(&outcome.timeline).map(|r| record_row(r, with_cosine)).collect();
    write_csv(path, meta, &header, &rows)
}

/// Trains one generator per configured kernel with otherwise matched
/// settings, writing timelines, final models and a summary.
///
/// A run that stops on a non-finite loss keeps its partial timeline on disk
/// and the error is returned afterwards.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainResult> {
    if cfg.experiment != ExperimentKind::Train {
        return Err(Error::Config(format!("expected a train config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    ensure_dir(&cfg.out_dir)?;
    let meta = metadata(cfg);
    let mut written = Written::default();
    let mut runs = Vec::new();

    for &kernel in &cfg.kernels {
        let tc = cfg.train_config(kernel)?;
        let outcome = train(&tc)?;
        let name = kernel.name();
        let mut run_meta = meta.clone();
        run_meta.push(format!("run.kernel={name}"));
        run_meta.push(format!("run.kernel_scale={}", fmt_f64(tc.kernel_scale)));
        let path = cfg.out_dir.join(format!("timeline_{name}.csv"));
        write_timeline(&path, &run_meta, &outcome, tc.track_cosine)?;
        written.push(path.clone());

        let model = cfg.out_dir.join(format!("model_{name}.txt"));
        std::fs::write(&model, outcome.generator.to_text())?;
        written.push(model);

        if let Some((step, loss)) = outcome.aborted {
            return Err(Error::NonFinite { step, loss });
        }
        if cfg.svg {
            let spec = PlotSpec {
                x_col: "step".into(),
                y_cols: vec!["swd".into(), "mmd".into()],
                log_x: false,
                log_y: true,
                title: format!("{} training ({name})", tc.dataset.name()),
            };
            let svg = cfg.out_dir.join(format!("timeline_{name}.svg"));
            emit_svg_plot(&path, &spec, &svg)?;
            written.push(svg);
        }
        runs.push(TrainRun { kernel, outcome });
    }

    let final_of = |k: KernelKind| runs.iter().find(|r| r.kernel == k).map(|r| r.outcome.final_record().clone());
    let (lap, gau) = (final_of(KernelKind::Laplace), final_of(KernelKind::Gaussian));
    let swd_ratio = lap.as_ref().zip(gau.as_ref()).map(|(l, g)| l.swd / g.swd);
    let mmd_ratio = lap.as_ref().zip(gau.as_ref()).map(|(l, g)| l.mmd / g.mmd);

    let header = strings(&["kernel", "final_step", "final_loss", "initial_swd", "final_swd", "initial_mmd", "final_mmd"]);
    let mut rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let (i, f) = (&r.outcome.initial, r.outcome.final_record());
            vec![
                r.kernel.name().to_string(),
                f.step.to_string(),
                fmt_f64(f.loss),
                fmt_f64(i.swd),
                fmt_f64(f.swd),
                fmt_f64(i.mmd),
                fmt_f64(f.mmd),
            ]
        })
        .collect();
    if let (Some(s), Some(m)) = (swd_ratio, mmd_ratio) {
        let nan = || "nan".to_string();
        rows.push(vec!["laplace_over_gaussian".into(), nan(), nan(), nan(), fmt_f64(s), nan(), fmt_f64(m)]);
    }
    let path = cfg.out_dir.join("summary.csv");
    write_csv(&path, &meta, &header, &rows)?;
    written.push(path);

    Ok(TrainResult { runs, swd_ratio, mmd_ratio, written })
}
