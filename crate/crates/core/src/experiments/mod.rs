//! Experiment orchestration: config files, the dimension and bandwidth
//! sweeps, training comparisons, field dumps, CSV and SVG output.
//!
//! Every CSV starts with `#` comment lines carrying the crate version, the
//! seed, the full config echo and the fixed implementation switches.

pub mod config;
pub mod dim_sweep;
pub mod fields_dump;
pub mod output;
pub mod plot;
pub mod small_tau;
pub mod train;

pub use config::{ConfigFile, ExperimentConfig, ExperimentKind, TrainSettings};
pub use dim_sweep::{run_dim_sweep, DimSweepResult, KernelSweep, SlopeFit, SweepRow};
pub use fields_dump::{run_fields_dump, FieldsDumpResult};
pub use output::{metadata, Written, VERSION};
pub use plot::{emit_svg_plot, render_svg, PlotSpec, Table};
pub use small_tau::{run_smalltau, SmallTauResult, TauRow};
pub use train::{run_train, TrainResult};
