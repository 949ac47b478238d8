//! Mean-shift drifting fields and kernel-induced score fields.
//!
//! The crate estimates, from finite samples, the mean-shift field
//! `V(x) = E_w[y] - x` and the kernel score `s(x) = grad log sum_j k(x, y_j)`
//! for radial kernels, decomposes one into the other, measures how well the
//! drift `V_p - V_q` aligns with the score mismatch `s_p - s_q`, and trains
//! small one-step generators by drifting.
//!
//! - [`kernels`]: radial kernels, bandwidth policies, Laplace moment ratio.
//! - [`sampling`]: seeded synthetic targets and point-cloud I/O.
//! - [`fields`]: per-query field estimators and the batched driver.
//! - [`metrics`]: alignment statistics, SWD, MMD, log-log fits.
//! - [`trainer`]: MLP generator, reverse-mode gradients, Adam, training loop.
//! - [`experiments`]: config parsing, sweeps, CSV and SVG output.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod kernels;
pub mod metrics;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
pub use fields::{evaluate_fields, Coincidence, FieldEstimate, FieldOptions, QueryField};
pub use kernels::{laplace_moment_ratio, BandwidthPolicy, KernelFamily, RadialKernel, RadialProfile};
pub use metrics::AlignmentReport;
pub use sampling::{Label, MixtureSpec, PointCloud, Role, Toy2d};
pub use trainer::{Mlp, TrainConfig, TrainOutcome};
