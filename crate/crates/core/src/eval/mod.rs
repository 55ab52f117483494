//! Metrics, experiment specifications and seeded experiment runs.

mod metrics;
mod run;
mod spec;

pub use metrics::{exposure_correlation, mean_sd, pearson, pehe};
pub use run::{read_rows, run_experiment, summarize, write_experiment, write_plot_data, write_rows, ResultRow, SummaryRow};
pub use spec::{Estimator, ExperimentSpec, Scale, Variant};
