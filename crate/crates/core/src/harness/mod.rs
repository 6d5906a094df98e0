//! Experiment driver: configuration, metrics, file formats and scans.

pub mod config;
pub mod io;
pub mod metrics;
pub mod scan;

pub use config::RunConfig;
pub use metrics::{dt_convergence, metric_delta_n1, trapezoid, DtConvergence, DT_CONVERGENCE_THRESHOLD};
pub use scan::{run_cell, run_free_anchor, run_scan, run_scan_outputs, CellOutput, ScanCell, Trajectory};
