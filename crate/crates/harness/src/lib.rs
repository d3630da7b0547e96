//! Experiment sweeps, reports and path rendering for multirobot quantile
//! estimation missions.

pub mod error;
pub mod preset;
pub mod render;
pub mod report;
pub mod svg;
pub mod sweep;

pub use error::{HarnessError, Result};
pub use preset::{apply_preset, preset, PRESETS};
pub use render::{paths_svg, render};
pub use report::{parse_pairs, report, Report};
pub use sweep::{run_sweep, write_outputs, ResultRow, ResultsTable, SweepOutput, SweepSpec};
