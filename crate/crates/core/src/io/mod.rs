//! Configuration files, trace persistence and plot-data export.

pub mod config;
pub mod plot;
pub mod trace_file;

pub use config::{load_config, save_config, RunConfig};
pub use plot::{export_plotdata, write_plotdata, PlotData, PlotKind};
pub use trace_file::{read_trace, read_trace_checked, sidecar_path, write_trace, TraceMeta};
