//! Reproduction surface: configuration, experiments, trace I/O, CSV and
//! plot output, reference comparison.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod output;
pub mod trace;

pub use compare::{compare_reference, compare_rows, CompareReport, ReferenceRow};
pub use config::{RawConfig, ScanTable, SimConfig};
pub use experiment::{run_experiment, ExperimentKind, ExperimentSpec, ResultRow};
pub use output::{emit_csv, emit_plot_script, load_csv, read_csv};
pub use trace::{parse_trace, MemEventSeq};
