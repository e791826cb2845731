//! Sweep both memory models over load factor and accelerator count with a
//! skewed workload, and write the rows as CSV plus a gnuplot script.
//!
//! cargo run --release --example sweep [-- out_dir]

use std::path::{Path, PathBuf};

use nearsim::harness::config::RawConfig;
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec};
use nearsim::harness::output::{emit_csv, emit_plot_script};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let raw = RawConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sweep.conf"))?;
    let rows = run_experiment(&ExperimentSpec::new(ExperimentKind::Sweep, raw, 1)?)?;
    for r in &rows {
        println!("{:<40} scan {:>3} {:>8.2} M  {:>8} bank conflicts", r.key(), r.scan_len, r.mlookups_per_s, r.bank_conflicts);
    }
    let csv = out.join("sweep.csv");
    let plot = out.join("sweep.gp");
    emit_csv(&rows, &csv)?;
    emit_plot_script(&rows, &plot)?;
    println!("wrote {} and {}", csv.display(), plot.display());
    Ok(())
}
