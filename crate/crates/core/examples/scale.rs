//! Throughput scaling with the number of CPU/accelerator pairs sharing one
//! cube, next to a 128 GB/s fixed-latency memory.
//!
//! cargo run --release --example scale [-- key=value ...]

use std::collections::BTreeMap;
use std::path::Path;

use nearsim::harness::config::RawConfig;
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec, ResultRow};

fn run(file: &str) -> Result<Vec<ResultRow>, Box<dyn std::error::Error>> {
    let mut raw = RawConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(file))?;
    for a in std::env::args().skip(1) {
        raw.set(&a)?;
    }
    Ok(run_experiment(&ExperimentSpec::new(ExperimentKind::Scale, raw, 1)?)?)
}

fn print_speedups(name: &str, rows: &[ResultRow]) {
    let mut by_lf: BTreeMap<u64, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_lf.entry((r.load_factor * 100.0).round() as u64).or_default().push(r);
    }
    println!("{name}: full-lookup speedup over one accelerator");
    for (lf, mut rs) in by_lf {
        rs.sort_by_key(|r| r.n_accel);
        let base = rs[0].full_mlookups_per_s;
        let cells: Vec<String> = rs.iter().map(|r| format!("{}:{:.2}x", r.n_accel, r.full_mlookups_per_s / base)).collect();
        println!("  lf 0.{:02} ({:>6.2} M) {}", lf, base, cells.join("  "));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print_speedups("cube", &run("scale.conf")?);
    print_speedups("ideal", &run("ideal.conf")?);
    Ok(())
}
