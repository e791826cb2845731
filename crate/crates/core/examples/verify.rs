//! Run the verification experiment against the emulator reference points.
//!
//! cargo run --release --example verify [-- key=value ...]

use std::path::Path;

use nearsim::harness::compare::compare_reference;
use nearsim::harness::config::RawConfig;
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut raw = RawConfig::load(&dir.join("verify.conf"))?;
    for a in std::env::args().skip(1) {
        raw.set(&a)?;
    }
    let rows = run_experiment(&ExperimentSpec::new(ExperimentKind::Verify, raw, 1)?)?;
    for r in &rows {
        println!("lf {:.1} scan {:>2}: {:>7.2} M lookups/s", r.load_factor, r.scan_len, r.mlookups_per_s);
    }
    let report = compare_reference(&rows, &dir.join("emulator_reference.csv"), 25.0)?;
    print!("{}", report.render());
    Ok(())
}
