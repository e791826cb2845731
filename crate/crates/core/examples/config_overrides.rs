//! Build an experiment from inline configuration text, override keys the way
//! `--set` does, and show the resolved settings.
//!
//! cargo run --release --example config_overrides

use nearsim::harness::config::{RawConfig, SimConfig};
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec};

const TEXT: &str = "
# small cube run
memory.model = hmc
hmc.bank_busy_ns = 50
table.capacity_log2 = 14
workload.batch_size = 256
workload.n_batches = 4
experiment.load_factors = 0.2, 0.8
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut raw = RawConfig::parse(TEXT)?;
    raw.set("hmc.bank_busy_ns = 30")?;
    raw.set("accel.opt_batch_keys = true")?;
    for line in raw.echo() {
        println!("{line}");
    }
    let cfg = SimConfig::from_raw(&raw)?;
    println!("accelerator: bus {} B, {} outstanding, batch keys {}", cfg.accel.bus_width, cfg.accel.max_outstanding, cfg.accel.opt_batch_keys);

    match RawConfig::parse("accel.turbo = 1") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }

    let rows = run_experiment(&ExperimentSpec::new(ExperimentKind::Verify, raw, 1)?)?;
    for r in rows {
        println!("{}: {:.2} M lookups/s", r.key(), r.mlookups_per_s);
    }
    Ok(())
}
