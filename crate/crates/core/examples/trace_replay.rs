//! Capture the memory trace of a run, write it as text, parse it back and
//! replay the recovered probe sequence.
//!
//! cargo run --release --example trace_replay

use std::sync::Arc;

use nearsim::accel::AccelConfig;
use nearsim::harness::trace::{parse_trace, write_trace, TraceSource};
use nearsim::host::{run_platform, CpuConfig, Platform};
use nearsim::kvstore::build_table;
use nearsim::memmodel::{HmcConfig, MemoryConfig};
use nearsim::workload::{batch_from_trace, WorkloadGenerator, WorkloadSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = Arc::new(build_table(1 << 16, 0.5, 5, 0)?);
    let batch = WorkloadGenerator::new(WorkloadSpec::default(), &table, None)?.next_batch(&table);
    let scan = 16;
    let mut p = Platform::new(MemoryConfig::hmc(HmcConfig::default()), AccelConfig { scan_len: Some(scan), ..AccelConfig::default() }, CpuConfig::default());
    p.trace = true;
    let original = run_platform(&table, &[Arc::new(batch)], &p)?;

    let path = std::env::temp_dir().join("nearsim_example.trace");
    write_trace(original.trace.as_ref().expect("trace captured"), &path)?;
    let trace = parse_trace(&path)?;
    let keys = trace.records.iter().filter(|r| r.source == TraceSource::Acc && original.layout.in_key_region(r.address)).count();
    println!("{}: {} records, {} of them key reads", path.display(), trace.records.len(), keys);
    for line in std::fs::read_to_string(&path)?.lines().take(4) {
        println!("  {line}");
    }

    let replay = Arc::new(batch_from_trace(&trace, &table, &original.layout, Some(scan))?);
    p.trace = false;
    let again = run_platform(&table, &[replay], &p)?;
    println!("original {:.3} M lookups/s, replay {:.3} M lookups/s", original.mlookups_per_s(), again.mlookups_per_s());
    Ok(())
}
