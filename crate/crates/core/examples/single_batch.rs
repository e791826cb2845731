//! Run one small batch through the accelerator and print the pipeline
//! schedule of the first queries.
//!
//! cargo run --release --example single_batch

use std::sync::Arc;

use nearsim::accel::{AccelConfig, Stage};
use nearsim::host::{run_platform, CpuConfig, Platform};
use nearsim::kvstore::build_table;
use nearsim::memmodel::{FixedMemConfig, MemoryConfig};
use nearsim::workload::{WorkloadGenerator, WorkloadSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = Arc::new(build_table(1 << 16, 0.5, 1, 0)?);
    // Hits are drawn only from keys that sit within the 8-entry window.
    let scan = 8;
    let batch = WorkloadGenerator::new(WorkloadSpec { batch_size: 64, ..WorkloadSpec::default() }, &table, Some(scan))?.next_batch(&table);
    let accel = AccelConfig { scan_len: Some(scan), ..AccelConfig::default() };
    let mut p = Platform::new(MemoryConfig::fixed(FixedMemConfig::default()), accel, CpuConfig::default());
    p.pipeline_log = true;
    let r = run_platform(&table, &[Arc::new(batch.clone())], &p)?;

    for q in 0..3 {
        println!("query {q} (key 0x{:x}):", batch.keys[q]);
        for e in r.pipeline_logs[0].iter().filter(|e| e.query == q as u32 && e.stage != Stage::Done) {
            println!("  {:>10.1} ns  {:?}", e.time.as_ns(), e.stage);
        }
    }
    let o = &r.outcomes[0];
    println!("\nt_lookup {:.1} ns, t_full_lookup {:.1} ns, accelerator busy {:.1} ns", o.t_lookup.as_ns(), o.t_full_lookup.as_ns(), o.accel_busy.as_ns());
    println!("{:.2} M lookups/s; stats {:?}", r.mlookups_per_s(), o.stats);
    let correct = o.values.iter().zip(&batch.expected).all(|(v, e)| e.map_or(*v == nearsim::kvstore::NOT_FOUND, |e| *v == e));
    println!("all values correct: {correct}");
    Ok(())
}
