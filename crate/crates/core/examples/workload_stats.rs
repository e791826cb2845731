//! Generate query batches and check their statistics: hit fraction and the
//! head of the Zipf popularity curve.
//!
//! cargo run --release --example workload_stats

use std::collections::HashMap;

use nearsim::kvstore::build_table;
use nearsim::workload::{Distribution, WorkloadGenerator, WorkloadSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = build_table(1 << 18, 0.5, 3, 0)?;
    for (dist, hit) in [(Distribution::Uniform, 0.9), (Distribution::Zipf { alpha: 0.99 }, 0.5)] {
        let spec = WorkloadSpec { distribution: dist, hit_ratio: hit, n_batches: 50, ..WorkloadSpec::default() };
        let batches = WorkloadGenerator::new(spec, &table, None)?.batches(&table);
        let n: usize = batches.iter().map(|b| b.len()).sum();
        let hits: usize = batches.iter().map(|b| b.hits()).sum();
        let mut freq: HashMap<u64, usize> = HashMap::new();
        for b in &batches {
            for (k, e) in b.keys.iter().zip(&b.expected) {
                if e.is_some() {
                    *freq.entry(*k).or_default() += 1;
                }
            }
        }
        let mut top: Vec<usize> = freq.into_values().collect();
        top.sort_unstable_by(|a, b| b.cmp(a));
        println!("{dist:?}: {n} queries, hit fraction {:.4} (target {hit}), hottest keys {:?}", hits as f64 / n as f64, &top[..5]);
    }
    Ok(())
}
