//! Cumulative accelerator optimizations on the cube memory model, with the
//! per-step speedups at every load factor.
//!
//! cargo run --release --example optimize [-- key=value ...]
//! e.g. `-- workload.n_batches=8 table.capacity_log2=18` for a quick run.

use std::path::Path;

use nearsim::accel::OptSet;
use nearsim::harness::config::RawConfig;
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut raw = RawConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/optimize.conf"))?;
    for a in std::env::args().skip(1) {
        raw.set(&a)?;
    }
    let rows = run_experiment(&ExperimentSpec::new(ExperimentKind::Optimize, raw, 1)?)?;
    let at = |opt: OptSet, lf: f64| rows.iter().find(|r| r.opts == opt.name() && r.load_factor == lf).map(|r| r.mlookups_per_s);
    let mut lfs: Vec<f64> = rows.iter().map(|r| r.load_factor).collect();
    lfs.sort_by(f64::total_cmp);
    lfs.dedup();
    print!("{:>5}", "lf");
    for o in OptSet::ALL {
        print!(" {:>16}", o.label());
    }
    println!(" {:>8}", "total");
    for lf in lfs {
        print!("{lf:>5.1}");
        for o in OptSet::ALL {
            print!(" {:>16.2}", at(o, lf).unwrap_or(f64::NAN));
        }
        let total = at(OptSet::DoubleRequests, lf).zip(at(OptSet::Base, lf)).map(|(a, b)| a / b);
        println!(" {:>7.2}x", total.unwrap_or(f64::NAN));
    }
    let kbc = |o: OptSet| rows.iter().find(|r| r.opts == o.name()).map_or(0, |r| r.key_bank_conflicts);
    println!("\nkey-phase bank conflicts at the first load factor: {} -> {}", kbc(OptSet::Base), kbc(OptSet::BatchKeys));
    Ok(())
}
