//! Drive both memory backends with a stream of independent reads and compare
//! the measured throughput with the closed-form bound.
//!
//! cargo run --release --example memory_stream

use nearsim::accel::run_read_stream;
use nearsim::memmodel::{FixedMemConfig, HmcConfig, MemoryConfig};
use nearsim::simkernel::Clock;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Clock::from_ghz(1.25);
    let n = 1000;
    for (name, mem) in [("fixed", MemoryConfig::fixed(FixedMemConfig::default())), ("hmc", MemoryConfig::hmc(HmcConfig::default()))] {
        for size in [16u32, 64, 128] {
            for window in [1u32, 16, 32] {
                let done = run_read_stream(&mem, clock, size, n, window)?;
                let end = done.iter().max().expect("non-empty").as_ns();
                println!("{name:>5} {size:>3} B x {n}, {window:>2} in flight: {end:>9.1} ns, {:>6.2} GB/s", (size as u64 * n) as f64 / end);
            }
        }
    }
    let f = FixedMemConfig::default();
    println!("\nfixed closed form for 128 B: {:.1} ns", (n as f64) * 128.0 / (f.link_bandwidth as f64 / 1e9) + f.read_latency.as_ns());
    Ok(())
}
