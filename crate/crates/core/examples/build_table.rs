//! Build a linear-probing table at a few load factors and inspect probe
//! lengths, then round-trip it through its memory image.
//!
//! cargo run --release --example build_table

use nearsim::kvstore::{build_table, HashTable, ENTRY_BYTES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>10} {:>12} {:>10} {:>10}", "lf", "keys", "mean probe", "expected", "max probe");
    for lf in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let t = build_table(1 << 20, lf, 1, 0)?;
        let probes: u64 = t.iter_occupied().map(|(_, e)| u64::from(t.lookup_software(e.key).probes)).sum();
        let mean = probes as f64 / t.occupied() as f64;
        let knuth = 0.5 * (1.0 + 1.0 / (1.0 - lf));
        println!("{lf:>5.1} {:>10} {mean:>12.3} {knuth:>10.3} {:>10}", t.occupied(), t.max_probe_len());
    }

    let t = build_table(1 << 12, 0.5, 7, 0x4000)?;
    let image = t.to_image();
    let back = HashTable::from_image(&image, 0x4000)?;
    let (_, e) = t.iter_occupied().next().expect("table is not empty");
    println!("\nimage: {} bytes ({} B entries), entry 0x{:x} at 0x{:x}", image.len(), ENTRY_BYTES, e.key, t.address_of(t.home_slot(e.key)));
    println!("reloaded lookup agrees: {}", back.lookup_software(e.key) == t.lookup_software(e.key));
    Ok(())
}
