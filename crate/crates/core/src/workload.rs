//! Query batch generation: uniform or zipfian key popularity with a
//! configurable hit ratio, plus batches reconstructed from memory traces.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::harness::trace::{MemEventSeq, TraceSource};
use crate::kvstore::{HashTable, ENTRY_BYTES, SENTINEL_KEY};
use crate::memmodel::{MemOp, MemoryLayout};

pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("hit ratio {0} requested but the table has no reachable keys")]
    EmptyPool(f64),
    #[error("trace address {address:#x} lies outside the table [{start:#x}, {end:#x})")]
    TraceMismatch { address: u64, start: u64, end: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform,
    Zipf { alpha: f64 },
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Zipf { alpha } => write!(f, "zipf{alpha}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = String;

    /// Accepts `uniform`, `zipf` (alpha 0.99), `zipf0.8` or `zipf:0.8`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(Distribution::Uniform);
        }
        let rest = s.strip_prefix("zipf").ok_or_else(|| format!("unknown distribution `{s}`"))?;
        let rest = rest.trim_start_matches(':');
        let alpha = if rest.is_empty() { 0.99 } else { rest.parse().map_err(|_| format!("bad zipf exponent in `{s}`"))? };
        if !(alpha >= 0.0 && f64::is_finite(alpha)) {
            return Err(format!("zipf exponent must be finite and >= 0, got {alpha}"));
        }
        Ok(Distribution::Zipf { alpha })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub distribution: Distribution,
    pub hit_ratio: f64,
    pub batch_size: usize,
    pub n_batches: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { distribution: Distribution::Uniform, hit_ratio: 0.9, batch_size: DEFAULT_BATCH_SIZE, n_batches: 1, seed: 1 }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(0.0..=1.0).contains(&self.hit_ratio) {
            return Err(WorkloadError::Invalid(format!("hit ratio {} outside [0, 1]", self.hit_ratio)));
        }
        if let Distribution::Zipf { alpha } = self.distribution {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(WorkloadError::Invalid(format!("zipf exponent {alpha} must be >= 0")));
            }
        }
        if self.batch_size == 0 {
            return Err(WorkloadError::Invalid("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Exact sampler over ranks `1..=n` with `P(i) ∝ i^-alpha`, via a cumulative
/// table and binary search.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(alpha: f64, n_items: usize) -> Self {
        assert!(n_items >= 1, "zipf needs at least one item");
        let mut cdf = Vec::with_capacity(n_items);
        let mut acc = 0.0;
        for i in 1..=n_items {
            acc += (i as f64).powf(-alpha);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;
        ZipfSampler { cdf }
    }

    pub fn n_items(&self) -> usize {
        self.cdf.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) + 1
    }
}

/// One-shot draw. Building the table is O(n); keep a [`ZipfSampler`] for
/// repeated draws.
pub fn zipf_sample<R: Rng + ?Sized>(alpha: f64, n_items: usize, rng: &mut R) -> usize {
    ZipfSampler::new(alpha, n_items).sample(rng)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryBatch {
    pub keys: Vec<u64>,
    /// Value each query must return; `None` for keys absent from the table.
    pub expected: Vec<Option<u32>>,
    /// Replay mode: probe these slots instead of hashing the keys.
    pub probe_index: Option<Vec<u64>>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.expected.iter().filter(|e| e.is_some()).count()
    }
}

/// Stored keys eligible as hits, in popularity order.
#[derive(Clone, Debug)]
struct HitPool {
    keys: Vec<(u64, u32)>,
    zipf: Option<ZipfSampler>,
}

impl HitPool {
    /// Ranks stored keys by home slot. With `reach`, keys that need more
    /// than `reach` probes are left out so a truncated scan still finds
    /// every hit.
    fn new(table: &HashTable, distribution: Distribution, reach: Option<u32>) -> Self {
        let mut keys: Vec<(u64, u64, u32)> = table
            .iter_occupied()
            .filter(|(slot, _)| reach.is_none_or(|r| table.probe_distance(*slot) <= r))
            .map(|(_, e)| (table.home_slot(e.key), e.key, e.value))
            .collect();
        keys.sort_unstable();
        let keys: Vec<(u64, u32)> = keys.into_iter().map(|(_, k, v)| (k, v)).collect();
        let zipf = match distribution {
            Distribution::Zipf { alpha } if !keys.is_empty() => Some(ZipfSampler::new(alpha, keys.len())),
            _ => None,
        };
        HitPool { keys, zipf }
    }

    fn batch<R: Rng + ?Sized>(&self, spec: &WorkloadSpec, table: &HashTable, rng: &mut R) -> Result<QueryBatch, WorkloadError> {
        if spec.hit_ratio > 0.0 && self.keys.is_empty() {
            return Err(WorkloadError::EmptyPool(spec.hit_ratio));
        }
        let mut batch = QueryBatch { keys: Vec::with_capacity(spec.batch_size), expected: Vec::with_capacity(spec.batch_size), probe_index: None };
        for _ in 0..spec.batch_size {
            let hit = rng.gen::<f64>() < spec.hit_ratio;
            if hit {
                let idx = match &self.zipf {
                    Some(z) => z.sample(rng) - 1,
                    None => rng.gen_range(0..self.keys.len()),
                };
                let (k, v) = self.keys[idx];
                batch.keys.push(k);
                batch.expected.push(Some(v));
            } else {
                batch.keys.push(absent_key(table, rng));
                batch.expected.push(None);
            }
        }
        Ok(batch)
    }
}

fn absent_key<R: Rng + ?Sized>(table: &HashTable, rng: &mut R) -> u64 {
    loop {
        let k: u64 = rng.gen();
        if k != SENTINEL_KEY && !table.contains(k) {
            return k;
        }
    }
}

pub fn gen_batch<R: Rng + ?Sized>(spec: &WorkloadSpec, table: &HashTable, rng: &mut R) -> Result<QueryBatch, WorkloadError> {
    spec.validate()?;
    HitPool::new(table, spec.distribution, None).batch(spec, table, rng)
}

/// Seeded stream of batches over one table.
#[derive(Clone, Debug)]
pub struct WorkloadGenerator {
    spec: WorkloadSpec,
    pool: HitPool,
    rng: ChaCha8Rng,
}

impl WorkloadGenerator {
    pub fn new(spec: WorkloadSpec, table: &HashTable, reach: Option<u32>) -> Result<Self, WorkloadError> {
        spec.validate()?;
        let pool = HitPool::new(table, spec.distribution, reach);
        if spec.hit_ratio > 0.0 && pool.keys.is_empty() {
            return Err(WorkloadError::EmptyPool(spec.hit_ratio));
        }
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(WorkloadGenerator { spec, pool, rng })
    }

    pub fn next_batch(&mut self, table: &HashTable) -> QueryBatch {
        self.pool.batch(&self.spec, table, &mut self.rng).expect("pool checked at construction")
    }

    /// All `n_batches` batches of the spec.
    pub fn batches(&mut self, table: &HashTable) -> Vec<QueryBatch> {
        (0..self.spec.n_batches).map(|_| self.next_batch(table)).collect()
    }
}

/// Rebuilds the probed slot sequence from accelerator table reads in a
/// trace. Reads into key buffers are skipped. Consecutive contiguous reads
/// form one probe burst; with `scan_len`, a burst also ends after that many
/// entries. The batch runs in replay mode, with keys chosen to land on each
/// slot where the table has one.
pub fn batch_from_trace(trace: &MemEventSeq, table: &HashTable, layout: &MemoryLayout, scan_len: Option<u32>) -> Result<QueryBatch, WorkloadError> {
    let start = table.base_address();
    let end = start + table.size_bytes();
    let cap = table.capacity();
    let mut bursts: Vec<(u64, u64)> = Vec::new();
    for rec in &trace.records {
        if rec.source != TraceSource::Acc || rec.op != MemOp::Read || layout.in_key_region(rec.address) {
            continue;
        }
        let addr = rec.address;
        let size = u64::from(rec.size);
        if addr < start || addr + size > end || !(addr - start).is_multiple_of(ENTRY_BYTES) {
            return Err(WorkloadError::TraceMismatch { address: addr, start, end });
        }
        let idx = (addr - start) / ENTRY_BYTES;
        let n = size.div_ceil(ENTRY_BYTES);
        match bursts.last_mut() {
            Some((s, len)) if (*s + *len) % cap == idx && scan_len.is_none_or(|l| *len < u64::from(l)) => *len += n,
            _ => bursts.push((idx, n)),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(start ^ cap);
    let mut batch = QueryBatch { probe_index: Some(Vec::with_capacity(bursts.len())), ..QueryBatch::default() };
    for (idx, len) in bursts {
        let window = scan_len.map_or(len, u64::from);
        // a key homed exactly at this slot and stored inside the window
        let found = (0..window).map(|d| (idx + d) % cap).map(|s| table.entry(s)).find(|e| e.is_occupied() && table.home_slot(e.key) == idx);
        match found {
            Some(e) => {
                batch.keys.push(e.key);
                batch.expected.push(Some(e.value));
            }
            None => {
                batch.keys.push(absent_key(table, &mut rng));
                batch.expected.push(None);
            }
        }
        batch.probe_index.as_mut().unwrap().push(idx);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::TraceRecord;
    use crate::kvstore::build_table;
    use crate::simkernel::SimTime;

    #[test]
    fn singleton_zipf_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| zipf_sample(0.99, 1, &mut rng) == 1));
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let z = ZipfSampler::new(0.0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 10];
        for _ in 0..100_000 {
            counts[z.sample(&mut rng) - 1] += 1;
        }
        // chi-square with 9 dof; 27.88 is the 0.999 quantile
        let chi: f64 = counts.iter().map(|&c| (c as f64 - 10_000.0).powi(2) / 10_000.0).sum();
        assert!(chi < 27.88, "chi = {chi}");
    }

    #[test]
    fn distribution_parsing() {
        assert_eq!("uniform".parse::<Distribution>().unwrap(), Distribution::Uniform);
        assert_eq!("zipf".parse::<Distribution>().unwrap(), Distribution::Zipf { alpha: 0.99 });
        assert_eq!("zipf0.5".parse::<Distribution>().unwrap(), Distribution::Zipf { alpha: 0.5 });
        assert!("zipf-1".parse::<Distribution>().is_err());
        assert!("pareto".parse::<Distribution>().is_err());
        let d = Distribution::Zipf { alpha: 0.99 };
        assert_eq!(d.to_string().parse::<Distribution>().unwrap(), d);
    }

    #[test]
    fn full_and_zero_hit_ratios() {
        let t = build_table(4096, 0.5, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let all = gen_batch(&WorkloadSpec { hit_ratio: 1.0, ..WorkloadSpec::default() }, &t, &mut rng).unwrap();
        assert_eq!(all.len(), DEFAULT_BATCH_SIZE);
        assert_eq!(all.hits(), DEFAULT_BATCH_SIZE);
        for (k, e) in all.keys.iter().zip(&all.expected) {
            assert_eq!(t.lookup_software(*k).value, *e);
        }
        let none = gen_batch(&WorkloadSpec { hit_ratio: 0.0, ..WorkloadSpec::default() }, &t, &mut rng).unwrap();
        assert_eq!(none.hits(), 0);
        assert!(none.keys.iter().all(|k| t.lookup_software(*k).value.is_none()));
    }

    #[test]
    fn empty_pool_with_hits_is_an_error() {
        let t = build_table(64, 0.0, 1, 0).unwrap();
        let spec = WorkloadSpec { hit_ratio: 0.5, ..WorkloadSpec::default() };
        assert_eq!(WorkloadGenerator::new(spec, &t, None).unwrap_err(), WorkloadError::EmptyPool(0.5));
    }

    #[test]
    fn reach_limits_hit_pool() {
        let t = build_table(1 << 12, 0.9, 2, 0).unwrap();
        let spec = WorkloadSpec { hit_ratio: 1.0, n_batches: 4, ..WorkloadSpec::default() };
        let mut g = WorkloadGenerator::new(spec, &t, Some(3)).unwrap();
        for b in g.batches(&t) {
            assert!(b.keys.iter().all(|k| t.lookup_software(*k).probes <= 3));
        }
    }

    #[test]
    fn seeded_generators_agree() {
        let t = build_table(4096, 0.6, 4, 0).unwrap();
        let spec = WorkloadSpec { distribution: Distribution::Zipf { alpha: 0.99 }, n_batches: 3, seed: 77, ..WorkloadSpec::default() };
        let a = WorkloadGenerator::new(spec.clone(), &t, None).unwrap().batches(&t);
        let b = WorkloadGenerator::new(spec, &t, None).unwrap().batches(&t);
        assert_eq!(a, b);
    }

    fn layout_for(t: &HashTable) -> MemoryLayout {
        MemoryLayout::new(t, 8192, 1)
    }

    #[test]
    fn trace_read_maps_to_slot() {
        let t = build_table(1024, 0.5, 1, 0x10_0000).unwrap();
        let trace = MemEventSeq {
            records: vec![TraceRecord { time: SimTime::ZERO, source: TraceSource::Acc, op: MemOp::Read, address: 0x10_0000 + 160, size: 16 }],
        };
        let b = batch_from_trace(&trace, &t, &layout_for(&t), None).unwrap();
        assert_eq!(b.probe_index, Some(vec![10]));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn empty_trace_gives_empty_batch() {
        let t = build_table(1024, 0.5, 1, 0).unwrap();
        let b = batch_from_trace(&MemEventSeq::default(), &t, &layout_for(&t), None).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn trace_outside_table_is_mismatch() {
        let t = build_table(1024, 0.5, 1, 0x10_0000).unwrap();
        let trace = MemEventSeq {
            records: vec![TraceRecord { time: SimTime::ZERO, source: TraceSource::Acc, op: MemOp::Read, address: 0x20, size: 16 }],
        };
        assert!(matches!(batch_from_trace(&trace, &t, &layout_for(&t), None), Err(WorkloadError::TraceMismatch { .. })));
    }

    #[test]
    fn bursts_split_on_scan_len_and_wrap() {
        let t = build_table(64, 0.5, 1, 0).unwrap();
        let rec = |addr: u64, size: u32| TraceRecord { time: SimTime::ZERO, source: TraceSource::Acc, op: MemOp::Read, address: addr, size };
        // slot 63 then wrap to slot 0, then a second query at slot 1
        let trace = MemEventSeq { records: vec![rec(63 * 16, 16), rec(0, 16), rec(16, 32)] };
        let b = batch_from_trace(&trace, &t, &layout_for(&t), Some(2)).unwrap();
        assert_eq!(b.probe_index, Some(vec![63, 1]));
        let merged = batch_from_trace(&trace, &t, &layout_for(&t), None).unwrap();
        assert_eq!(merged.probe_index, Some(vec![63]));
    }
}
