//! Flat `section.key = value` configuration.
//!
//! ```text
//! # comment
//! memory.model = hmc
//! hmc.bank_busy_ns = 24
//! experiment.load_factors = 0.1, 0.5, 0.9
//! ```
//!
//! Later assignments override earlier ones, so `--set` overrides are simply
//! appended. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use crate::accel::{AccelConfig, OptSet};
use crate::host::CpuConfig;
use crate::memmodel::{Backend, FixedMemConfig, HmcConfig, MemoryConfig};
use crate::simkernel::{Clock, SimTime};
use crate::workload::{Distribution, DEFAULT_BATCH_SIZE};
use crate::Error;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("memory.model", "fixed | hmc"),
    ("memory.read_latency_ns", "fixed model read latency"),
    ("memory.write_latency_ns", "fixed model write latency"),
    ("memory.bandwidth_gbps", "fixed model link bandwidth, GB/s"),
    ("memory.max_outstanding", "fixed model requests in service per port"),
    ("memory.size_bytes", "simulated memory size"),
    ("memory.max_packet", "largest request payload in bytes"),
    ("hmc.links", "response links"),
    ("hmc.link_gbps", "bandwidth per link and direction, GB/s"),
    ("hmc.packet_overhead_bytes", "header and tail bytes per packet"),
    ("hmc.quads", "quads"),
    ("hmc.vaults", "vaults"),
    ("hmc.banks_per_vault", "banks per vault"),
    ("hmc.access_latency_ns", "DRAM access time; derived from hmc.read_ns when unset"),
    ("hmc.read_ns", "isolated 128 B read latency used to derive the access time"),
    ("hmc.bank_busy_ns", "closed-page restore window"),
    ("hmc.vault_cycle_ns", "minimum spacing of service starts in a vault"),
    ("hmc.queue_depth", "vault queue depth"),
    ("hmc.interleave_bytes", "vault interleave granularity"),
    ("accel.clock_ghz", "accelerator clock"),
    ("accel.bus_width_bytes", "read-data bus width"),
    ("accel.hash_delay", "hash unit latency, cycles"),
    ("accel.csu_delay", "compare/select latency, cycles"),
    ("accel.lsu_issue_delay", "cycles between request issues"),
    ("accel.fifo_depth", "key FIFO depth"),
    ("accel.scratchpad_ns", "scratchpad access latency"),
    ("accel.max_outstanding", "requests in flight"),
    ("accel.scan_len", "entries scanned per query; unset uses the table maximum"),
    ("accel.opt_batch_keys", "pack keys into max-size packets"),
    ("accel.opt_double_bus", "16 B bus"),
    ("accel.opt_double_outstanding", "32 requests in flight"),
    ("accel.separate_ports", "give key and probe reads their own ports"),
    ("accel.key_bytes", "key size"),
    ("accel.value_bytes", "value size"),
    ("cpu.clock_ghz", "CPU clock"),
    ("cpu.flush_cycles_per_line", "flush cost"),
    ("cpu.invalidate_cycles_per_line", "invalidate cost"),
    ("cpu.line_bytes", "cache line and CPU access width"),
    ("cpu.config_write_cycles", "accelerator configuration cost"),
    ("table.capacity_log2", "table has 2^n entries"),
    ("workload.distribution", "uniform | zipf[:alpha]"),
    ("workload.hit_ratio", "fraction of queries present in the table"),
    ("workload.batch_size", "queries per batch"),
    ("workload.n_batches", "batches per point"),
    ("experiment.load_factors", "comma-separated load factors"),
    ("experiment.opts", "comma-separated optimization sets"),
    ("experiment.accelerators", "comma-separated accelerator counts"),
    ("experiment.models", "memory models swept by `sweep`"),
    ("experiment.scan_table", "load_factor:scan_len pairs, interpolated"),
    ("experiment.trace", "trace file for `replay`"),
];

/// Raw ordered assignments as read from file and overrides.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    pub pairs: Vec<(String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut cfg = RawConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set(line).map_err(|e| match e {
                Error::Config { key, reason } => Error::Config { key, reason: format!("line {}: {reason}", i + 1) },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let mut cfg = RawConfig::parse(&text)?;
        // trace paths in a file are relative to that file
        let dir = path.parent().unwrap_or(Path::new(""));
        for (k, v) in &mut cfg.pairs {
            if k == "experiment.trace" && Path::new(v.as_str()).is_relative() {
                *v = dir.join(v.as_str()).display().to_string();
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` (or `key=value`) assignment.
    pub fn set(&mut self, assignment: &str) -> Result<(), Error> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config { key: assignment.trim().into(), reason: "expected `section.key = value`".into() })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(known, _)| *known == k) {
            return Err(Error::Config { key: k.into(), reason: "unknown key".into() });
        }
        self.pairs.push((k.to_string(), v.to_string()));
        Ok(())
    }

    /// Last value for each key.
    pub fn resolved(&self) -> BTreeMap<&str, &str> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }

    /// Effective assignments, one per line, in key order.
    pub fn echo(&self) -> Vec<String> {
        self.resolved().into_iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }
}

/// Fully typed configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub memory: MemoryConfig,
    pub accel: AccelConfig,
    pub cpu: CpuConfig,
    pub capacity_log2: u32,
    pub distribution: Distribution,
    pub hit_ratio: f64,
    pub batch_size: usize,
    pub n_batches: usize,
    pub load_factors: Vec<f64>,
    /// Unset means the experiment's own default.
    pub opts: Option<Vec<OptSet>>,
    pub accelerators: Option<Vec<usize>>,
    pub models: Vec<String>,
    pub scan_table: Option<ScanTable>,
    pub trace: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

/// Piecewise-linear map from load factor to scan length.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanTable {
    pub points: Vec<(f64, u32)>,
}

impl ScanTable {
    pub fn reference() -> Self {
        ScanTable { points: vec![(0.1, 10), (0.3, 14), (0.5, 22), (0.7, 36), (0.9, 68)] }
    }

    /// Exact at listed points, linear in between (rounded), clamped outside.
    pub fn scan_len(&self, lf: f64) -> u32 {
        let p = &self.points;
        if lf <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if lf <= x1 {
                let f = (lf - x0) / (x1 - x0);
                return (f64::from(y0) + f * (f64::from(y1) - f64::from(y0))).round() as u32;
            }
        }
        p[p.len() - 1].1
    }

    fn parse(v: &str) -> Result<Self, String> {
        let mut points = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (a, b) = item.split_once(':').ok_or_else(|| format!("`{item}` is not `load_factor:scan_len`"))?;
            let lf: f64 = a.trim().parse().map_err(|_| format!("bad load factor `{a}`"))?;
            let n: u32 = b.trim().parse().map_err(|_| format!("bad scan length `{b}`"))?;
            if n == 0 {
                return Err("scan lengths must be positive".into());
            }
            points.push((lf, n));
        }
        if points.is_empty() {
            return Err("empty table".into());
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err("load factors must be strictly increasing".into());
        }
        Ok(ScanTable { points })
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out: Vec<T> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn ns(v: &str) -> Result<SimTime, String> {
    let x: f64 = num(v)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(format!("`{v}` is not a non-negative time"));
    }
    Ok(SimTime::from_ns_f64(x))
}

fn ghz(v: &str) -> Result<Clock, String> {
    let x: f64 = num(v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("`{v}` is not a positive frequency"));
    }
    Ok(Clock::from_ghz(x))
}

fn gbps(v: &str) -> Result<u64, String> {
    let x: f64 = num(v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("`{v}` is not a positive bandwidth"));
    }
    Ok((x * 1e9).round() as u64)
}

impl SimConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, Error> {
        let map = raw.resolved();
        let get = |k: &str| map.get(k).copied();
        let wrap = |key: &str| {
            let key = key.to_string();
            move |reason: String| Error::Config { key: key.clone(), reason }
        };
        macro_rules! apply {
            ($key:literal, $parse:expr, $slot:expr) => {
                if let Some(v) = get($key) {
                    $slot = $parse(v).map_err(wrap($key))?;
                }
            };
        }

        let mut fixed = FixedMemConfig::default();
        apply!("memory.read_latency_ns", ns, fixed.read_latency);
        apply!("memory.write_latency_ns", ns, fixed.write_latency);
        apply!("memory.bandwidth_gbps", gbps, fixed.link_bandwidth);
        apply!("memory.max_outstanding", num, fixed.max_outstanding);

        let mut hmc = HmcConfig::default();
        apply!("hmc.links", num, hmc.n_links);
        apply!("hmc.link_gbps", gbps, hmc.link_bandwidth);
        apply!("hmc.packet_overhead_bytes", num, hmc.packet_overhead);
        apply!("hmc.quads", num, hmc.n_quads);
        apply!("hmc.vaults", num, hmc.n_vaults);
        apply!("hmc.banks_per_vault", num, hmc.banks_per_vault);
        apply!("hmc.bank_busy_ns", ns, hmc.bank_busy);
        apply!("hmc.vault_cycle_ns", ns, hmc.vault_cycle);
        apply!("hmc.queue_depth", num, hmc.vault_queue_depth);
        apply!("hmc.interleave_bytes", num, hmc.interleave_granularity);
        let mut read_total = SimTime::from_ns(85);
        apply!("hmc.read_ns", ns, read_total);
        hmc.tune_access_latency(read_total);
        apply!("hmc.access_latency_ns", ns, hmc.access_latency);

        let backend = match get("memory.model").unwrap_or("hmc") {
            "fixed" => Backend::Fixed(fixed),
            "hmc" => Backend::Hmc(hmc),
            other => return Err(Error::Config { key: "memory.model".into(), reason: format!("`{other}` is not fixed or hmc") }),
        };
        let mut memory = MemoryConfig { backend, memory_size: crate::memmodel::DEFAULT_MEMORY_SIZE, max_packet: crate::memmodel::DEFAULT_MAX_PACKET };
        apply!("memory.size_bytes", num, memory.memory_size);
        apply!("memory.max_packet", num, memory.max_packet);
        memory.validate().map_err(|e| Error::Config { key: "memory".into(), reason: e.to_string() })?;

        let mut accel = AccelConfig { max_packet: memory.max_packet, ..AccelConfig::default() };
        apply!("accel.clock_ghz", ghz, accel.clock);
        apply!("accel.bus_width_bytes", num, accel.bus_width);
        apply!("accel.hash_delay", num, accel.hash_delay);
        apply!("accel.csu_delay", num, accel.csu_delay);
        apply!("accel.lsu_issue_delay", num, accel.lsu_issue_delay);
        apply!("accel.fifo_depth", num, accel.fifo_depth);
        apply!("accel.scratchpad_ns", ns, accel.scratchpad_latency);
        apply!("accel.max_outstanding", num, accel.max_outstanding);
        if let Some(v) = get("accel.scan_len") {
            accel.scan_len = Some(num(v).map_err(wrap("accel.scan_len"))?);
        }
        apply!("accel.opt_batch_keys", flag, accel.opt_batch_keys);
        apply!("accel.opt_double_bus", flag, accel.opt_double_bus);
        apply!("accel.opt_double_outstanding", flag, accel.opt_double_outstanding);
        apply!("accel.separate_ports", flag, accel.separate_ports);
        apply!("accel.key_bytes", num, accel.key_size);
        apply!("accel.value_bytes", num, accel.value_size);
        if accel.opt_double_bus && get("accel.bus_width_bytes").is_none() {
            accel.bus_width = 16;
        }
        if accel.opt_double_outstanding && get("accel.max_outstanding").is_none() {
            accel.max_outstanding = 32;
        }
        accel.validate().map_err(|e| Error::Config { key: "accel".into(), reason: e.to_string() })?;

        let mut cpu = CpuConfig::default();
        apply!("cpu.clock_ghz", ghz, cpu.clock);
        apply!("cpu.flush_cycles_per_line", num, cpu.flush_cycles_per_line);
        apply!("cpu.invalidate_cycles_per_line", num, cpu.invalidate_cycles_per_line);
        apply!("cpu.line_bytes", num, cpu.line_bytes);
        apply!("cpu.config_write_cycles", num, cpu.config_write_cycles);
        cpu.validate()?;

        let mut cfg = SimConfig {
            memory,
            accel,
            cpu,
            capacity_log2: 20,
            distribution: Distribution::Uniform,
            hit_ratio: 0.5,
            batch_size: DEFAULT_BATCH_SIZE,
            n_batches: 64,
            load_factors: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            opts: None,
            accelerators: None,
            models: vec!["fixed".into(), "hmc".into()],
            scan_table: None,
            trace: None,
        };
        apply!("table.capacity_log2", num, cfg.capacity_log2);
        apply!("workload.distribution", |v: &str| v.parse::<Distribution>().map_err(|e| e.to_string()), cfg.distribution);
        apply!("workload.hit_ratio", num, cfg.hit_ratio);
        apply!("workload.batch_size", num, cfg.batch_size);
        apply!("workload.n_batches", num, cfg.n_batches);
        apply!("experiment.load_factors", |v| list(v, num::<f64>), cfg.load_factors);
        if let Some(v) = get("experiment.opts") {
            let opts = list(v, |s| OptSet::parse(s).ok_or_else(|| format!("unknown optimization set `{s}`")));
            cfg.opts = Some(opts.map_err(wrap("experiment.opts"))?);
        }
        if let Some(v) = get("experiment.accelerators") {
            cfg.accelerators = Some(list(v, num::<usize>).map_err(wrap("experiment.accelerators"))?);
        }
        apply!(
            "experiment.models",
            |v| list(v, |s| match s {
                "fixed" | "hmc" => Ok(s.to_string()),
                _ => Err(format!("`{s}` is not fixed or hmc")),
            }),
            cfg.models
        );
        if let Some(v) = get("experiment.scan_table") {
            cfg.scan_table = Some(ScanTable::parse(v).map_err(wrap("experiment.scan_table"))?);
        }
        cfg.trace = get("experiment.trace").map(str::to_string);
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Error> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: key.into(), reason: reason.into() });
        if !(4..=30).contains(&self.capacity_log2) {
            return bad("table.capacity_log2", "must be in 4..=30");
        }
        if let Some(lf) = self.load_factors.iter().find(|&&lf| !(lf > 0.0 && lf <= crate::kvstore::MAX_LOAD_FACTOR)) {
            return bad("experiment.load_factors", &format!("{lf} is outside (0, 0.95]"));
        }
        if !(0.0..=1.0).contains(&self.hit_ratio) {
            return bad("workload.hit_ratio", "must be in [0, 1]");
        }
        if self.batch_size == 0 || self.n_batches == 0 {
            return bad("workload", "batch_size and n_batches must be positive");
        }
        if self.accelerators.as_ref().is_some_and(|a| a.contains(&0)) {
            return bad("experiment.accelerators", "counts must be positive");
        }
        Ok(())
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, RawConfig), Error> {
        let mut raw = RawConfig::load(path)?;
        for o in overrides {
            raw.set(o)?;
        }
        Ok((SimConfig::from_raw(&raw)?, raw))
    }

    /// Memory configuration for a named model, keeping the other settings.
    pub fn memory_for(&self, model: &str, raw: &RawConfig) -> Result<MemoryConfig, Error> {
        let mut r = raw.clone();
        r.pairs.push(("memory.model".into(), model.into()));
        Ok(SimConfig::from_raw(&r)?.memory)
    }

    /// Scan length for a point: explicit key, then scan table, then the
    /// table maximum (`None`).
    pub fn scan_len_for(&self, lf: f64) -> Option<u32> {
        self.accel.scan_len.or_else(|| self.scan_table.as_ref().map(|t| t.scan_len(lf)))
    }
}
