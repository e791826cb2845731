//! Experiment definitions and the parallel point runner.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RawConfig, SimConfig};
use super::trace::{parse_trace, MemEventSeq};
use crate::accel::{AccelConfig, OptSet};
use crate::host::{run_platform, Platform, RunReport};
use crate::kvstore::{build_table, HashTable, NOT_FOUND};
use crate::memmodel::{MemoryConfig, MemoryLayout};
use crate::workload::{batch_from_trace, QueryBatch, WorkloadGenerator, WorkloadSpec};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    Verify,
    Optimize,
    Scale,
    Sweep,
    Replay,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [Self::Verify, Self::Optimize, Self::Scale, Self::Sweep, Self::Replay];

    pub fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Optimize => "optimize",
            Self::Scale => "scale",
            Self::Sweep => "sweep",
            Self::Replay => "replay",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// One data point. Column order is the CSV header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub memory_model: String,
    pub opts: String,
    pub n_accel: usize,
    pub load_factor: f64,
    pub scan_len: u32,
    pub distribution: String,
    pub hit_ratio: f64,
    pub batch_size: usize,
    pub n_batches: usize,
    /// Busiest accelerator's summed lookup intervals.
    pub t_lookup_ns: f64,
    /// Wall time until the last readback finished.
    pub t_full_lookup_ns: f64,
    pub mlookups_per_s: f64,
    pub full_mlookups_per_s: f64,
    pub bank_conflicts: u64,
    pub key_bank_conflicts: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn queries(&self) -> usize {
        self.batch_size * self.n_batches
    }

    /// Throughput in M lookups/s from a query count and a time in ns.
    pub fn throughput(queries: usize, ns: f64) -> f64 {
        if ns > 0.0 {
            queries as f64 / ns * 1e3
        } else {
            0.0
        }
    }

    /// Canonical cross-product key.
    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}/{:.4}", self.experiment, self.memory_model, self.opts, self.n_accel, self.load_factor)
    }
}

/// Experiment plus the configuration it runs under.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: SimConfig,
    pub raw: RawConfig,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, raw: RawConfig, seed: u64) -> Result<Self, Error> {
        Ok(ExperimentSpec { kind, config: SimConfig::from_raw(&raw)?, raw, seed })
    }

    pub fn from_overrides(kind: ExperimentKind, overrides: &[&str], seed: u64) -> Result<Self, Error> {
        let mut raw = RawConfig::default();
        for o in overrides {
            raw.set(o)?;
        }
        ExperimentSpec::new(kind, raw, seed)
    }
}

/// Name of the optimization set matching `cfg`'s flags.
pub fn opts_label(cfg: &AccelConfig) -> String {
    OptSet::ALL
        .into_iter()
        .find(|o| {
            let a = o.apply(cfg);
            (a.opt_batch_keys, a.opt_double_bus, a.opt_double_outstanding) == (cfg.opt_batch_keys, cfg.opt_double_bus, cfg.opt_double_outstanding)
        })
        .map_or_else(|| "custom".to_string(), |o| o.name().to_string())
}

#[derive(Clone, Debug)]
struct Point {
    model: String,
    memory: MemoryConfig,
    accel: AccelConfig,
    opts: String,
    n_accel: usize,
    lf: f64,
}

/// Table and batches for one load factor, shared by every point there.
#[derive(Debug)]
pub struct PointInputs {
    pub lf: f64,
    pub table: Arc<HashTable>,
    pub batches: Vec<Arc<QueryBatch>>,
    pub scan_len: u32,
}

pub fn table_seed(seed: u64, lf: f64) -> u64 {
    seed ^ (lf * 1e4).round() as u64
}

/// Builds the table for `lf` and its workload, restricting hits to keys the
/// scan can reach.
pub fn point_inputs(cfg: &SimConfig, lf: f64, seed: u64) -> Result<PointInputs, Error> {
    let table = build_table(1 << cfg.capacity_log2, lf, table_seed(seed, lf), 0)?;
    let scan_len = cfg.scan_len_for(lf).unwrap_or_else(|| table.max_probe_len()).max(1);
    let reach = (scan_len < table.max_probe_len()).then_some(scan_len);
    let spec = WorkloadSpec { distribution: cfg.distribution, hit_ratio: cfg.hit_ratio, batch_size: cfg.batch_size, n_batches: cfg.n_batches, seed: seed.wrapping_add(1) };
    let batches = WorkloadGenerator::new(spec, &table, reach)?.batches(&table).into_iter().map(Arc::new).collect();
    Ok(PointInputs { lf, table: Arc::new(table), batches, scan_len })
}

/// Checks every returned value against the batch annotations.
pub fn validate(report: &RunReport, batches: &[Arc<QueryBatch>]) -> Result<(), Error> {
    for o in &report.outcomes {
        let b = &batches[o.batch];
        for (i, (&got, want)) in o.values.iter().zip(&b.expected).enumerate() {
            let want = want.unwrap_or(NOT_FOUND);
            if got != want {
                return Err(Error::Validation(format!("batch {} query {i} (key {:#x}): got {got:#x}, expected {want:#x}", o.batch, b.keys[i])));
            }
        }
    }
    Ok(())
}

fn points(spec: &ExperimentSpec) -> Result<Vec<Point>, Error> {
    let cfg = &spec.config;
    let own_model = cfg.memory.model_name().to_string();
    let models = match spec.kind {
        ExperimentKind::Sweep => cfg.models.clone(),
        _ => vec![own_model],
    };
    let opts: Vec<Option<OptSet>> = match (&cfg.opts, spec.kind) {
        (Some(list), _) => list.iter().copied().map(Some).collect(),
        (None, ExperimentKind::Optimize | ExperimentKind::Sweep) => OptSet::ALL.into_iter().map(Some).collect(),
        (None, _) => vec![None],
    };
    let accels = match (&cfg.accelerators, spec.kind) {
        (Some(list), _) => list.clone(),
        (None, ExperimentKind::Scale) => vec![1, 2, 4, 8, 16],
        (None, _) => vec![1],
    };
    let lfs = match spec.kind {
        ExperimentKind::Replay => vec![cfg.load_factors[0]],
        _ => cfg.load_factors.clone(),
    };
    let mut out = Vec::new();
    for model in &models {
        let memory = cfg.memory_for(model, &spec.raw)?;
        for o in &opts {
            let accel = o.map_or_else(|| cfg.accel.clone(), |o| o.apply(&cfg.accel));
            for &n in &accels {
                for &lf in &lfs {
                    out.push(Point { model: model.clone(), memory: memory.clone(), accel: accel.clone(), opts: opts_label(&accel), n_accel: n, lf });
                }
            }
        }
    }
    Ok(out)
}

fn row(spec: &ExperimentSpec, p: &Point, inputs: &PointInputs, report: &RunReport) -> ResultRow {
    let cfg = &spec.config;
    let t_lookup_ns = report.lookup_busy().as_ns();
    let t_full_lookup_ns = report.wall.as_ns();
    let batch_size = inputs.batches.first().map_or(0, |b| b.len());
    let n_batches = inputs.batches.len();
    let q = batch_size * n_batches;
    ResultRow {
        experiment: spec.kind.name().into(),
        memory_model: p.model.clone(),
        opts: p.opts.clone(),
        n_accel: p.n_accel,
        load_factor: p.lf,
        scan_len: inputs.scan_len,
        distribution: cfg.distribution.to_string(),
        hit_ratio: cfg.hit_ratio,
        batch_size,
        n_batches,
        t_lookup_ns,
        t_full_lookup_ns,
        mlookups_per_s: ResultRow::throughput(q, t_lookup_ns),
        full_mlookups_per_s: ResultRow::throughput(q, t_full_lookup_ns),
        bank_conflicts: report.mem_stats.bank_conflicts,
        key_bank_conflicts: report.mem_stats.key_bank_conflicts,
        seed: spec.seed,
    }
}

fn run_point(p: &Point, inputs: &PointInputs, cpu: &crate::host::CpuConfig, trace: bool) -> Result<RunReport, Error> {
    let accel = AccelConfig { scan_len: Some(inputs.scan_len), ..p.accel.clone() };
    let platform = Platform { memory: p.memory.clone(), accel, cpu: cpu.clone(), n_accel: p.n_accel, trace, pipeline_log: false };
    let report = run_platform(&inputs.table, &inputs.batches, &platform)?;
    validate(&report, &inputs.batches)?;
    Ok(report)
}

fn replay_inputs(cfg: &SimConfig, lf: f64, seed: u64) -> Result<PointInputs, Error> {
    let path = cfg.trace.as_ref().ok_or_else(|| Error::Config { key: "experiment.trace".into(), reason: "replay needs a trace file".into() })?;
    let trace = parse_trace(std::path::Path::new(path))?;
    let table = build_table(1 << cfg.capacity_log2, lf, table_seed(seed, lf), 0)?;
    let scan_len = cfg.scan_len_for(lf).unwrap_or_else(|| table.max_probe_len()).max(1);
    let layout = MemoryLayout::new(&table, (cfg.batch_size as u64) * u64::from(cfg.accel.key_size), 1);
    let all = batch_from_trace(&trace, &table, &layout, Some(scan_len))?;
    let batches = split_batch(&all, cfg.batch_size).into_iter().map(Arc::new).collect();
    Ok(PointInputs { lf, table: Arc::new(table), batches, scan_len })
}

/// Cuts a batch into consecutive chunks of `size` queries.
pub fn split_batch(b: &QueryBatch, size: usize) -> Vec<QueryBatch> {
    (0..b.len())
        .step_by(size.max(1))
        .map(|s| {
            let e = (s + size).min(b.len());
            QueryBatch {
                keys: b.keys[s..e].to_vec(),
                expected: b.expected[s..e].to_vec(),
                probe_index: b.probe_index.as_ref().map(|p| p[s..e].to_vec()),
            }
        })
        .collect()
}

/// Runs every point of `spec`, in parallel, and returns rows in canonical
/// order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    let pts = points(spec)?;
    let mut lfs: Vec<f64> = pts.iter().map(|p| p.lf).collect();
    lfs.sort_by(f64::total_cmp);
    lfs.dedup();
    let inputs: Vec<PointInputs> = lfs
        .par_iter()
        .map(|&lf| match spec.kind {
            ExperimentKind::Replay => replay_inputs(&spec.config, lf, spec.seed),
            _ => point_inputs(&spec.config, lf, spec.seed),
        })
        .collect::<Result<_, _>>()?;
    let by_lf: BTreeMap<u64, &PointInputs> = inputs.iter().map(|i| (i.lf.to_bits(), i)).collect();
    let mut rows: Vec<ResultRow> = pts
        .par_iter()
        .map(|p| {
            let inp = by_lf[&p.lf.to_bits()];
            let report = run_point(p, inp, &spec.config.cpu, false)?;
            Ok(row(spec, p, inp, &report))
        })
        .collect::<Result<_, Error>>()?;
    let rank = |r: &ResultRow| OptSet::parse(&r.opts).map_or(u8::MAX, |o| o as u8);
    rows.sort_by(|a, b| {
        (&a.memory_model, rank(a), a.n_accel).cmp(&(&b.memory_model, rank(b), b.n_accel)).then(a.load_factor.total_cmp(&b.load_factor))
    });
    Ok(rows)
}

/// Runs the first point of `spec` with memory tracing on and returns the
/// trace.
pub fn capture_trace(spec: &ExperimentSpec) -> Result<MemEventSeq, Error> {
    let p = points(spec)?.into_iter().next().ok_or_else(|| Error::Config { key: "experiment".into(), reason: "no points".into() })?;
    let inp = point_inputs(&spec.config, p.lf, spec.seed)?;
    let report = run_point(&p, &inp, &spec.config.cpu, true)?;
    Ok(report.trace.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind, extra: &[&str]) -> ExperimentSpec {
        let mut o = vec!["table.capacity_log2 = 12", "workload.batch_size = 64", "workload.n_batches = 2", "experiment.load_factors = 0.2, 0.6"];
        o.extend_from_slice(extra);
        ExperimentSpec::from_overrides(kind, &o, 5).unwrap()
    }

    #[test]
    fn cross_product_counts() {
        assert_eq!(run_experiment(&small(ExperimentKind::Verify, &[])).unwrap().len(), 2);
        assert_eq!(run_experiment(&small(ExperimentKind::Optimize, &[])).unwrap().len(), 8);
        assert_eq!(run_experiment(&small(ExperimentKind::Scale, &["experiment.accelerators = 1,2"])).unwrap().len(), 4);
        assert_eq!(run_experiment(&small(ExperimentKind::Sweep, &["experiment.opts = base"])).unwrap().len(), 4);
    }

    #[test]
    fn canonical_order() {
        let rows = run_experiment(&small(ExperimentKind::Optimize, &[])).unwrap();
        let order: Vec<_> = rows.iter().map(|r| (r.opts.as_str(), r.load_factor)).collect();
        assert_eq!(order[0], ("base", 0.2));
        assert_eq!(order[1], ("base", 0.6));
        assert_eq!(order[2], ("batch_keys", 0.2));
        assert_eq!(order[7], ("2x_requests", 0.6));
    }

    #[test]
    fn throughput_recomputes() {
        for r in run_experiment(&small(ExperimentKind::Verify, &[])).unwrap() {
            assert_eq!(r.mlookups_per_s, ResultRow::throughput(r.queries(), r.t_lookup_ns));
            assert!(r.t_full_lookup_ns >= r.t_lookup_ns);
        }
    }

    #[test]
    fn split_keeps_order() {
        let b = QueryBatch { keys: (0..10).collect(), expected: vec![None; 10], probe_index: None };
        let parts = split_batch(&b, 4);
        assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(parts[2].keys, vec![8, 9]);
    }
}
