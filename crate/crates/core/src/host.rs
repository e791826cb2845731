//! CPU timing model and multi-accelerator dispatcher.
//!
//! Each CPU owns one accelerator. Per batch it flushes the key lines,
//! writes the accelerator configuration, waits, invalidates the value lines
//! (end of the lookup interval), and reads the values back from the
//! scratchpad (end of the full-lookup interval). Cache operations are time
//! charges only. CPUs pull batches from a shared queue until it is empty.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::accel::{AccelConfig, AccelDone, AccelJob, AccelMsg, AccelStats, Accelerator, LogEntry};
use crate::harness::trace::MemEventSeq;
use crate::kvstore::HashTable;
use crate::memmodel::{MemError, MemStats, MemoryConfig, MemoryLayout, MemoryManager};
use crate::simkernel::{Clock, Component, ComponentId, Fault, SimTime};
use crate::system::{Context, Kernel, Msg};
use crate::workload::QueryBatch;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct CpuConfig {
    pub clock: Clock,
    pub flush_cycles_per_line: u32,
    pub invalidate_cycles_per_line: u32,
    pub line_bytes: u32,
    pub config_write_cycles: u32,
}

impl Default for CpuConfig {
    fn default() -> Self {
        CpuConfig {
            clock: Clock::from_ghz(2.57),
            flush_cycles_per_line: 20,
            invalidate_cycles_per_line: 20,
            line_bytes: 32,
            config_write_cycles: 20,
        }
    }
}

impl CpuConfig {
    /// Free flush, invalidate and configuration.
    pub fn zero_cost() -> Self {
        CpuConfig { flush_cycles_per_line: 0, invalidate_cycles_per_line: 0, config_write_cycles: 0, ..CpuConfig::default() }
    }

    pub fn lines(&self, bytes: u64) -> u64 {
        bytes.div_ceil(u64::from(self.line_bytes))
    }

    pub fn flush_time(&self, bytes: u64) -> SimTime {
        self.clock.cycles(self.lines(bytes) * u64::from(self.flush_cycles_per_line))
    }

    pub fn invalidate_time(&self, bytes: u64) -> SimTime {
        self.clock.cycles(self.lines(bytes) * u64::from(self.invalidate_cycles_per_line))
    }

    pub fn config_time(&self) -> SimTime {
        self.clock.cycles(u64::from(self.config_write_cycles))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.line_bytes == 0 {
            return Err(Error::Config { key: "cpu.line_bytes".into(), reason: "must be positive".into() });
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum CpuMsg {
    /// Ask the dispatcher for the first batch.
    Go,
    Assign(usize),
    NoWork,
    Configured,
    AccelDone(Box<AccelDone>),
    Invalidated,
    ScratchData { line: u32 },
}

#[derive(Debug)]
pub enum DispatchMsg {
    RequestWork { cpu: ComponentId },
}

/// Timing of one batch on one CPU/accelerator pair, relative to the start
/// of its flush.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchOutcome {
    pub batch: usize,
    pub accel: usize,
    pub values: Vec<u32>,
    pub started: SimTime,
    pub t_lookup: SimTime,
    pub t_full_lookup: SimTime,
    pub accel_busy: SimTime,
    pub stats: AccelStats,
}

#[derive(Debug)]
struct Current {
    batch: usize,
    started: SimTime,
    done: Option<Box<AccelDone>>,
    t_lookup: SimTime,
    lines_left: u32,
}

#[derive(Debug)]
pub struct Cpu {
    cfg: CpuConfig,
    index: usize,
    accel: ComponentId,
    dispatcher: ComponentId,
    table: Arc<HashTable>,
    batches: Arc<Vec<Arc<QueryBatch>>>,
    key_base: u64,
    scan_len: u32,
    key_size: u32,
    value_size: u32,
    current: Option<Current>,
    pub outcomes: Vec<BatchOutcome>,
}

impl Cpu {
    fn request_work(&self, ctx: &mut Context) {
        ctx.schedule_in(SimTime::ZERO, self.dispatcher, Msg::Dispatch(DispatchMsg::RequestWork { cpu: ctx.me() }));
    }

    fn cur(&mut self) -> Result<&mut Current, Fault> {
        self.current.as_mut().ok_or_else(|| "CPU event without an active batch".into())
    }
}

impl Component<Msg> for Cpu {
    fn handle(&mut self, msg: Msg, ctx: &mut Context) -> Result<(), Fault> {
        let Msg::Cpu(msg) = msg else {
            return Err(format!("CPU received unexpected message {msg:?}").into());
        };
        match msg {
            CpuMsg::Go => self.request_work(ctx),
            CpuMsg::NoWork => {}
            CpuMsg::Assign(batch) => {
                let n = self.batches[batch].len() as u64;
                let setup = self.cfg.flush_time(n * u64::from(self.key_size)) + self.cfg.config_time();
                self.current = Some(Current { batch, started: ctx.now(), done: None, t_lookup: SimTime::ZERO, lines_left: 0 });
                ctx.schedule_in(setup, ctx.me(), Msg::Cpu(CpuMsg::Configured));
            }
            CpuMsg::Configured => {
                let batch = self.cur()?.batch;
                let job = AccelJob {
                    batch_id: batch,
                    queries: Arc::clone(&self.batches[batch]),
                    table: Arc::clone(&self.table),
                    key_base: self.key_base,
                    scan_len: self.scan_len,
                    notify: ctx.me(),
                };
                ctx.schedule_in(SimTime::ZERO, self.accel, Msg::Accel(AccelMsg::Start(Box::new(job))));
            }
            CpuMsg::AccelDone(done) => {
                let bytes = done.values.len() as u64 * u64::from(self.value_size);
                let inval = self.cfg.invalidate_time(bytes);
                let lines = self.cfg.lines(bytes) as u32;
                let cur = self.cur()?;
                if done.batch_id != cur.batch {
                    return Err(format!("completion for batch {} while running {}", done.batch_id, cur.batch).into());
                }
                cur.done = Some(done);
                cur.lines_left = lines;
                ctx.schedule_in(inval, ctx.me(), Msg::Cpu(CpuMsg::Invalidated));
            }
            CpuMsg::Invalidated => {
                let now = ctx.now();
                let cur = self.cur()?;
                cur.t_lookup = now - cur.started;
                if cur.lines_left == 0 {
                    ctx.schedule_in(SimTime::ZERO, ctx.me(), Msg::Cpu(CpuMsg::ScratchData { line: u32::MAX }));
                } else {
                    ctx.schedule_in(SimTime::ZERO, self.accel, Msg::Accel(AccelMsg::ScratchRead { line: 0, reply_to: ctx.me() }));
                }
            }
            CpuMsg::ScratchData { line } => {
                let now = ctx.now();
                let accel = self.accel;
                let me = ctx.me();
                let cur = self.cur()?;
                cur.lines_left = cur.lines_left.saturating_sub(1);
                if cur.lines_left > 0 {
                    ctx.schedule_in(SimTime::ZERO, accel, Msg::Accel(AccelMsg::ScratchRead { line: line + 1, reply_to: me }));
                    return Ok(());
                }
                let cur = self.current.take().unwrap();
                let done = cur.done.expect("values arrived before readback");
                self.outcomes.push(BatchOutcome {
                    batch: cur.batch,
                    accel: self.index,
                    values: done.values,
                    started: cur.started,
                    t_lookup: cur.t_lookup,
                    t_full_lookup: now - cur.started,
                    accel_busy: done.finished - done.started,
                    stats: done.stats,
                });
                self.request_work(ctx);
            }
        }
        Ok(())
    }
}

/// Shared batch queue. Hands the next batch to whichever CPU asks first.
#[derive(Debug)]
pub struct Dispatcher {
    queue: VecDeque<usize>,
    cpu_index: Vec<ComponentId>,
    pub plan: DispatchPlan,
}

impl Component<Msg> for Dispatcher {
    fn handle(&mut self, msg: Msg, ctx: &mut Context) -> Result<(), Fault> {
        let Msg::Dispatch(DispatchMsg::RequestWork { cpu }) = msg else {
            return Err(format!("dispatcher received unexpected message {msg:?}").into());
        };
        let slot = self.cpu_index.iter().position(|&c| c == cpu).ok_or("work request from unknown CPU")?;
        let reply = match self.queue.pop_front() {
            Some(b) => {
                self.plan.assignments[slot].push(b);
                CpuMsg::Assign(b)
            }
            None => CpuMsg::NoWork,
        };
        ctx.schedule_in(SimTime::ZERO, cpu, Msg::Cpu(reply));
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DispatchPlan {
    pub total_batches: usize,
    pub assignments: Vec<Vec<usize>>,
}

/// A whole simulated system: one memory, `n_accel` CPU/accelerator pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Platform {
    pub memory: MemoryConfig,
    pub accel: AccelConfig,
    pub cpu: CpuConfig,
    pub n_accel: usize,
    pub trace: bool,
    pub pipeline_log: bool,
}

impl Platform {
    pub fn new(memory: MemoryConfig, accel: AccelConfig, cpu: CpuConfig) -> Self {
        Platform { memory, accel, cpu, n_accel: 1, trace: false, pipeline_log: false }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// Sorted by batch index.
    pub outcomes: Vec<BatchOutcome>,
    pub plan: DispatchPlan,
    /// Time the last CPU finished its last readback.
    pub wall: SimTime,
    /// Time the last lookup interval ended.
    pub lookup_end: SimTime,
    pub mem_stats: MemStats,
    pub trace: Option<MemEventSeq>,
    pub pipeline_logs: Vec<Vec<LogEntry>>,
    pub layout: MemoryLayout,
    pub scan_len: u32,
    pub events: u64,
}

impl RunReport {
    pub fn total_queries(&self) -> usize {
        self.outcomes.iter().map(|o| o.values.len()).sum()
    }

    /// Summed lookup intervals of the busiest accelerator.
    pub fn lookup_busy(&self) -> SimTime {
        let mut per = vec![SimTime::ZERO; self.plan.assignments.len()];
        for o in &self.outcomes {
            per[o.accel] += o.t_lookup;
        }
        per.into_iter().max().unwrap_or(SimTime::ZERO)
    }

    /// Millions of lookups per second over the lookup intervals.
    pub fn mlookups_per_s(&self) -> f64 {
        rate(self.total_queries(), self.lookup_busy())
    }

    pub fn full_mlookups_per_s(&self) -> f64 {
        rate(self.total_queries(), self.wall)
    }

    pub fn values(&self) -> impl Iterator<Item = &u32> {
        self.outcomes.iter().flat_map(|o| o.values.iter())
    }
}

/// `queries / time` in millions per second.
pub fn rate(queries: usize, time: SimTime) -> f64 {
    if time == SimTime::ZERO {
        0.0
    } else {
        queries as f64 / time.as_ns() * 1e3
    }
}

/// Builds the platform, runs every batch to completion and collects timing.
pub fn run_platform(table: &Arc<HashTable>, batches: &[Arc<QueryBatch>], p: &Platform) -> Result<RunReport, Error> {
    if p.n_accel == 0 {
        return Err(Error::Config { key: "n_accel".into(), reason: "at least one accelerator is required".into() });
    }
    p.accel.validate()?;
    p.cpu.validate()?;
    let scan_len = p.accel.resolved_scan_len(table);
    if scan_len == 0 && batches.iter().any(|b| !b.is_empty()) {
        return Err(Error::Config { key: "accel.scan_len".into(), reason: "table is empty; set an explicit scan length".into() });
    }
    let max_batch = batches.iter().map(|b| b.len()).max().unwrap_or(0) as u64;
    let layout = MemoryLayout::new(table, max_batch * u64::from(p.accel.key_size), p.n_accel as u64);
    if layout.end() > p.memory.memory_size {
        return Err(MemError::AddressOutOfRange { address: layout.key_base, size: 0, memory_size: p.memory.memory_size }.into());
    }

    let mut k = Kernel::new();
    let mut mm = MemoryManager::new(&p.memory)?;
    if p.trace {
        mm.enable_trace();
    }
    let mem = k.add_component(mm);
    let shared = Arc::new(batches.to_vec());
    let dispatcher = k.add_component(Dispatcher {
        queue: (0..batches.len()).collect(),
        cpu_index: Vec::new(),
        plan: DispatchPlan { total_batches: batches.len(), assignments: vec![Vec::new(); p.n_accel] },
    });
    let mut pairs = Vec::with_capacity(p.n_accel);
    for i in 0..p.n_accel {
        let mut acc = Accelerator::new(p.accel.clone(), mem)?;
        if p.pipeline_log {
            acc.enable_log();
        }
        let accel = k.add_component(acc);
        let cpu = k.add_component(Cpu {
            cfg: p.cpu.clone(),
            index: i,
            accel,
            dispatcher,
            table: Arc::clone(table),
            batches: Arc::clone(&shared),
            key_base: layout.key_buffer(i as u64),
            scan_len,
            key_size: p.accel.key_size,
            value_size: p.accel.value_size,
            current: None,
            outcomes: Vec::new(),
        });
        pairs.push((accel, cpu));
    }
    k.component_mut::<Dispatcher>(dispatcher).unwrap().cpu_index = pairs.iter().map(|&(_, c)| c).collect();
    for &(_, cpu) in &pairs {
        k.schedule(SimTime::ZERO, cpu, Msg::Cpu(CpuMsg::Go))?;
    }
    k.run()?;

    let mut outcomes = Vec::new();
    let mut pipeline_logs = Vec::new();
    for &(accel, cpu) in &pairs {
        outcomes.append(&mut k.component_mut::<Cpu>(cpu).unwrap().outcomes);
        pipeline_logs.push(k.component::<Accelerator>(accel).unwrap().log().to_vec());
    }
    outcomes.sort_by_key(|o| o.batch);
    if outcomes.len() != batches.len() {
        return Err(Error::Validation(format!("{} of {} batches completed", outcomes.len(), batches.len())));
    }
    let wall = outcomes.iter().map(|o| o.started + o.t_full_lookup).max().unwrap_or(SimTime::ZERO);
    let lookup_end = outcomes.iter().map(|o| o.started + o.t_lookup).max().unwrap_or(SimTime::ZERO);
    let mm = k.component_mut::<MemoryManager>(mem).unwrap();
    let mem_stats = mm.stats_snapshot();
    let trace = mm.take_trace();
    let plan = k.component::<Dispatcher>(dispatcher).unwrap().plan.clone();
    Ok(RunReport { outcomes, plan, wall, lookup_end, mem_stats, trace, pipeline_logs, layout, scan_len, events: k.events_delivered() })
}

/// Runs one batch on a single CPU/accelerator pair.
pub fn run_lookup_cycle(batch: &QueryBatch, table: &Arc<HashTable>, accel: &AccelConfig, mem: &MemoryConfig, cpu: &CpuConfig) -> Result<crate::accel::BatchResult, Error> {
    let p = Platform::new(mem.clone(), accel.clone(), cpu.clone());
    let report = run_platform(table, &[Arc::new(batch.clone())], &p)?;
    let o = report.outcomes.into_iter().next().expect("one batch");
    Ok(crate::accel::BatchResult {
        values: o.values,
        t_lookup: o.t_lookup,
        t_full_lookup: o.t_full_lookup,
        mem_stats_delta: report.mem_stats,
        accel_stats: o.stats,
    })
}

/// Aggregate result of a multi-accelerator run.
#[derive(Clone, Debug)]
pub struct Throughput {
    pub plan: DispatchPlan,
    pub mlookups_per_s: f64,
    pub full_mlookups_per_s: f64,
    pub wall: SimTime,
}

/// Feeds `batches` to `platform.n_accel` accelerators with dynamic load
/// balancing.
pub fn dispatch(table: &Arc<HashTable>, batches: &[Arc<QueryBatch>], platform: &Platform) -> Result<Throughput, Error> {
    let r = run_platform(table, batches, platform)?;
    Ok(Throughput { mlookups_per_s: r.mlookups_per_s(), full_mlookups_per_s: r.full_mlookups_per_s(), wall: r.wall, plan: r.plan })
}
