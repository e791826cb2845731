//! Lookup accelerator pipeline.
//!
//! ```text
//! LSU0-R ──> splitter ──> FIFO ─────────────┐
//!                  └────> hash unit ──> LSU1-R ──> CSU ──> LSU1-W ──> scratchpad
//! ```
//!
//! LSU0-R streams query keys from memory; each key is queued in the FIFO and
//! hashed to a slot index. LSU1-R fetches `scan_len` contiguous entries from
//! that slot. The compare/select unit matches the streamed entries against
//! the FIFO head and emits the value or [`NOT_FOUND`] after the whole window,
//! so hits and misses cost the same. Both LSUs share one memory port and one
//! read-data bus unless `separate_ports` is set.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::host::CpuMsg;
use crate::kvstore::{hash_key, HashTable, TableEntry, ENTRY_BYTES, NOT_FOUND};
use crate::memmodel::{AccessClass, MemOp, MemRequest, MemResponse, MemStats, MemoryConfig};
use crate::simkernel::{Clock, Component, ComponentId, Fault, SimTime};
use crate::system::{Context, Msg};
use crate::workload::QueryBatch;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccelError {
    #[error("invalid accelerator configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccelConfig {
    pub clock: Clock,
    /// Read-data bus width in bytes per cycle.
    pub bus_width: u32,
    pub hash_delay: u32,
    /// Compare/select latency after the last entry of a window, in cycles.
    pub csu_delay: u32,
    /// Cycles between two request issues on one port.
    pub lsu_issue_delay: u32,
    pub fifo_depth: u32,
    pub scratchpad_latency: SimTime,
    pub max_outstanding: u32,
    pub opt_batch_keys: bool,
    pub opt_double_bus: bool,
    pub opt_double_outstanding: bool,
    /// Entries scanned per query; `None` uses the table's max probe length.
    pub scan_len: Option<u32>,
    pub separate_ports: bool,
    pub key_size: u32,
    pub value_size: u32,
    pub max_packet: u32,
}

impl Default for AccelConfig {
    fn default() -> Self {
        AccelConfig {
            clock: Clock::from_ghz(1.25),
            bus_width: 8,
            hash_delay: 4,
            csu_delay: 2,
            lsu_issue_delay: 1,
            fifo_depth: 64,
            scratchpad_latency: SimTime::from_ns(4),
            max_outstanding: 16,
            opt_batch_keys: false,
            opt_double_bus: false,
            opt_double_outstanding: false,
            scan_len: None,
            separate_ports: false,
            key_size: 8,
            value_size: 4,
            max_packet: 128,
        }
    }
}

impl AccelConfig {
    pub fn validate(&self) -> Result<(), AccelError> {
        let bad = |m: String| Err(AccelError::Config(m));
        if self.bus_width == 0 {
            return bad("accel.bus_width_bytes must be positive".into());
        }
        if self.opt_double_bus && self.bus_width != 16 {
            return bad(format!("opt_double_bus requires a 16 B bus, found {}", self.bus_width));
        }
        if self.opt_double_outstanding && self.max_outstanding != 32 {
            return bad(format!("opt_double_outstanding requires 32 outstanding requests, found {}", self.max_outstanding));
        }
        if self.max_outstanding == 0 {
            return bad("accel.max_outstanding must be at least 1".into());
        }
        if self.lsu_issue_delay == 0 {
            return bad("accel.lsu_issue_delay must be at least 1 cycle".into());
        }
        if self.key_size == 0 || self.key_size > self.max_packet || self.max_packet == 0 {
            return bad("key size must be in 1..=max packet".into());
        }
        if self.value_size == 0 {
            return bad("value size must be positive".into());
        }
        if self.fifo_depth < self.keys_per_key_read() {
            return bad(format!("accel.fifo_depth {} is smaller than one key read ({} keys)", self.fifo_depth, self.keys_per_key_read()));
        }
        if self.scan_len == Some(0) {
            return bad("accel.scan_len must be at least 1".into());
        }
        Ok(())
    }

    pub fn keys_per_key_read(&self) -> u32 {
        if self.opt_batch_keys {
            (self.max_packet / self.key_size).max(1)
        } else {
            1
        }
    }

    pub fn resolved_scan_len(&self, table: &HashTable) -> u32 {
        self.scan_len.unwrap_or_else(|| table.max_probe_len())
    }
}

/// Cumulative optimization levels; each includes the previous ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OptSet {
    Base,
    BatchKeys,
    DoubleBus,
    DoubleRequests,
}

impl OptSet {
    pub const ALL: [OptSet; 4] = [OptSet::Base, OptSet::BatchKeys, OptSet::DoubleBus, OptSet::DoubleRequests];

    pub fn name(self) -> &'static str {
        match self {
            OptSet::Base => "base",
            OptSet::BatchKeys => "batch_keys",
            OptSet::DoubleBus => "2x_bus",
            OptSet::DoubleRequests => "2x_requests",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OptSet::Base => "Base",
            OptSet::BatchKeys => "Batch Keys",
            OptSet::DoubleBus => "2x Bus Width",
            OptSet::DoubleRequests => "2x More Requests",
        }
    }

    pub fn parse(s: &str) -> Option<OptSet> {
        OptSet::ALL.into_iter().find(|o| o.name() == s.trim())
    }

    /// Applies this level to a base-width configuration.
    pub fn apply(self, base: &AccelConfig) -> AccelConfig {
        let mut cfg = base.clone();
        cfg.opt_batch_keys = self >= OptSet::BatchKeys;
        cfg.opt_double_bus = self >= OptSet::DoubleBus;
        cfg.opt_double_outstanding = self >= OptSet::DoubleRequests;
        if cfg.opt_double_bus {
            cfg.bus_width = 16;
        }
        if cfg.opt_double_outstanding {
            cfg.max_outstanding = 32;
        }
        cfg
    }
}

/// Cycles to move one table entry through the read-data path.
pub fn effective_entry_cycles(cfg: &AccelConfig) -> u32 {
    (ENTRY_BYTES as u32).div_ceil(cfg.bus_width).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyRead {
    pub address: u64,
    pub size: u32,
    pub first_key: u32,
    pub n_keys: u32,
}

/// Key reads for a batch stored contiguously at `key_base`: one per key, or
/// packed into max-size packets with `opt_batch_keys`.
pub fn plan_key_reads(batch_size: usize, key_base: u64, cfg: &AccelConfig) -> Vec<KeyRead> {
    let per = cfg.keys_per_key_read() as usize;
    (0..batch_size)
        .step_by(per)
        .map(|first| {
            let n = per.min(batch_size - first) as u32;
            KeyRead { address: key_base + first as u64 * u64::from(cfg.key_size), size: n * cfg.key_size, first_key: first as u32, n_keys: n }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeRead {
    pub address: u64,
    pub size: u32,
    pub first_entry: u64,
    pub n_entries: u32,
}

/// Splits the `scan_len`-entry window at `index` into packets, breaking
/// at the end of the table.
pub fn plan_probe_reads(index: u64, scan_len: u32, table: &HashTable, cfg: &AccelConfig) -> Vec<ProbeRead> {
    let per = (u64::from(cfg.max_packet) / ENTRY_BYTES).max(1);
    let cap = table.capacity();
    let mut out = Vec::new();
    let mut slot = index % cap;
    let mut left = u64::from(scan_len);
    while left > 0 {
        let to_end = cap - slot;
        let n = left.min(per).min(to_end);
        out.push(ProbeRead { address: table.address_of(slot), size: (n * ENTRY_BYTES) as u32, first_entry: slot, n_entries: n as u32 });
        left -= n;
        slot = (slot + n) % cap;
    }
    out
}

/// First occupied entry holding `target`, else [`NOT_FOUND`]. Always walks
/// the whole window.
pub fn csu_compare<'a, I: IntoIterator<Item = &'a TableEntry>>(entries: I, target: u64) -> u32 {
    let mut out = NOT_FOUND;
    for e in entries {
        if out == NOT_FOUND && e.is_occupied() && e.key == target {
            out = e.value;
        }
    }
    out
}

/// Work order handed to an accelerator by its CPU.
#[derive(Clone, Debug)]
pub struct AccelJob {
    pub batch_id: usize,
    pub queries: Arc<QueryBatch>,
    pub table: Arc<HashTable>,
    pub key_base: u64,
    pub scan_len: u32,
    pub notify: ComponentId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccelDone {
    pub batch_id: usize,
    pub values: Vec<u32>,
    pub started: SimTime,
    pub finished: SimTime,
    pub stats: AccelStats,
}

#[derive(Debug)]
pub enum AccelMsg {
    Start(Box<AccelJob>),
    Tick,
    Ingested(u64),
    Hashed(u32),
    CsuOut(u32),
    /// CPU read of one scratchpad line.
    ScratchRead { line: u32, reply_to: ComponentId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    KeyIssue,
    KeyIngest,
    Hash,
    ProbeIssue,
    ProbeIngest,
    CsuOut,
    ValueWrite,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub time: SimTime,
    pub stage: Stage,
    /// Query index, or first key of a key read.
    pub query: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccelStats {
    pub key_requests: u64,
    pub probe_requests: u64,
    pub entries_fetched: u64,
    pub peak_outstanding: u32,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Key(usize),
    Probe(u32, u32),
}

#[derive(Debug)]
struct Run {
    job: AccelJob,
    started: SimTime,
    key_plan: Vec<KeyRead>,
    next_key_read: usize,
    keys_requested: u32,
    chunks_arrived: BTreeSet<usize>,
    next_chunk: usize,
    fifo_len: u32,
    hash_free: SimTime,
    probe_queue: VecDeque<(u32, ProbeRead)>,
    /// Packets still to ingest per query; `u32::MAX` until hashed.
    packets_left: Vec<u32>,
    ready_at: Vec<SimTime>,
    index: Vec<u64>,
    csu_next: usize,
    csu_last: Option<SimTime>,
    results_out: u32,
    write_free: SimTime,
    last_write: SimTime,
    values: Vec<u32>,
    stats: AccelStats,
}

#[derive(Debug, Default)]
struct BusQueue {
    keys: VecDeque<(u64, u32)>,
    probes: VecDeque<(u64, u32)>,
    busy: bool,
}

#[derive(Debug)]
pub struct Accelerator {
    cfg: AccelConfig,
    mem: ComponentId,
    entry_cycles: u32,
    run: Option<Run>,
    inflight: BTreeMap<u64, Pending>,
    /// Requests issued and not yet answered by memory.
    outstanding: u32,
    next_tag: u64,
    issue_free: SimTime,
    bus_free: [SimTime; 2],
    /// Arrived responses waiting for the read-data bus; key chunks go first.
    bus_wait: [BusQueue; 2],
    prefer_probe: bool,
    tick_armed: bool,
    log: Option<Vec<LogEntry>>,
}

impl Accelerator {
    pub fn new(cfg: AccelConfig, mem: ComponentId) -> Result<Self, AccelError> {
        cfg.validate()?;
        Ok(Accelerator {
            entry_cycles: effective_entry_cycles(&cfg),
            cfg,
            mem,
            run: None,
            inflight: BTreeMap::new(),
            outstanding: 0,
            next_tag: 0,
            issue_free: SimTime::ZERO,
            bus_free: [SimTime::ZERO; 2],
            bus_wait: Default::default(),
            prefer_probe: false,
            tick_armed: false,
            log: None,
        })
    }

    pub fn config(&self) -> &AccelConfig {
        &self.cfg
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[LogEntry] {
        self.log.as_deref().unwrap_or(&[])
    }

    fn note(&mut self, time: SimTime, stage: Stage, query: u32) {
        if let Some(log) = &mut self.log {
            log.push(LogEntry { time, stage, query });
        }
    }

    fn cycles(&self, n: u32) -> SimTime {
        self.cfg.clock.cycles(u64::from(n))
    }

    fn key_ready(&self) -> bool {
        let Some(r) = &self.run else { return false };
        match r.key_plan.get(r.next_key_read) {
            Some(kr) => r.keys_requested - r.results_out + kr.n_keys <= self.cfg.fifo_depth,
            None => false,
        }
    }

    fn probe_ready(&self) -> bool {
        self.run.as_ref().is_some_and(|r| !r.probe_queue.is_empty())
    }

    fn slot_free(&self) -> bool {
        self.outstanding < self.cfg.max_outstanding
    }

    fn arm_tick(&mut self, ctx: &mut Context) {
        if self.tick_armed || !self.slot_free() || !(self.key_ready() || self.probe_ready()) {
            return;
        }
        let at = self.cfg.clock.next_edge(ctx.now()).max(self.issue_free);
        ctx.wake_at(at, Msg::Accel(AccelMsg::Tick)).expect("tick is never in the past");
        self.tick_armed = true;
    }

    fn start(&mut self, job: AccelJob, ctx: &mut Context) -> Result<(), Fault> {
        if self.run.is_some() {
            return Err("accelerator started while busy".into());
        }
        let n = job.queries.len();
        if job.queries.expected.len() != n || job.queries.probe_index.as_ref().is_some_and(|p| p.len() != n) {
            return Err("query batch annotations do not match its length".into());
        }
        let now = ctx.now();
        let key_plan = plan_key_reads(n, job.key_base, &self.cfg);
        self.run = Some(Run {
            started: now,
            key_plan,
            next_key_read: 0,
            keys_requested: 0,
            chunks_arrived: BTreeSet::new(),
            next_chunk: 0,
            fifo_len: 0,
            hash_free: SimTime::ZERO,
            probe_queue: VecDeque::new(),
            packets_left: vec![u32::MAX; n],
            ready_at: vec![SimTime::ZERO; n],
            index: vec![0; n],
            csu_next: 0,
            csu_last: None,
            results_out: 0,
            write_free: SimTime::ZERO,
            last_write: now,
            values: vec![NOT_FOUND; n],
            stats: AccelStats::default(),
            job,
        });
        if n == 0 {
            return self.finish(ctx);
        }
        self.arm_tick(ctx);
        Ok(())
    }

    fn issue(&mut self, which: Pending, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let tag = self.next_tag;
        self.next_tag += 1;
        let run = self.run.as_mut().expect("running");
        let mut which = which;
        let (address, size, class, stage, q) = match which {
            Pending::Key(i) => {
                let kr = run.key_plan[i];
                run.next_key_read += 1;
                run.keys_requested += kr.n_keys;
                run.stats.key_requests += 1;
                (kr.address, kr.size, AccessClass::KeyRead, Stage::KeyIssue, kr.first_key)
            }
            Pending::Probe(q, _) => {
                let (_, pr) = run.probe_queue.pop_front().expect("probe queued");
                run.stats.probe_requests += 1;
                run.stats.entries_fetched += u64::from(pr.n_entries);
                which = Pending::Probe(q, pr.n_entries);
                (pr.address, pr.size, AccessClass::ProbeRead, Stage::ProbeIssue, q)
            }
        };
        self.inflight.insert(tag, which);
        self.outstanding += 1;
        let outstanding = self.outstanding;
        if outstanding > self.cfg.max_outstanding {
            return Err(format!("{outstanding} requests in flight exceeds limit {}", self.cfg.max_outstanding).into());
        }
        run.stats.peak_outstanding = run.stats.peak_outstanding.max(outstanding);
        let req = MemRequest { tag, op: MemOp::Read, address, size, originator: ctx.me(), issued_at: now, class };
        ctx.schedule(now, self.mem, Msg::MemRequest(req))?;
        self.note(now, stage, q);
        Ok(())
    }

    fn tick(&mut self, ctx: &mut Context) -> Result<(), Fault> {
        self.tick_armed = false;
        let mut issued = false;
        let next_probe = |s: &Self| s.run.as_ref().and_then(|r| r.probe_queue.front()).map(|(q, _)| Pending::Probe(*q, 0));
        if self.cfg.separate_ports {
            if self.key_ready() && self.slot_free() {
                let i = self.run.as_ref().unwrap().next_key_read;
                self.issue(Pending::Key(i), ctx)?;
                issued = true;
            }
            if self.probe_ready() && self.slot_free() {
                let p = next_probe(self).unwrap();
                self.issue(p, ctx)?;
                issued = true;
            }
        } else if self.slot_free() {
            let key = self.key_ready();
            let probe = self.probe_ready();
            let take_probe = probe && (self.prefer_probe || !key);
            if take_probe {
                let p = next_probe(self).unwrap();
                self.issue(p, ctx)?;
                self.prefer_probe = false;
                issued = true;
            } else if key {
                let i = self.run.as_ref().unwrap().next_key_read;
                self.issue(Pending::Key(i), ctx)?;
                self.prefer_probe = true;
                issued = true;
            }
        }
        if issued {
            self.issue_free = ctx.now() + self.cycles(self.cfg.lsu_issue_delay);
        }
        self.arm_tick(ctx);
        Ok(())
    }

    fn on_response(&mut self, resp: MemResponse, ctx: &mut Context) -> Result<(), Fault> {
        let tag = resp.request.tag;
        let kind = *self.inflight.get(&tag).ok_or_else(|| format!("response for unknown tag {tag}"))?;
        let port = match kind {
            Pending::Probe(..) if self.cfg.separate_ports => 1,
            _ => 0,
        };
        let beats = match kind {
            Pending::Probe(_, entries) => entries * self.entry_cycles,
            Pending::Key(_) => resp.request.size.div_ceil(self.cfg.bus_width).max(1),
        };
        let wait = &mut self.bus_wait[port];
        match kind {
            Pending::Key(_) => wait.keys.push_back((tag, beats)),
            Pending::Probe(..) => wait.probes.push_back((tag, beats)),
        }
        self.next_ingest(port, ctx)?;
        self.outstanding -= 1;
        self.arm_tick(ctx);
        Ok(())
    }

    fn next_ingest(&mut self, port: usize, ctx: &mut Context) -> Result<(), Fault> {
        let wait = &mut self.bus_wait[port];
        if wait.busy {
            return Ok(());
        }
        let Some((tag, beats)) = wait.keys.pop_front().or_else(|| wait.probes.pop_front()) else { return Ok(()) };
        wait.busy = true;
        let start = self.cfg.clock.next_edge(ctx.now()).max(self.bus_free[port]);
        let end = start + self.cycles(beats);
        self.bus_free[port] = end;
        ctx.wake_at(end, Msg::Accel(AccelMsg::Ingested(tag)))?;
        Ok(())
    }

    fn on_ingested(&mut self, tag: u64, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let kind = self.inflight.remove(&tag).ok_or_else(|| format!("ingest for unknown tag {tag}"))?;
        let port = match kind {
            Pending::Probe(..) if self.cfg.separate_ports => 1,
            _ => 0,
        };
        self.bus_wait[port].busy = false;
        self.next_ingest(port, ctx)?;
        match kind {
            Pending::Key(chunk) => {
                let first = self.run.as_ref().unwrap().key_plan[chunk].first_key;
                self.note(now, Stage::KeyIngest, first);
                self.deliver_keys(chunk, ctx)?;
            }
            Pending::Probe(q, _) => {
                self.note(now, Stage::ProbeIngest, q);
                let run = self.run.as_mut().unwrap();
                let left = &mut run.packets_left[q as usize];
                *left -= 1;
                if *left == 0 {
                    run.ready_at[q as usize] = now;
                    self.try_csu(ctx)?;
                }
            }
        }
        self.arm_tick(ctx);
        Ok(())
    }

    /// Releases arrived key chunks to the splitter in key order.
    fn deliver_keys(&mut self, chunk: usize, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let one = self.cycles(1);
        let hash_lat = self.cycles(self.cfg.hash_delay);
        let depth = self.cfg.fifo_depth;
        let run = self.run.as_mut().unwrap();
        run.chunks_arrived.insert(chunk);
        while run.chunks_arrived.remove(&run.next_chunk) {
            let kr = run.key_plan[run.next_chunk];
            run.next_chunk += 1;
            for q in kr.first_key..kr.first_key + kr.n_keys {
                run.fifo_len += 1;
                if run.fifo_len > depth {
                    return Err(format!("FIFO overflow: {} keys in a {depth}-deep FIFO", run.fifo_len).into());
                }
                let start = run.hash_free.max(now);
                run.hash_free = start + one;
                ctx.wake_at(start + hash_lat, Msg::Accel(AccelMsg::Hashed(q)))?;
            }
        }
        Ok(())
    }

    fn on_hashed(&mut self, q: u32, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let cfg = self.cfg.clone();
        let run = self.run.as_mut().unwrap();
        let table = Arc::clone(&run.job.table);
        let idx = match &run.job.queries.probe_index {
            Some(p) => p[q as usize] % table.capacity(),
            None => hash_key(run.job.queries.keys[q as usize], table.capacity()),
        };
        run.index[q as usize] = idx;
        let plan = plan_probe_reads(idx, run.job.scan_len, &table, &cfg);
        run.packets_left[q as usize] = plan.len() as u32;
        run.probe_queue.extend(plan.into_iter().map(|p| (q, p)));
        self.note(now, Stage::Hash, q);
        if self.run.as_ref().unwrap().packets_left[q as usize] == 0 {
            self.run.as_mut().unwrap().ready_at[q as usize] = now;
            self.try_csu(ctx)?;
        }
        self.arm_tick(ctx);
        Ok(())
    }

    /// Schedules CSU outputs for every query whose window is complete, in
    /// FIFO order.
    fn try_csu(&mut self, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let one = self.cycles(1);
        let lat = self.cycles(self.cfg.csu_delay);
        let run = self.run.as_mut().unwrap();
        while run.csu_next < run.packets_left.len() && run.packets_left[run.csu_next] == 0 {
            let q = run.csu_next;
            let mut out = (run.ready_at[q] + lat).max(now);
            if let Some(prev) = run.csu_last {
                out = out.max(prev + one);
            }
            run.csu_last = Some(out);
            run.csu_next += 1;
            ctx.wake_at(out, Msg::Accel(AccelMsg::CsuOut(q as u32)))?;
        }
        Ok(())
    }

    fn on_csu_out(&mut self, q: u32, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let one = self.cycles(1);
        let spad = self.cfg.scratchpad_latency;
        let run = self.run.as_mut().unwrap();
        if q != run.results_out {
            return Err(format!("CSU emitted query {q} out of FIFO order (expected {})", run.results_out).into());
        }
        let table = &run.job.table;
        let idx = run.index[q as usize];
        let window = (0..u64::from(run.job.scan_len)).map(|d| table.entry(idx + d));
        run.values[q as usize] = csu_compare(window, run.job.queries.keys[q as usize]);
        run.fifo_len -= 1;
        run.results_out += 1;
        let w = run.write_free.max(now);
        run.write_free = w + one;
        run.last_write = run.last_write.max(w + spad);
        let done = run.results_out as usize == run.values.len();
        self.note(now, Stage::CsuOut, q);
        self.note(w + spad, Stage::ValueWrite, q);
        if done {
            self.finish(ctx)?;
        } else {
            self.arm_tick(ctx);
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut Context) -> Result<(), Fault> {
        let run = self.run.take().expect("running");
        let at = run.last_write.max(ctx.now());
        self.note(at, Stage::Done, run.values.len() as u32);
        let done = AccelDone { batch_id: run.job.batch_id, values: run.values, started: run.started, finished: at, stats: run.stats };
        ctx.schedule(at, run.job.notify, Msg::Cpu(CpuMsg::AccelDone(Box::new(done))))?;
        Ok(())
    }
}

impl Component<Msg> for Accelerator {
    fn handle(&mut self, msg: Msg, ctx: &mut Context) -> Result<(), Fault> {
        match msg {
            Msg::Accel(AccelMsg::Start(job)) => self.start(*job, ctx),
            Msg::Accel(AccelMsg::Tick) => self.tick(ctx),
            Msg::MemResponse(resp) => self.on_response(resp, ctx),
            Msg::Accel(AccelMsg::Ingested(tag)) => self.on_ingested(tag, ctx),
            Msg::Accel(AccelMsg::Hashed(q)) => self.on_hashed(q, ctx),
            Msg::Accel(AccelMsg::CsuOut(q)) => self.on_csu_out(q, ctx),
            Msg::Accel(AccelMsg::ScratchRead { line, reply_to }) => {
                ctx.schedule_in(self.cfg.scratchpad_latency, reply_to, Msg::Cpu(CpuMsg::ScratchData { line }));
                Ok(())
            }
            other => Err(format!("accelerator received unexpected message {other:?}").into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchResult {
    pub values: Vec<u32>,
    pub t_lookup: SimTime,
    pub t_full_lookup: SimTime,
    pub mem_stats_delta: MemStats,
    pub accel_stats: AccelStats,
}

/// Runs one batch through a single accelerator driven by a zero-cost CPU,
/// so `t_lookup` is the pipeline time alone.
pub fn run_batch(batch: &QueryBatch, table: &Arc<HashTable>, config: &AccelConfig, mem: &MemoryConfig) -> Result<BatchResult, crate::Error> {
    crate::host::run_lookup_cycle(batch, table, config, mem, &crate::host::CpuConfig::zero_cost())
}

/// Synthetic read stream: `count` reads of `size` bytes issued on clock
/// edges, at most `max_outstanding` in flight. Used to check a memory
/// backend against closed-form throughput.
#[derive(Debug)]
pub struct ReadStream {
    clock: Clock,
    mem: ComponentId,
    size: u32,
    stride: u64,
    count: u64,
    max_outstanding: u32,
    issued: u64,
    in_flight: u32,
    armed: bool,
    /// `(tag, completion)` in arrival order; tags number issues from 0.
    pub completions: Vec<(u64, SimTime)>,
}

#[derive(Debug)]
pub struct StreamGo;

impl ReadStream {
    pub fn new(clock: Clock, mem: ComponentId, size: u32, count: u64, max_outstanding: u32) -> Self {
        ReadStream { clock, mem, size, stride: 128, count, max_outstanding, issued: 0, in_flight: 0, armed: false, completions: Vec::new() }
    }

    fn arm(&mut self, ctx: &mut Context) {
        if !self.armed && self.issued < self.count && self.in_flight < self.max_outstanding {
            let at = self.clock.next_edge(ctx.now());
            ctx.wake_at(at, Msg::Accel(AccelMsg::Tick)).expect("future edge");
            self.armed = true;
        }
    }
}

impl Component<Msg> for ReadStream {
    fn handle(&mut self, msg: Msg, ctx: &mut Context) -> Result<(), Fault> {
        match msg {
            Msg::Accel(AccelMsg::Tick) => {
                self.armed = false;
                if self.issued < self.count && self.in_flight < self.max_outstanding {
                    let req = MemRequest {
                        tag: self.issued,
                        op: MemOp::Read,
                        address: self.issued * self.stride,
                        size: self.size,
                        originator: ctx.me(),
                        issued_at: ctx.now(),
                        class: AccessClass::Stream,
                    };
                    self.issued += 1;
                    self.in_flight += 1;
                    ctx.schedule(ctx.now(), self.mem, Msg::MemRequest(req))?;
                    if self.issued < self.count && self.in_flight < self.max_outstanding {
                        ctx.wake_at(ctx.now() + self.clock.period, Msg::Accel(AccelMsg::Tick))?;
                        self.armed = true;
                    }
                }
                Ok(())
            }
            Msg::MemResponse(r) => {
                self.in_flight -= 1;
                self.completions.push((r.request.tag, r.completed_at));
                self.arm(ctx);
                Ok(())
            }
            other => Err(format!("read stream received {other:?}").into()),
        }
    }
}

/// Runs a [`ReadStream`] against `mem` and returns each request's
/// completion time, in issue order.
pub fn run_read_stream(mem: &MemoryConfig, clock: Clock, size: u32, count: u64, max_outstanding: u32) -> Result<Vec<SimTime>, crate::Error> {
    let mut k = crate::system::Kernel::new();
    let m = k.add_component(crate::memmodel::MemoryManager::new(mem)?);
    let s = k.add_component(ReadStream::new(clock, m, size, count, max_outstanding));
    k.schedule(SimTime::ZERO, s, Msg::Accel(AccelMsg::Tick))?;
    k.run()?;
    let mut done = k.component::<ReadStream>(s).expect("stream").completions.clone();
    done.sort();
    Ok(done.into_iter().map(|(_, t)| t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kvstore::build_table;

    #[test]
    fn key_read_plans() {
        let off = AccelConfig::default();
        let on = OptSet::BatchKeys.apply(&off);
        let a = plan_key_reads(1024, 0, &off);
        assert_eq!(a.len(), 1024);
        assert!(a.iter().all(|r| r.size == 8));
        let b = plan_key_reads(1024, 0, &on);
        assert_eq!(b.len(), 64);
        assert!(b.iter().all(|r| r.size == 128 && r.n_keys == 16));
        assert_eq!(b[1].address, 128);
        let c = plan_key_reads(1, 0, &on);
        assert_eq!(c, vec![KeyRead { address: 0, size: 8, first_key: 0, n_keys: 1 }]);
        let d = plan_key_reads(20, 0, &on);
        assert_eq!(d.iter().map(|r| r.size).collect::<Vec<_>>(), vec![128, 32]);
    }

    #[test]
    fn probe_read_plans() {
        let t = build_table(1024, 0.0, 0, 0x1000).unwrap();
        let cfg = AccelConfig::default();
        let p = plan_probe_reads(0, 8, &t, &cfg);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].address, p[0].size), (0x1000, 128));
        let p = plan_probe_reads(0, 10, &t, &cfg);
        assert_eq!(p.iter().map(|r| r.size).collect::<Vec<_>>(), vec![128, 32]);
        let p = plan_probe_reads(1023, 2, &t, &cfg);
        assert_eq!(p.iter().map(|r| (r.address, r.size)).collect::<Vec<_>>(), vec![(0x1000 + 1023 * 16, 16), (0x1000, 16)]);
    }

    #[test]
    fn csu_cases() {
        let mut window = vec![TableEntry::default(); 6];
        window[0] = TableEntry::occupied(5, 50);
        window[5] = TableEntry::occupied(9, 90);
        assert_eq!(csu_compare(&window, 5), 50);
        assert_eq!(csu_compare(&window, 9), 90);
        assert_eq!(csu_compare(&window, 7), NOT_FOUND);
        // an unoccupied slot with a matching stale key is not a hit
        window[2] = TableEntry { key: 7, value: 70, flags: 0 };
        assert_eq!(csu_compare(&window, 7), NOT_FOUND);
    }

    #[test]
    fn entry_cycles_by_width() {
        let base = AccelConfig::default();
        assert_eq!(effective_entry_cycles(&base), 2);
        assert_eq!(effective_entry_cycles(&AccelConfig { bus_width: 16, ..base.clone() }), 1);
        assert_eq!(effective_entry_cycles(&AccelConfig { bus_width: 32, ..base }), 1);
    }

    #[test]
    fn opt_flag_consistency() {
        let base = AccelConfig::default();
        assert!(OptSet::ALL.iter().all(|o| o.apply(&base).validate().is_ok()));
        let bad = AccelConfig { opt_double_bus: true, ..base.clone() };
        assert!(bad.validate().is_err());
        let bad = AccelConfig { opt_double_outstanding: true, ..base.clone() };
        assert!(bad.validate().is_err());
        let bad = AccelConfig { fifo_depth: 8, ..OptSet::BatchKeys.apply(&base) };
        assert!(bad.validate().is_err());
        assert_eq!(OptSet::parse("2x_bus"), Some(OptSet::DoubleBus));
    }
}
