//! Memory manager with two timing backends.
//!
//! * [`FixedMemConfig`]: fixed read/write latency behind one bandwidth-limited
//!   serializing link, with a per-port cap on requests in service.
//! * [`HmcConfig`]: cube-like model. Requests route to a vault and bank by
//!   address interleave, wait in a per-vault FIFO, and occupy their bank for a
//!   closed-page restore window. DRAM access time is size independent; read
//!   data returns as whole packets over a pool of response links.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::harness::trace::{MemEventSeq, TraceRecord, TraceSource};
use crate::simkernel::{Component, ComponentId, Fault, RateLimitedLink, SimTime};
use crate::system::{Context, Msg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemOp {
    Read,
    Write,
}

/// What a request is for; used only for statistics and trace labelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessClass {
    KeyRead,
    ProbeRead,
    Stream,
    Cpu,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemRequest {
    /// Originator-chosen tag, echoed back in the response.
    pub tag: u64,
    pub op: MemOp,
    pub address: u64,
    pub size: u32,
    pub originator: ComponentId,
    pub issued_at: SimTime,
    pub class: AccessClass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemResponse {
    pub request: MemRequest,
    pub completed_at: SimTime,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemError {
    #[error("access of {size} B at {address:#x} exceeds memory size {memory_size:#x}")]
    AddressOutOfRange { address: u64, size: u32, memory_size: u64 },
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("invalid memory configuration: {0}")]
    Config(String),
}

pub const DEFAULT_MAX_PACKET: u32 = 128;
pub const DEFAULT_MEMORY_SIZE: u64 = 4 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct FixedMemConfig {
    pub read_latency: SimTime,
    pub write_latency: SimTime,
    /// Bytes per second.
    pub link_bandwidth: u64,
    /// Requests in service per requesting port.
    pub max_outstanding: u32,
}

impl FixedMemConfig {
    /// 85 ns read / 106 ns write over a 10 GB/s link.
    pub fn hmc_profile() -> Self {
        FixedMemConfig {
            read_latency: SimTime::from_ns(85),
            write_latency: SimTime::from_ns(106),
            link_bandwidth: 10_000_000_000,
            max_outstanding: 16,
        }
    }

    /// 200 ns read / 400 ns write.
    pub fn scm_profile() -> Self {
        FixedMemConfig {
            read_latency: SimTime::from_ns(200),
            write_latency: SimTime::from_ns(400),
            ..Self::hmc_profile()
        }
    }
}

impl Default for FixedMemConfig {
    fn default() -> Self {
        Self::hmc_profile()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcConfig {
    pub n_links: u32,
    /// Bytes per second, per link and direction.
    pub link_bandwidth: u64,
    /// Header and tail bytes added to every packet on a link.
    pub packet_overhead: u32,
    pub n_quads: u32,
    pub n_vaults: u32,
    pub banks_per_vault: u32,
    pub access_latency: SimTime,
    pub bank_busy: SimTime,
    /// Minimum spacing between two service starts in one vault.
    pub vault_cycle: SimTime,
    pub vault_queue_depth: u32,
    pub interleave_granularity: u64,
}

impl HmcConfig {
    /// End-to-end latency of an isolated read of `size` bytes.
    pub fn isolated_read_latency(&self, size: u32) -> SimTime {
        let link = RateLimitedLink::new(self.link_bandwidth, SimTime::ZERO);
        self.access_latency + link.serialization(u64::from(size + self.packet_overhead))
    }

    /// Sets `access_latency` so an isolated 128 B read totals `total`.
    pub fn tune_access_latency(&mut self, total: SimTime) {
        let link = RateLimitedLink::new(self.link_bandwidth, SimTime::ZERO);
        let ser = link.serialization(u64::from(DEFAULT_MAX_PACKET + self.packet_overhead));
        self.access_latency = total.saturating_sub(ser);
    }

    pub fn validate(&self, max_packet: u32) -> Result<(), MemError> {
        let bad = |m: &str| Err(MemError::Config(m.to_string()));
        if self.n_links == 0 || self.n_vaults == 0 || self.n_quads == 0 || self.banks_per_vault == 0 {
            return bad("link, quad, vault and bank counts must be positive");
        }
        if !self.n_vaults.is_multiple_of(self.n_quads) {
            return bad("hmc.vaults must be divisible by hmc.quads");
        }
        if !self.interleave_granularity.is_power_of_two() || self.interleave_granularity < u64::from(max_packet) {
            return bad("hmc.interleave_bytes must be a power of two no smaller than the packet size");
        }
        if self.vault_queue_depth == 0 {
            return bad("hmc.queue_depth must be at least 1");
        }
        if self.link_bandwidth == 0 {
            return bad("hmc link bandwidth must be positive");
        }
        Ok(())
    }
}

impl Default for HmcConfig {
    fn default() -> Self {
        let mut cfg = HmcConfig {
            n_links: 4,
            link_bandwidth: 20_000_000_000,
            packet_overhead: 16,
            n_quads: 4,
            n_vaults: 32,
            banks_per_vault: 16,
            access_latency: SimTime::ZERO,
            bank_busy: SimTime::from_ns(50),
            vault_cycle: SimTime::from_ps(800),
            vault_queue_depth: 64,
            interleave_granularity: 128,
        };
        cfg.tune_access_latency(SimTime::from_ns(85));
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Fixed(FixedMemConfig),
    Hmc(HmcConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryConfig {
    pub backend: Backend,
    pub memory_size: u64,
    pub max_packet: u32,
}

impl MemoryConfig {
    pub fn fixed(cfg: FixedMemConfig) -> Self {
        MemoryConfig { backend: Backend::Fixed(cfg), memory_size: DEFAULT_MEMORY_SIZE, max_packet: DEFAULT_MAX_PACKET }
    }

    pub fn hmc(cfg: HmcConfig) -> Self {
        MemoryConfig { backend: Backend::Hmc(cfg), memory_size: DEFAULT_MEMORY_SIZE, max_packet: DEFAULT_MAX_PACKET }
    }

    pub fn model_name(&self) -> &'static str {
        match self.backend {
            Backend::Fixed(_) => "fixed",
            Backend::Hmc(_) => "hmc",
        }
    }

    pub fn validate(&self) -> Result<(), MemError> {
        match &self.backend {
            Backend::Fixed(f) => {
                if f.read_latency == SimTime::ZERO || f.write_latency == SimTime::ZERO {
                    return Err(MemError::Config("fixed-model latencies must be positive".into()));
                }
                if f.max_outstanding == 0 || f.link_bandwidth == 0 {
                    return Err(MemError::Config("memory.max_outstanding and bandwidth must be positive".into()));
                }
                Ok(())
            }
            Backend::Hmc(h) => h.validate(self.max_packet),
        }
    }
}

/// Address map of a platform: the table image followed by one key buffer
/// per accelerator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryLayout {
    pub table_base: u64,
    pub table_bytes: u64,
    pub key_base: u64,
    pub key_stride: u64,
    pub key_buffers: u64,
}

impl MemoryLayout {
    pub fn new(table: &crate::kvstore::HashTable, batch_bytes: u64, key_buffers: u64) -> Self {
        let table_end = table.base_address() + table.size_bytes();
        MemoryLayout {
            table_base: table.base_address(),
            table_bytes: table.size_bytes(),
            key_base: table_end.next_multiple_of(1 << 20),
            key_stride: batch_bytes.max(1).next_multiple_of(4096),
            key_buffers: key_buffers.max(1),
        }
    }

    pub fn key_buffer(&self, index: u64) -> u64 {
        self.key_base + index * self.key_stride
    }

    pub fn in_key_region(&self, address: u64) -> bool {
        (self.key_base..self.end()).contains(&address)
    }

    pub fn end(&self) -> u64 {
        self.key_base + self.key_buffers * self.key_stride
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Route {
    pub quad: u32,
    pub vault: u32,
    pub bank: u32,
}

pub fn hmc_route(address: u64, cfg: &HmcConfig) -> Route {
    let block = address / cfg.interleave_granularity;
    let vault = (block % u64::from(cfg.n_vaults)) as u32;
    let bank = ((block / u64::from(cfg.n_vaults)) % u64::from(cfg.banks_per_vault)) as u32;
    let quad = vault / (cfg.n_vaults / cfg.n_quads);
    Route { quad, vault, bank }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemStats {
    pub reads: u64,
    pub writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    /// Requests whose service start was pushed back by a busy bank.
    pub bank_conflicts: u64,
    /// The subset of `bank_conflicts` charged to key reads.
    pub key_bank_conflicts: u64,
    pub max_queue_occupancy: u32,
    /// Per-vault busy time; a single entry (the link) for the fixed model.
    pub busy_time: Vec<SimTime>,
}

impl MemStats {
    /// Counter deltas since `earlier`. High-water marks are kept as-is.
    pub fn since(&self, earlier: &MemStats) -> MemStats {
        MemStats {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            bytes_read: self.bytes_read - earlier.bytes_read,
            bytes_written: self.bytes_written - earlier.bytes_written,
            bank_conflicts: self.bank_conflicts - earlier.bank_conflicts,
            key_bank_conflicts: self.key_bank_conflicts - earlier.key_bank_conflicts,
            max_queue_occupancy: self.max_queue_occupancy,
            busy_time: self
                .busy_time
                .iter()
                .zip(earlier.busy_time.iter().chain(std::iter::repeat(&SimTime::ZERO)))
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }
}

#[derive(Debug)]
struct FixedState {
    cfg: FixedMemConfig,
    link: RateLimitedLink,
    in_service: BTreeMap<ComponentId, u32>,
    waiting: BTreeMap<ComponentId, VecDeque<u64>>,
}

#[derive(Debug)]
struct Vault {
    /// Recent command start times; starts are at least one vault cycle apart.
    starts: BTreeSet<SimTime>,
    bank_free: Vec<SimTime>,
    /// Service-start times of requests that were still queued when admitted.
    queued: BinaryHeap<Reverse<SimTime>>,
    busy_until: SimTime,
    busy: SimTime,
}

#[derive(Debug)]
struct HmcState {
    cfg: HmcConfig,
    vaults: Vec<Vault>,
    up_links: Vec<RateLimitedLink>,
    down_links: Vec<RateLimitedLink>,
}

#[derive(Debug)]
enum State {
    Fixed(FixedState),
    Hmc(HmcState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Fixed model: waiting for the full latency to elapse.
    Final,
    /// Cube model: DRAM access finished, data still has to cross a link.
    DramDone,
}

#[derive(Debug)]
struct Inflight {
    req: MemRequest,
    phase: Phase,
}

/// Kernel component that owns one memory backend.
#[derive(Debug)]
pub struct MemoryManager {
    memory_size: u64,
    max_packet: u32,
    state: State,
    inflight: BTreeMap<u64, Inflight>,
    next_token: u64,
    stats: MemStats,
    trace: Option<MemEventSeq>,
}

fn link_pick(links: &mut [RateLimitedLink]) -> &mut RateLimitedLink {
    let idx = (0..links.len()).min_by_key(|&i| (links[i].next_free, i)).expect("at least one link");
    &mut links[idx]
}

impl MemoryManager {
    pub fn new(cfg: &MemoryConfig) -> Result<Self, MemError> {
        cfg.validate()?;
        let (state, lanes) = match &cfg.backend {
            Backend::Fixed(f) => (
                State::Fixed(FixedState {
                    cfg: f.clone(),
                    link: RateLimitedLink::new(f.link_bandwidth, SimTime::ZERO),
                    in_service: BTreeMap::new(),
                    waiting: BTreeMap::new(),
                }),
                1,
            ),
            Backend::Hmc(h) => {
                let vaults = (0..h.n_vaults)
                    .map(|_| Vault {
                        starts: BTreeSet::new(),
                        bank_free: vec![SimTime::ZERO; h.banks_per_vault as usize],
                        queued: BinaryHeap::new(),
                        busy_until: SimTime::ZERO,
                        busy: SimTime::ZERO,
                    })
                    .collect();
                let links = || (0..h.n_links).map(|_| RateLimitedLink::new(h.link_bandwidth, SimTime::ZERO)).collect();
                (State::Hmc(HmcState { cfg: h.clone(), vaults, up_links: links(), down_links: links() }), h.n_vaults)
            }
        };
        Ok(MemoryManager {
            memory_size: cfg.memory_size,
            max_packet: cfg.max_packet,
            state,
            inflight: BTreeMap::new(),
            next_token: 0,
            stats: MemStats { busy_time: vec![SimTime::ZERO; lanes as usize], ..MemStats::default() },
            trace: None,
        })
    }

    /// Starts recording every accepted request.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(MemEventSeq::default);
    }

    pub fn take_trace(&mut self) -> Option<MemEventSeq> {
        self.trace.take()
    }

    pub fn stats_snapshot(&self) -> MemStats {
        let mut s = self.stats.clone();
        match &self.state {
            State::Fixed(f) => s.busy_time[0] = f.link.busy_time(),
            State::Hmc(h) => {
                for (slot, v) in s.busy_time.iter_mut().zip(&h.vaults) {
                    *slot = v.busy;
                }
            }
        }
        s
    }

    pub fn outstanding(&self) -> usize {
        self.inflight.len()
    }

    pub fn check(&self, req: &MemRequest) -> Result<(), MemError> {
        if req.size == 0 {
            return Err(MemError::Malformed("size must be at least 1 byte".into()));
        }
        if req.size > self.max_packet {
            return Err(MemError::Malformed(format!("size {} exceeds max packet {}", req.size, self.max_packet)));
        }
        if req.address.checked_add(u64::from(req.size)).is_none_or(|end| end > self.memory_size) {
            return Err(MemError::AddressOutOfRange {
                address: req.address,
                size: req.size,
                memory_size: self.memory_size,
            });
        }
        Ok(())
    }

    fn submit(&mut self, req: MemRequest, ctx: &mut Context) -> Result<(), MemError> {
        self.check(&req)?;
        let now = ctx.now();
        if let Some(trace) = &mut self.trace {
            trace.records.push(TraceRecord {
                time: now,
                source: if req.class == AccessClass::Cpu { TraceSource::Cpu } else { TraceSource::Acc },
                op: req.op,
                address: req.address,
                size: req.size,
            });
        }
        let token = self.next_token;
        self.next_token += 1;
        match &mut self.state {
            State::Fixed(f) => {
                let port = req.originator;
                let busy = f.in_service.entry(port).or_insert(0);
                if *busy < f.cfg.max_outstanding {
                    *busy += 1;
                    Self::fixed_start(f, token, &req, ctx);
                } else {
                    f.waiting.entry(port).or_default().push_back(token);
                }
                self.inflight.insert(token, Inflight { req, phase: Phase::Final });
            }
            State::Hmc(h) => {
                let route = hmc_route(req.address, &h.cfg);
                let arrival = match req.op {
                    MemOp::Read => now,
                    MemOp::Write => link_pick(&mut h.down_links).transfer(u64::from(req.size + h.cfg.packet_overhead), now),
                };
                let cfg = &h.cfg;
                let vault = &mut h.vaults[route.vault as usize];
                let mut enqueue = arrival;
                while vault.queued.peek().is_some_and(|&Reverse(s)| s <= enqueue) {
                    vault.queued.pop();
                }
                if vault.queued.len() >= cfg.vault_queue_depth as usize {
                    // Full queue: upstream holds the request until a slot drains.
                    enqueue = enqueue.max(vault.queued.pop().expect("non-empty").0);
                }
                while vault.starts.first().is_some_and(|&s| s + cfg.vault_cycle <= enqueue) {
                    vault.starts.pop_first();
                }
                // Requests to idle banks may pass ones waiting on a busy bank.
                let bank_free = vault.bank_free[route.bank as usize];
                let unblocked = command_slot(&vault.starts, enqueue, cfg.vault_cycle);
                let start = command_slot(&vault.starts, enqueue.max(bank_free), cfg.vault_cycle);
                if bank_free > unblocked {
                    self.stats.bank_conflicts += 1;
                    if req.class == AccessClass::KeyRead {
                        self.stats.key_bank_conflicts += 1;
                    }
                }
                vault.bank_free[route.bank as usize] = start + cfg.bank_busy;
                vault.starts.insert(start);
                if start > enqueue {
                    vault.queued.push(Reverse(start));
                    self.stats.max_queue_occupancy = self.stats.max_queue_occupancy.max(vault.queued.len() as u32);
                }
                let end = start + cfg.access_latency;
                vault.busy += end - start.max(vault.busy_until).min(end);
                vault.busy_until = vault.busy_until.max(end);
                let (at, phase) = match req.op {
                    MemOp::Read => (end, Phase::DramDone),
                    // posted: acknowledged once the vault starts the write
                    MemOp::Write => (start, Phase::Final),
                };
                ctx.wake_at(at, Msg::MemWake(token)).expect("memory wakeups are never in the past");
                self.inflight.insert(token, Inflight { req, phase });
            }
        }
        Ok(())
    }

    fn fixed_start(f: &mut FixedState, token: u64, req: &MemRequest, ctx: &mut Context) {
        let latency = match req.op {
            MemOp::Read => f.cfg.read_latency,
            MemOp::Write => f.cfg.write_latency,
        };
        let done = f.link.transfer(u64::from(req.size), ctx.now()) + latency;
        ctx.wake_at(done, Msg::MemWake(token)).expect("memory wakeups are never in the past");
    }

    fn wake(&mut self, token: u64, ctx: &mut Context) -> Result<(), Fault> {
        let now = ctx.now();
        let entry = self.inflight.get_mut(&token).ok_or_else(|| format!("unknown memory token {token}"))?;
        if entry.phase == Phase::DramDone {
            let State::Hmc(h) = &mut self.state else { unreachable!("only the cube model has a DRAM phase") };
            let arrival = link_pick(&mut h.up_links).transfer(u64::from(entry.req.size + h.cfg.packet_overhead), now);
            entry.phase = Phase::Final;
            ctx.wake_at(arrival, Msg::MemWake(token))?;
            return Ok(());
        }
        let Inflight { req, .. } = self.inflight.remove(&token).expect("present");
        match req.op {
            MemOp::Read => {
                self.stats.reads += 1;
                self.stats.bytes_read += u64::from(req.size);
            }
            MemOp::Write => {
                self.stats.writes += 1;
                self.stats.bytes_written += u64::from(req.size);
            }
        }
        let port = req.originator;
        ctx.schedule(now, port, Msg::MemResponse(MemResponse { request: req, completed_at: now }))?;
        if let State::Fixed(f) = &mut self.state {
            let next = f.waiting.get_mut(&port).and_then(VecDeque::pop_front);
            match next {
                Some(t) => {
                    let req = self.inflight[&t].req.clone();
                    Self::fixed_start(f, t, &req, ctx);
                }
                None => *f.in_service.get_mut(&port).expect("port in service") -= 1,
            }
        }
        Ok(())
    }
}

/// Earliest time at or after `ready` at least one vault cycle away from every
/// start in `starts`.
fn command_slot(starts: &BTreeSet<SimTime>, ready: SimTime, cycle: SimTime) -> SimTime {
    let mut t = ready;
    if let Some(&p) = starts.range(..=t).next_back() {
        t = t.max(p + cycle);
    }
    while let Some(&s) = starts.range(t..).next() {
        if s >= t + cycle {
            break;
        }
        t = s + cycle;
    }
    t
}

impl Component<Msg> for MemoryManager {
    fn handle(&mut self, msg: Msg, ctx: &mut Context) -> Result<(), Fault> {
        match msg {
            Msg::MemRequest(req) => self.submit(req, ctx).map_err(Into::into),
            Msg::MemWake(token) => self.wake(token, ctx),
            other => Err(format!("memory manager received unexpected message {other:?}").into()),
        }
    }
}

/// Collects memory responses; handy for driving a backend directly.
#[derive(Debug, Default)]
pub struct ResponseLog {
    pub responses: Vec<MemResponse>,
}

impl Component<Msg> for ResponseLog {
    fn handle(&mut self, msg: Msg, _ctx: &mut Context) -> Result<(), Fault> {
        match msg {
            Msg::MemResponse(r) => {
                self.responses.push(r);
                Ok(())
            }
            other => Err(format!("response log received {other:?}").into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Kernel;

    fn read(tag: u64, address: u64, size: u32, originator: ComponentId) -> MemRequest {
        MemRequest { tag, op: MemOp::Read, address, size, originator, issued_at: SimTime::ZERO, class: AccessClass::Stream }
    }

    fn harness(cfg: MemoryConfig) -> (Kernel, ComponentId, ComponentId) {
        let mut k = Kernel::new();
        let mem = k.add_component(MemoryManager::new(&cfg).unwrap());
        let log = k.add_component(ResponseLog::default());
        (k, mem, log)
    }

    fn completions(k: &Kernel, log: ComponentId) -> Vec<(u64, SimTime)> {
        let mut v: Vec<_> =
            k.component::<ResponseLog>(log).unwrap().responses.iter().map(|r| (r.request.tag, r.completed_at)).collect();
        v.sort();
        v
    }

    fn quiet_hmc() -> HmcConfig {
        HmcConfig { packet_overhead: 0, link_bandwidth: 1_000_000_000_000, ..HmcConfig::default() }
    }

    #[test]
    fn fixed_read_latency_plus_serialization() {
        let (mut k, mem, log) = harness(MemoryConfig::fixed(FixedMemConfig::hmc_profile()));
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(0, 0, 32, log))).unwrap();
        k.run().unwrap();
        assert_eq!(completions(&k, log), vec![(0, SimTime(88_200))]);
    }

    #[test]
    fn fixed_port_limit_holds_the_seventeenth_request() {
        let cfg = FixedMemConfig { link_bandwidth: 1_000_000_000_000_000, ..FixedMemConfig::hmc_profile() };
        let (mut k, mem, log) = harness(MemoryConfig::fixed(cfg));
        for i in 0..17 {
            k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(i, i * 128, 8, log))).unwrap();
        }
        k.run().unwrap();
        let c = completions(&k, log);
        let first_done = c[..16].iter().map(|x| x.1).min().unwrap();
        assert!(c[..16].iter().all(|x| x.1 < SimTime::from_ns(86)));
        assert!(c[16].1 >= first_done + SimTime::from_ns(85));
    }

    #[test]
    fn zero_byte_write_rejected() {
        let (mut k, mem, log) = harness(MemoryConfig::fixed(FixedMemConfig::default()));
        let mut w = read(0, 0, 0, log);
        w.op = MemOp::Write;
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(w)).unwrap();
        assert!(k.run().is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        let mgr = MemoryManager::new(&MemoryConfig::fixed(FixedMemConfig::default())).unwrap();
        let err = mgr.check(&read(0, DEFAULT_MEMORY_SIZE - 4, 8, 0)).unwrap_err();
        assert!(matches!(err, MemError::AddressOutOfRange { .. }));
    }

    #[test]
    fn route_arithmetic() {
        let cfg = HmcConfig::default();
        assert_eq!(hmc_route(0, &cfg), Route { quad: 0, vault: 0, bank: 0 });
        assert_eq!(hmc_route(128, &cfg), Route { quad: 0, vault: 1, bank: 0 });
        let far = hmc_route(128 * 32, &cfg);
        assert_eq!((far.vault, far.bank), (0, 1));
        assert_eq!(hmc_route(128 * 31, &cfg).quad, 3);
    }

    #[test]
    fn same_bank_reads_serialize_on_bank_busy() {
        let cfg = quiet_hmc();
        let ser = SimTime(128);
        let (mut k, mem, log) = harness(MemoryConfig::hmc(cfg.clone()));
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(0, 0, 128, log))).unwrap();
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(1, 64, 64, log))).unwrap();
        k.run().unwrap();
        let c = completions(&k, log);
        assert_eq!(c[0].1, cfg.access_latency + ser);
        assert_eq!(c[1].1, cfg.bank_busy + cfg.access_latency + SimTime(64));
        let stats = k.component::<MemoryManager>(mem).unwrap().stats_snapshot();
        assert_eq!(stats.bank_conflicts, 1);
    }

    #[test]
    fn different_banks_same_vault_offset_by_one_cycle() {
        let cfg = quiet_hmc();
        let (mut k, mem, log) = harness(MemoryConfig::hmc(cfg.clone()));
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(0, 0, 128, log))).unwrap();
        k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(1, 128 * 32, 128, log))).unwrap();
        k.run().unwrap();
        let c = completions(&k, log);
        let ser = SimTime(128);
        assert_eq!(c[0].1, cfg.access_latency + ser);
        assert_eq!(c[1].1, cfg.access_latency + cfg.vault_cycle + ser);
    }

    #[test]
    fn distinct_vaults_run_in_parallel() {
        let cfg = HmcConfig { n_links: 32, ..quiet_hmc() };
        let (mut k, mem, log) = harness(MemoryConfig::hmc(cfg.clone()));
        for v in 0..32u64 {
            k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(v, v * 128, 128, log))).unwrap();
        }
        k.run().unwrap();
        assert!(completions(&k, log).iter().all(|c| c.1 == cfg.access_latency + SimTime(128)));
    }

    #[test]
    fn default_cube_isolated_read_is_85ns() {
        let cfg = HmcConfig::default();
        assert_eq!(cfg.isolated_read_latency(128), SimTime::from_ns(85));
    }

    #[test]
    fn stats_start_at_zero_and_count_bytes() {
        let (mut k, mem, log) = harness(MemoryConfig::hmc(HmcConfig::default()));
        let before = k.component::<MemoryManager>(mem).unwrap().stats_snapshot();
        assert_eq!(before.reads + before.bytes_read + before.bank_conflicts, 0);
        for i in 0..64u64 {
            k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(i, i * 128, 128, log))).unwrap();
        }
        k.run().unwrap();
        let after = k.component::<MemoryManager>(mem).unwrap().stats_snapshot();
        assert_eq!(after.bytes_read, 8192);
        assert_eq!(after.reads, 64);
    }

    #[test]
    fn degenerate_cube_matches_fixed_model() {
        let fixed = FixedMemConfig::hmc_profile();
        let cube = HmcConfig {
            n_links: 1,
            link_bandwidth: fixed.link_bandwidth,
            packet_overhead: 0,
            n_quads: 1,
            n_vaults: 1,
            banks_per_vault: 1,
            access_latency: fixed.read_latency,
            bank_busy: SimTime::ZERO,
            vault_cycle: SimTime::ZERO,
            vault_queue_depth: 1,
            interleave_granularity: 128,
        };
        for size in [8u32, 32, 100, 128] {
            let mut times = Vec::new();
            for cfg in [MemoryConfig::fixed(fixed.clone()), MemoryConfig::hmc(cube.clone())] {
                let (mut k, mem, log) = harness(cfg);
                k.schedule(SimTime::ZERO, mem, Msg::MemRequest(read(0, 4096, size, log))).unwrap();
                k.run().unwrap();
                times.push(completions(&k, log)[0].1);
            }
            assert_eq!(times[0], times[1], "size {size}");
        }
    }

    #[test]
    fn trace_capture_records_requests() {
        let mut mgr = MemoryManager::new(&MemoryConfig::fixed(FixedMemConfig::default())).unwrap();
        mgr.enable_trace();
        let mut k = Kernel::new();
        let mem = k.add_component(mgr);
        let log = k.add_component(ResponseLog::default());
        k.schedule(SimTime::from_ns(120), mem, Msg::MemRequest(read(0, 0x1000, 128, log))).unwrap();
        k.run().unwrap();
        let trace = k.component_mut::<MemoryManager>(mem).unwrap().take_trace().unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].address, 0x1000);
        assert_eq!(trace.records[0].time, SimTime::from_ns(120));
    }
}
