//! Deterministic discrete-event kernel.
//!
//! Every component lives inside one [`Kernel`] and communicates only through
//! timestamped messages. Events with equal timestamps are delivered in
//! insertion order, so a run is a pure function of its inputs.

use std::any::Any;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use thiserror::Error;

/// Simulated time in integer picoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    /// Rounds a fractional nanosecond quantity to the nearest picosecond.
    pub fn from_ns_f64(ns: f64) -> Self {
        SimTime((ns * 1_000.0).round().max(0.0) as u64)
    }

    pub const fn ps(self) -> u64 {
        self.0
    }

    pub fn as_ns(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// A clock domain. Frequencies are stored as integer picosecond periods,
/// so 2.57 GHz becomes 389 ps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Clock {
    pub period: SimTime,
    pub phase: SimTime,
}

impl Clock {
    pub fn new(period: SimTime) -> Self {
        assert!(period.0 >= 1, "clock period must be at least one tick");
        Clock { period, phase: SimTime::ZERO }
    }

    pub fn from_ghz(ghz: f64) -> Self {
        assert!(ghz > 0.0 && ghz.is_finite(), "clock frequency must be positive");
        Clock::new(SimTime(((1_000.0 / ghz).round() as u64).max(1)))
    }

    pub fn ghz(&self) -> f64 {
        1_000.0 / self.period.0 as f64
    }

    pub fn cycle_to_time(&self, cycle: u64) -> SimTime {
        self.phase + self.period * cycle
    }

    /// Duration of `n` cycles.
    pub fn cycles(&self, n: u64) -> SimTime {
        self.period * n
    }

    /// First clock edge at or after `t`.
    pub fn next_edge(&self, t: SimTime) -> SimTime {
        if t <= self.phase {
            return self.phase;
        }
        let since = t.0 - self.phase.0;
        let cycles = since.div_ceil(self.period.0);
        self.cycle_to_time(cycles)
    }
}

/// A serializing link: at most one payload occupies the wire at a time.
#[derive(Clone, Debug)]
pub struct RateLimitedLink {
    /// Bytes per second.
    pub bandwidth: u64,
    pub latency: SimTime,
    pub next_free: SimTime,
    bytes_moved: u64,
    busy: SimTime,
}

impl RateLimitedLink {
    pub fn new(bandwidth: u64, latency: SimTime) -> Self {
        assert!(bandwidth > 0, "link bandwidth must be positive");
        RateLimitedLink { bandwidth, latency, next_free: SimTime::ZERO, bytes_moved: 0, busy: SimTime::ZERO }
    }

    /// Wire occupancy of `size` bytes, rounded up to a whole picosecond.
    pub fn serialization(&self, size: u64) -> SimTime {
        let num = size as u128 * 1_000_000_000_000u128;
        SimTime(num.div_ceil(self.bandwidth as u128) as u64)
    }

    /// Reserves the wire for `size` bytes departing no earlier than `depart`
    /// and returns the arrival time at the far end.
    pub fn transfer(&mut self, size: u64, depart: SimTime) -> SimTime {
        let start = depart.max(self.next_free);
        let ser = self.serialization(size);
        self.next_free = start + ser;
        self.bytes_moved += size;
        self.busy += ser;
        start + ser + self.latency
    }

    pub fn bytes_moved(&self) -> u64 {
        self.bytes_moved
    }

    pub fn busy_time(&self) -> SimTime {
        self.busy
    }
}

pub type ComponentId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {fire_at} but the kernel is already at {now}")]
    PastEvent { fire_at: SimTime, now: SimTime },
    #[error("no component registered with id {0}")]
    UnknownComponent(ComponentId),
    #[error("component {id} failed at {at}: {source}")]
    Component {
        id: ComponentId,
        at: SimTime,
        #[source]
        source: Fault,
    },
}

/// Error raised from inside a component's event handler.
pub type Fault = Box<dyn std::error::Error + Send + Sync + 'static>;

pub trait AsAny: Any {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl<T: Any> AsAny for T {
    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

pub trait Component<M>: AsAny {
    fn handle(&mut self, msg: M, ctx: &mut Context<M>) -> Result<(), Fault>;
}

struct Pending<M> {
    fire_at: SimTime,
    seq: u64,
    target: ComponentId,
    payload: M,
}

impl<M> PartialEq for Pending<M> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<M> Eq for Pending<M> {}

impl<M> PartialOrd for Pending<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Pending<M> {
    // Reversed so the max-heap pops the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Scheduling interface handed to components while they handle an event.
pub struct Context<M> {
    now: SimTime,
    current: ComponentId,
    next_seq: u64,
    queue: BinaryHeap<Pending<M>>,
}

impl<M> Context<M> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Id of the component whose handler is running.
    pub fn me(&self) -> ComponentId {
        self.current
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: ComponentId, payload: M) -> Result<EventId, SimError> {
        if fire_at < self.now {
            return Err(SimError::PastEvent { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Pending { fire_at, seq, target, payload });
        Ok(EventId(seq))
    }

    /// Schedules `payload` at `now + delay`; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, target: ComponentId, payload: M) -> EventId {
        let fire_at = self.now + delay;
        self.schedule(fire_at, target, payload).expect("relative schedule is never in the past")
    }

    /// Schedules a message back to the running component.
    pub fn wake_at(&mut self, fire_at: SimTime, payload: M) -> Result<EventId, SimError> {
        let me = self.current;
        self.schedule(fire_at, me, payload)
    }
}

pub struct Kernel<M> {
    ctx: Context<M>,
    components: Vec<Option<Box<dyn Component<M>>>>,
    delivered: u64,
}

impl<M: 'static> Default for Kernel<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: 'static> Kernel<M> {
    pub fn new() -> Self {
        Kernel {
            ctx: Context { now: SimTime::ZERO, current: 0, next_seq: 0, queue: BinaryHeap::new() },
            components: Vec::new(),
            delivered: 0,
        }
    }

    pub fn add_component<C: Component<M>>(&mut self, component: C) -> ComponentId {
        self.components.push(Some(Box::new(component)));
        self.components.len() - 1
    }

    pub fn now(&self) -> SimTime {
        self.ctx.now
    }

    pub fn events_delivered(&self) -> u64 {
        self.delivered
    }

    pub fn pending_events(&self) -> usize {
        self.ctx.queue.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: ComponentId, payload: M) -> Result<EventId, SimError> {
        if target >= self.components.len() {
            return Err(SimError::UnknownComponent(target));
        }
        self.ctx.schedule(fire_at, target, payload)
    }

    pub fn component<T: 'static>(&self, id: ComponentId) -> Option<&T> {
        let c: &dyn Component<M> = self.components.get(id)?.as_deref()?;
        c.as_any().downcast_ref::<T>()
    }

    pub fn component_mut<T: 'static>(&mut self, id: ComponentId) -> Option<&mut T> {
        let c: &mut dyn Component<M> = self.components.get_mut(id)?.as_deref_mut()?;
        c.as_any_mut().downcast_mut::<T>()
    }

    fn deliver(&mut self, ev: Pending<M>) -> Result<(), SimError> {
        debug_assert!(ev.fire_at >= self.ctx.now);
        self.ctx.now = ev.fire_at;
        self.ctx.current = ev.target;
        let mut comp = self
            .components
            .get_mut(ev.target)
            .and_then(Option::take)
            .ok_or(SimError::UnknownComponent(ev.target))?;
        let res = comp.handle(ev.payload, &mut self.ctx);
        self.components[ev.target] = Some(comp);
        self.delivered += 1;
        res.map_err(|source| SimError::Component { id: ev.target, at: ev.fire_at, source })
    }

    /// Delivers every event with `fire_at <= limit`. Returns the time of the
    /// last delivered event, or `limit` when the queue drains.
    pub fn run_until(&mut self, limit: SimTime) -> Result<SimTime, SimError> {
        loop {
            match self.ctx.queue.peek() {
                None => {
                    self.ctx.now = self.ctx.now.max(limit);
                    return Ok(limit);
                }
                Some(ev) if ev.fire_at > limit => return Ok(self.ctx.now),
                Some(_) => {
                    let ev = self.ctx.queue.pop().expect("peeked");
                    self.deliver(ev)?;
                }
            }
        }
    }

    /// Runs until the queue is empty and returns the time of the last event.
    pub fn run(&mut self) -> Result<SimTime, SimError> {
        while let Some(ev) = self.ctx.queue.pop() {
            self.deliver(ev)?;
        }
        Ok(self.ctx.now)
    }
}
