//! Access tracing, ideal-cache simulation and cost reports.
//!
//! A [`Tracer`] receives every logical event of a sequential run. Each
//! registered array gets a word-aligned base address from a size-class
//! allocator, so memory events map onto word addresses that can be fed to
//! one or more online [`LruCache`]s, hashed into a digest, and (for small
//! runs) stored for later replay.
//!
//! Events emitted inside [`Ctx::public_phase`](crate::exec::Ctx::public_phase)
//! go to a separate *revealed* digest. They are still cached and stored, but
//! they are excluded from the oblivious digest that `check_oblivious`
//! compares.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{ArrayId, Counters, Ctx};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Op {
    Read = 0,
    Write = 1,
    Compare = 2,
    Fork = 3,
    Join = 4,
}

impl Op {
    pub fn touches_memory(self) -> bool {
        matches!(self, Op::Read | Op::Write)
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Read => "read",
            Op::Write => "write",
            Op::Compare => "compare",
            Op::Fork => "fork",
            Op::Join => "join",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceEvent {
    pub op: Op,
    pub array: u32,
    pub index: u64,
    /// Emitted inside a public phase.
    pub revealed: bool,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.op.name(), self.array, self.index)
    }
}

/// Ideal-cache parameters, all in words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub m: usize,
    pub b: usize,
    pub words_per_element: usize,
}

impl CacheConfig {
    pub fn new(m: usize, b: usize) -> Self {
        CacheConfig {
            m,
            b,
            words_per_element: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.m == 0 || self.words_per_element == 0 {
            return Err(Error::InvalidInput("cache parameters must be positive".into()));
        }
        if !self.m.is_multiple_of(self.b) {
            return Err(Error::InvalidInput(format!(
                "block size {} does not divide cache size {}",
                self.b, self.m
            )));
        }
        if self.m < 2 * self.b {
            return Err(Error::InvalidInput(format!(
                "cache of {} words holds fewer than two blocks of {}",
                self.m, self.b
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.m / self.b
    }
}

const NIL: u32 = u32::MAX;

/// Fully associative LRU cache over block numbers.
pub struct LruCache {
    block_words: u64,
    shift: Option<u32>,
    capacity: u32,
    len: u32,
    slot_of: Vec<u32>,
    block_of: Vec<u64>,
    prev: Vec<u32>,
    next: Vec<u32>,
    head: u32,
    tail: u32,
    last: u64,
    misses: u64,
    accesses: u64,
}

impl LruCache {
    pub fn new(cfg: &CacheConfig) -> Result<Self> {
        cfg.validate()?;
        let capacity = cfg.blocks();
        let b = cfg.b as u64;
        Ok(LruCache {
            block_words: b,
            shift: b.is_power_of_two().then(|| b.trailing_zeros()),
            capacity: capacity as u32,
            len: 0,
            slot_of: Vec::new(),
            block_of: vec![0; capacity],
            prev: vec![NIL; capacity],
            next: vec![NIL; capacity],
            head: NIL,
            tail: NIL,
            last: u64::MAX,
            misses: 0,
            accesses: 0,
        })
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    #[inline]
    fn block(&self, addr: u64) -> u64 {
        match self.shift {
            Some(s) => addr >> s,
            None => addr / self.block_words,
        }
    }

    /// Touches every block overlapping `[addr, addr + words)`.
    #[inline]
    pub fn access(&mut self, addr: u64, words: u64) {
        let first = self.block(addr);
        let last = self.block(addr + words.max(1) - 1);
        for b in first..=last {
            self.touch(b);
        }
    }

    #[inline]
    fn touch(&mut self, block: u64) {
        self.accesses += 1;
        if block == self.last {
            return;
        }
        self.last = block;
        let bi = block as usize;
        if bi >= self.slot_of.len() {
            self.slot_of.resize((bi + 1).next_power_of_two(), NIL);
        }
        let slot = self.slot_of[bi];
        if slot != NIL {
            if slot != self.head {
                self.unlink(slot);
                self.push_front(slot);
            }
            return;
        }
        self.misses += 1;
        let slot = if self.len < self.capacity {
            self.len += 1;
            self.len - 1
        } else {
            let victim = self.tail;
            self.unlink(victim);
            self.slot_of[self.block_of[victim as usize] as usize] = NIL;
            victim
        };
        self.block_of[slot as usize] = block;
        self.slot_of[bi] = slot;
        self.push_front(slot);
    }

    fn unlink(&mut self, s: u32) {
        let (p, n) = (self.prev[s as usize], self.next[s as usize]);
        if p != NIL {
            self.next[p as usize] = n;
        } else {
            self.head = n;
        }
        if n != NIL {
            self.prev[n as usize] = p;
        } else {
            self.tail = p;
        }
    }

    fn push_front(&mut self, s: u32) {
        self.prev[s as usize] = NIL;
        self.next[s as usize] = self.head;
        if self.head != NIL {
            self.prev[self.head as usize] = s;
        }
        self.head = s;
        if self.tail == NIL {
            self.tail = s;
        }
    }
}

/// Placement of one registered array in the word address space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub len: u64,
    pub words: u64,
    pub base: u64,
}

#[derive(Clone, Debug)]
pub struct TracerOptions {
    /// Keep every event in memory (needed for dumps and replay).
    pub store_events: bool,
    pub digest: bool,
    /// Caches simulated online while the run executes.
    pub caches: Vec<CacheConfig>,
    pub words_per_element: usize,
}

impl Default for TracerOptions {
    fn default() -> Self {
        TracerOptions {
            store_events: false,
            digest: true,
            caches: Vec::new(),
            words_per_element: 4,
        }
    }
}

struct Channel {
    hasher: Sha256,
    buf: Vec<u8>,
}

impl Channel {
    fn new() -> Self {
        Channel {
            hasher: Sha256::new(),
            buf: Vec::with_capacity(1 << 16),
        }
    }

    #[inline]
    fn push(&mut self, op: Op, array: u32, index: u64) {
        self.buf.push(op as u8);
        self.buf.extend_from_slice(&array.to_le_bytes());
        self.buf.extend_from_slice(&index.to_le_bytes());
        if self.buf.len() >= (1 << 16) - 13 {
            self.hasher.update(&self.buf);
            self.buf.clear();
        }
    }

    fn finish(mut self) -> String {
        self.hasher.update(&self.buf);
        hex::encode(self.hasher.finalize())
    }
}

pub struct Tracer {
    opts: TracerOptions,
    arrays: Vec<ArrayInfo>,
    live: Vec<bool>,
    free: HashMap<u64, Vec<u64>>,
    bump: u64,
    caches: Vec<LruCache>,
    oblivious: Channel,
    revealed: Channel,
    public_depth: u32,
    events: Vec<TraceEvent>,
    event_count: u64,
    fault: Option<String>,
}

impl Tracer {
    pub fn new(opts: TracerOptions) -> Result<Self> {
        for c in &opts.caches {
            if c.words_per_element != opts.words_per_element {
                return Err(Error::InvalidInput(format!(
                    "cache assumes {} words per element, tracer uses {}",
                    c.words_per_element, opts.words_per_element
                )));
            }
        }
        let caches = opts.caches.iter().map(LruCache::new).collect::<Result<_>>()?;
        Ok(Tracer {
            opts,
            arrays: vec![ArrayInfo {
                len: 0,
                words: 0,
                base: 0,
            }],
            live: vec![false],
            free: HashMap::new(),
            bump: 0,
            caches,
            oblivious: Channel::new(),
            revealed: Channel::new(),
            public_depth: 0,
            events: Vec::new(),
            event_count: 0,
            fault: None,
        })
    }

    pub fn words_per_element(&self) -> usize {
        self.opts.words_per_element
    }

    pub(crate) fn register(&mut self, len: usize, words: usize) -> ArrayId {
        let class = ((len * words) as u64).next_power_of_two().max(64);
        let base = match self.free.get_mut(&class).and_then(Vec::pop) {
            Some(b) => b,
            None => {
                let align = class.min(4096);
                let b = self.bump.div_ceil(align) * align;
                self.bump = b + class;
                b
            }
        };
        self.arrays.push(ArrayInfo {
            len: len as u64,
            words: words as u64,
            base,
        });
        self.live.push(true);
        ArrayId(self.arrays.len() as u32 - 1)
    }

    pub(crate) fn retire(&mut self, id: ArrayId) {
        let i = id.0 as usize;
        if i == 0 || i >= self.arrays.len() || !self.live[i] {
            return;
        }
        self.live[i] = false;
        let a = self.arrays[i];
        let class = (a.len * a.words).next_power_of_two().max(64);
        self.free.entry(class).or_default().push(a.base);
    }

    pub(crate) fn enter_public(&mut self) {
        self.public_depth += 1;
    }

    pub(crate) fn leave_public(&mut self) {
        self.public_depth -= 1;
    }

    #[inline]
    pub(crate) fn record(&mut self, op: Op, array: ArrayId, index: usize) {
        self.event_count += 1;
        if op.touches_memory() {
            let i = array.0 as usize;
            match self.arrays.get(i) {
                Some(a) if i != 0 && self.live[i] && (index as u64) < a.len => {
                    let addr = a.base + index as u64 * a.words;
                    let words = a.words;
                    for c in &mut self.caches {
                        c.access(addr, words);
                    }
                }
                _ => {
                    if self.fault.is_none() {
                        self.fault = Some(format!(
                            "{op:?} of index {index} in unregistered or out-of-range array {}",
                            array.0
                        ));
                    }
                }
            }
        }
        let revealed = self.public_depth > 0;
        if self.opts.digest {
            let ch = if revealed {
                &mut self.revealed
            } else {
                &mut self.oblivious
            };
            ch.push(op, array.0, index as u64);
        }
        if self.opts.store_events {
            self.events.push(TraceEvent {
                op,
                array: array.0,
                index: index as u64,
                revealed,
            });
        }
    }

    pub fn misses(&self) -> Vec<u64> {
        self.caches.iter().map(LruCache::misses).collect()
    }

    pub fn finish(self) -> Result<Trace> {
        if let Some(f) = self.fault {
            return Err(Error::Instrument(f));
        }
        Ok(Trace {
            misses: self.caches.iter().map(LruCache::misses).collect(),
            digest: self.oblivious.finish(),
            revealed_digest: self.revealed.finish(),
            event_count: self.event_count,
            events: self.events,
            arrays: self.arrays,
            words_per_element: self.opts.words_per_element,
        })
    }
}

/// The canonical record of one sequential run.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Empty unless the tracer stored events.
    pub events: Vec<TraceEvent>,
    pub event_count: u64,
    /// SHA-256 over the oblivious events, lowercase hex.
    pub digest: String,
    /// SHA-256 over the events of public phases.
    pub revealed_digest: String,
    /// Misses of each online cache, in option order.
    pub misses: Vec<u64>,
    pub arrays: Vec<ArrayInfo>,
    pub words_per_element: usize,
}

impl Trace {
    pub fn dump(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }
}

/// Runs `f` under a fresh tracer on the sequential backend.
pub fn record_trace<R>(
    seed: u64,
    opts: TracerOptions,
    f: impl FnOnce(&mut Ctx<'_>) -> R,
) -> Result<(R, Trace, Counters)> {
    let mut tracer = Tracer::new(opts)?;
    let mut ctx = Ctx::traced(seed, &mut tracer);
    let r = f(&mut ctx);
    let counters = ctx.counters();
    Ok((r, tracer.finish()?, counters))
}

/// Replays a stored trace through a fresh LRU cache.
pub fn simulate_cache(trace: &Trace, cfg: &CacheConfig) -> Result<u64> {
    if trace.events.is_empty() {
        return Err(Error::InvalidInput("trace has no stored events".into()));
    }
    if cfg.words_per_element != trace.words_per_element {
        return Err(Error::InvalidInput(format!(
            "trace was laid out with {} words per element, cache assumes {}",
            trace.words_per_element, cfg.words_per_element
        )));
    }
    let mut lru = LruCache::new(cfg)?;
    for e in &trace.events {
        if e.op.touches_memory() {
            let a = trace.arrays[e.array as usize];
            lru.access(a.base + e.index * a.words, a.words);
        }
    }
    Ok(lru.misses())
}

/// Measured costs of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub work: u64,
    pub span: u64,
    pub comparisons: u64,
    pub cache_misses: u64,
    pub retries: u64,
    pub wall_nanos: u64,
}

impl CostReport {
    pub fn from_counters(c: Counters) -> Self {
        CostReport {
            work: c.work,
            span: c.span,
            comparisons: c.comparisons,
            retries: c.retries,
            ..CostReport::default()
        }
    }
}
