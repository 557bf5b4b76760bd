//! Binary fork-join execution.
//!
//! Every routine in the crate runs against a [`Ctx`]. A context knows its
//! position in the fork tree (its [`TaskPath`]), derives its randomness from
//! `(seed, path)`, accumulates work/span/comparison counters, and forwards
//! logical memory events to a [`Tracer`] when one is attached.
//!
//! Two backends exist. The sequential backend runs the left task before the
//! right one and is the only backend that may carry a tracer; its event order
//! is the canonical trace. The parallel backend hands forks to rayon. Counter
//! merging is deterministic, so both backends report identical costs.
//!
//! Loops over `k` independent bodies ([`Ctx::parallel_for`],
//! [`Ctx::for_each_part`]) are physically forked only down to [`GRAIN`]
//! bodies; below that the bodies run in a plain loop that is *accounted* as
//! the balanced binary fork tree it stands for (`⌈log₂ k⌉` extra span, `k-1`
//! fork units of work).

use std::marker::PhantomData;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::element::{ceil_log2, Element};
use crate::instrument::{Op, Tracer};

/// Loops at or below this many bodies are not physically forked.
pub const GRAIN: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Sequential,
    Parallel,
}

/// Cost counters of one task (and, after joins, of its whole subtree).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub work: u64,
    pub span: u64,
    pub comparisons: u64,
    pub retries: u64,
}

impl Counters {
    /// Join rule: the fork node costs one unit, work adds, span takes the max.
    fn absorb_children(&mut self, left: Counters, right: Counters) {
        self.work += 1 + left.work + right.work;
        self.span += 1 + left.span.max(right.span);
        self.comparisons += left.comparisons + right.comparisons;
        self.retries += left.retries + right.retries;
    }
}

/// Position of a task in the fork tree: left child appends 0, right child 1.
///
/// Paths up to 128 forks deep are stored exactly; deeper paths are folded
/// into a 128-bit fingerprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct TaskPath {
    bits: u128,
    len: u32,
}

impl TaskPath {
    pub const ROOT: TaskPath = TaskPath { bits: 0, len: 0 };

    pub fn child(self, bit: u8) -> TaskPath {
        let bit = u128::from(bit & 1);
        let bits = if self.len < 128 {
            (self.bits << 1) | bit
        } else {
            // fold: rotate and mix, keeping the value a function of the full route
            (self.bits.rotate_left(7) ^ bit).wrapping_mul(0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c835)
        };
        TaskPath {
            bits,
            len: self.len + 1,
        }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    /// The path as a `0`/`1` string, root first. Only exact for depth ≤ 128.
    pub fn to_bit_string(&self) -> String {
        let n = self.len.min(128);
        (0..n)
            .rev()
            .map(|i| if (self.bits >> i) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Route of body `i` in the balanced binary split of `[lo, hi)`.
    fn extend_to_leaf(mut self, mut lo: usize, mut hi: usize, i: usize) -> TaskPath {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if i < mid {
                self = self.child(0);
                hi = mid;
            } else {
                self = self.child(1);
                lo = mid;
            }
        }
        self
    }
}

/// Identifier of a registered logical array. `0` is reserved for control
/// events and for untraced arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct ArrayId(pub u32);

/// Word footprint of an item in the address model.
pub trait Traced: Copy + Send + Sync {
    fn words(words_per_element: usize) -> usize {
        let _ = words_per_element;
        std::mem::size_of::<Self>().div_ceil(8).max(1)
    }
}

impl Traced for Element {
    fn words(words_per_element: usize) -> usize {
        words_per_element
    }
}

impl Traced for u64 {}
impl Traced for u32 {}
impl Traced for usize {}
impl Traced for i64 {}
impl Traced for bool {}
impl Traced for (u64, u64) {}
impl Traced for (u64, bool) {}
impl Traced for Option<u64> {}

/// Task context. See the module docs.
pub struct Ctx<'t> {
    seed: u64,
    path: TaskPath,
    leaf: Option<(usize, usize, usize)>,
    backend: Backend,
    tracer: Option<&'t mut Tracer>,
    counters: Counters,
}

impl Ctx<'static> {
    pub fn new(seed: u64, backend: Backend) -> Self {
        Ctx {
            seed,
            path: TaskPath::ROOT,
            leaf: None,
            backend,
            tracer: None,
            counters: Counters::default(),
        }
    }

    pub fn sequential(seed: u64) -> Self {
        Ctx::new(seed, Backend::Sequential)
    }

    pub fn parallel(seed: u64) -> Self {
        Ctx::new(seed, Backend::Parallel)
    }
}

impl<'t> Ctx<'t> {
    /// A sequential context that reports every logical access to `tracer`.
    pub fn traced(seed: u64, tracer: &'t mut Tracer) -> Self {
        Ctx {
            seed,
            path: TaskPath::ROOT,
            leaf: None,
            backend: Backend::Sequential,
            tracer: Some(tracer),
            counters: Counters::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_traced(&self) -> bool {
        self.tracer.is_some()
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn path(&mut self) -> TaskPath {
        self.resolve_leaf();
        self.path
    }

    fn resolve_leaf(&mut self) {
        if let Some((lo, hi, i)) = self.leaf.take() {
            self.path = self.path.extend_to_leaf(lo, hi, i);
        }
    }

    /// Deterministic generator that is a pure function of `(seed, path)`.
    pub fn rng(&mut self) -> ChaCha8Rng {
        let path = self.path();
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(path.bits.to_le_bytes());
        h.update(path.len.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    pub(crate) fn add_retry(&mut self) {
        self.counters.retries += 1;
    }

    /// One unit of local work that touches no memory.
    #[inline]
    pub fn tick(&mut self) {
        self.counters.work += 1;
        self.counters.span += 1;
    }

    #[inline(always)]
    pub(crate) fn touch(&mut self, op: Op, array: ArrayId, index: usize) {
        self.counters.work += 1;
        self.counters.span += 1;
        if op == Op::Compare {
            self.counters.comparisons += 1;
        }
        if let Some(t) = self.tracer.as_deref_mut() {
            t.record(op, array, index);
        }
    }

    fn control(&mut self, op: Op) {
        if let Some(t) = self.tracer.as_deref_mut() {
            t.record(op, ArrayId(0), 0);
        }
    }

    /// Registers a logical array of `len` items with the tracer.
    pub fn register<T: Traced>(&mut self, len: usize) -> ArrayId {
        match self.tracer.as_deref_mut() {
            Some(t) => t.register(len, T::words(t.words_per_element())),
            None => ArrayId(0),
        }
    }

    /// Returns an array's address range to the tracer for reuse.
    pub fn retire(&mut self, id: ArrayId) {
        if let Some(t) = self.tracer.as_deref_mut() {
            t.retire(id);
        }
    }

    /// Runs `f` over a freshly registered scratch array that is retired
    /// afterwards.
    pub fn with_scratch<T: Traced, R>(
        &mut self,
        len: usize,
        fill: T,
        f: impl FnOnce(&mut Ctx<'_>, Slab<'_, T>) -> R,
    ) -> R {
        let mut buf = vec![fill; len];
        let slab = Slab::new(self, &mut buf);
        let id = slab.array();
        let r = f(self, slab);
        self.retire(id);
        r
    }

    /// Runs `f` with its events routed to the tracer's revealed channel:
    /// they are cached and stored but excluded from the oblivious digest.
    pub fn public_phase<R>(&mut self, f: impl FnOnce(&mut Ctx<'_>) -> R) -> R {
        if let Some(t) = self.tracer.as_deref_mut() {
            t.enter_public();
        }
        let r = f(self);
        if let Some(t) = self.tracer.as_deref_mut() {
            t.leave_public();
        }
        r
    }

    fn child(&self, path: TaskPath) -> Ctx<'static> {
        Ctx {
            seed: self.seed,
            path,
            leaf: None,
            backend: self.backend,
            tracer: None,
            counters: Counters::default(),
        }
    }

    /// Runs `left` and `right` as the two children of a fork and waits for
    /// both. Children see paths `path∥0` and `path∥1`.
    pub fn fork_join<A, B, RA, RB>(&mut self, left: A, right: B) -> (RA, RB)
    where
        A: FnOnce(&mut Ctx<'_>) -> RA + Send,
        B: FnOnce(&mut Ctx<'_>) -> RB + Send,
        RA: Send,
        RB: Send,
    {
        self.resolve_leaf();
        let lpath = self.path.child(0);
        let rpath = self.path.child(1);
        self.control(Op::Fork);
        let (ra, rb, lc, rc) = if self.backend == Backend::Parallel && self.tracer.is_none() {
            let mut lctx = self.child(lpath);
            let mut rctx = self.child(rpath);
            let (ra, rb) = rayon::join(|| left(&mut lctx), || right(&mut rctx));
            (ra, rb, lctx.counters, rctx.counters)
        } else {
            let base = self.child(lpath);
            let mut lctx = Ctx {
                tracer: self.tracer.as_deref_mut(),
                ..base
            };
            let ra = left(&mut lctx);
            let lc = lctx.counters;
            let base = self.child(rpath);
            let mut rctx = Ctx {
                tracer: self.tracer.as_deref_mut(),
                ..base
            };
            let rb = right(&mut rctx);
            let rc = rctx.counters;
            (ra, rb, lc, rc)
        };
        self.counters.absorb_children(lc, rc);
        self.control(Op::Join);
        (ra, rb)
    }

    /// Fork-join over fallible children. Both children always run to
    /// completion; the left error wins if both fail.
    pub fn try_fork_join<A, B, RA, RB, E>(&mut self, left: A, right: B) -> Result<(RA, RB), E>
    where
        A: FnOnce(&mut Ctx<'_>) -> Result<RA, E> + Send,
        B: FnOnce(&mut Ctx<'_>) -> Result<RB, E> + Send,
        RA: Send,
        RB: Send,
        E: Send,
    {
        match self.fork_join(left, right) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    }

    /// Runs `body(i)` for `i in 0..k` as a balanced binary fork tree.
    pub fn parallel_for<F>(&mut self, k: usize, body: F)
    where
        F: Fn(&mut Ctx<'_>, usize) + Sync,
    {
        self.pfor(0, k, &body);
    }

    /// [`Ctx::parallel_for`] for bodies that always cost exactly `cost`.
    /// Untraced runs evaluate `fast(i)` in plain leaf loops and charge the
    /// counters in bulk, with the same totals `body` would produce.
    pub(crate) fn parallel_for_fixed<F, G>(&mut self, k: usize, cost: Counters, fast: G, body: F)
    where
        F: Fn(&mut Ctx<'_>, usize) + Sync,
        G: Fn(usize) + Sync,
    {
        if self.tracer.is_some() {
            self.pfor(0, k, &body);
        } else {
            self.pfor_fixed(0, k, &cost, &fast);
        }
    }

    fn pfor_fixed<G>(&mut self, lo: usize, hi: usize, cost: &Counters, fast: &G)
    where
        G: Fn(usize) + Sync,
    {
        let k = hi - lo;
        if k == 0 {
            return;
        }
        if k <= GRAIN {
            let c = &mut self.counters;
            if k == 1 {
                fast(lo);
                c.work += cost.work;
                c.span += cost.span;
                c.comparisons += cost.comparisons;
                return;
            }
            self.resolve_leaf();
            for i in lo..hi {
                fast(i);
            }
            let c = &mut self.counters;
            let k64 = k as u64;
            c.work += k64 * cost.work + k64 - 1;
            c.span += u64::from(ceil_log2(k)) + cost.span;
            c.comparisons += k64 * cost.comparisons;
            return;
        }
        let mid = lo + k / 2;
        self.fork_join(|c| c.pfor_fixed(lo, mid, cost, fast), |c| c.pfor_fixed(mid, hi, cost, fast));
    }

    fn pfor<F>(&mut self, lo: usize, hi: usize, body: &F)
    where
        F: Fn(&mut Ctx<'_>, usize) + Sync,
    {
        let k = hi - lo;
        if k == 0 {
            return;
        }
        if k <= GRAIN {
            self.leaf_loop(lo, hi, |ctx, i| body(ctx, i));
            return;
        }
        let mid = lo + k / 2;
        self.fork_join(|c| c.pfor(lo, mid, body), |c| c.pfor(mid, hi, body));
    }

    /// Evaluates `map(i)` for `i in 0..k` as a balanced fork tree and folds
    /// the results with `combine` at the joins.
    pub fn map_reduce<R, M, F>(&mut self, k: usize, identity: R, map: M, combine: F) -> R
    where
        R: Send + Copy,
        M: Fn(&mut Ctx<'_>, usize) -> R + Sync,
        F: Fn(R, R) -> R + Sync,
    {
        self.mr(0, k, identity, &map, &combine)
    }

    fn mr<R, M, F>(&mut self, lo: usize, hi: usize, identity: R, map: &M, combine: &F) -> R
    where
        R: Send + Copy,
        M: Fn(&mut Ctx<'_>, usize) -> R + Sync,
        F: Fn(R, R) -> R + Sync,
    {
        let k = hi - lo;
        if k == 0 {
            return identity;
        }
        if k <= GRAIN {
            let mut acc = identity;
            self.leaf_loop(lo, hi, |ctx, i| acc = combine(acc, map(ctx, i)));
            return acc;
        }
        let mid = lo + k / 2;
        let (a, b) = self.fork_join(
            move |c| c.mr(lo, mid, identity, map, combine),
            move |c| c.mr(mid, hi, identity, map, combine),
        );
        combine(a, b)
    }

    /// Sequential stand-in for the fork tree over `[lo, hi)`.
    fn leaf_loop(&mut self, lo: usize, hi: usize, mut body: impl FnMut(&mut Self, usize)) {
        let k = hi - lo;
        if k == 1 {
            body(self, lo);
            return;
        }
        self.resolve_leaf();
        let saved = self.path;
        let start = self.counters.span;
        let mut deepest = 0;
        for i in lo..hi {
            self.leaf = Some((lo, hi, i));
            body(self, i);
            self.leaf = None;
            self.path = saved;
            deepest = deepest.max(self.counters.span - start);
            self.counters.span = start;
        }
        self.counters.span = start + u64::from(ceil_log2(k)) + deepest;
        self.counters.work += (k - 1) as u64;
    }

    /// Splits `parts` into its individual parts and runs `body` on each as a
    /// balanced binary fork tree; `body` receives the part index and a value
    /// with exactly one part.
    pub fn for_each_part<P, F>(&mut self, parts: P, body: F)
    where
        P: Parts,
        F: Fn(&mut Ctx<'_>, usize, P) + Sync,
    {
        self.each_part(0, parts, &body);
    }

    /// Fallible [`Ctx::for_each_part`]: every body runs; the error of the
    /// lowest failing part is returned.
    pub fn try_for_each_part<P, F, E>(&mut self, parts: P, body: F) -> Result<(), E>
    where
        P: Parts,
        F: Fn(&mut Ctx<'_>, usize, P) -> Result<(), E> + Sync,
        E: Send,
    {
        self.try_each_part(0, parts, &body)
    }

    fn try_each_part<P, F, E>(&mut self, offset: usize, parts: P, body: &F) -> Result<(), E>
    where
        P: Parts,
        F: Fn(&mut Ctx<'_>, usize, P) -> Result<(), E> + Sync,
        E: Send,
    {
        let k = parts.parts();
        if k == 0 {
            return Ok(());
        }
        if k <= GRAIN {
            let mut rest = Some(parts);
            let mut first = None;
            self.leaf_loop(offset, offset + k, |ctx, i| {
                let r = rest.take().expect("parts exhausted");
                let res = if i + 1 == offset + k {
                    body(ctx, i, r)
                } else {
                    let (one, tail) = r.split_parts(1);
                    rest = Some(tail);
                    body(ctx, i, one)
                };
                if let (Err(e), None) = (res, &first) {
                    first = Some(e);
                }
            });
            return first.map_or(Ok(()), Err);
        }
        let mid = k / 2;
        let (l, r) = parts.split_parts(mid);
        self.try_fork_join(
            |c| c.try_each_part(offset, l, body),
            |c| c.try_each_part(offset + mid, r, body),
        )
        .map(|_| ())
    }

    fn each_part<P, F>(&mut self, offset: usize, parts: P, body: &F)
    where
        P: Parts,
        F: Fn(&mut Ctx<'_>, usize, P) + Sync,
    {
        let k = parts.parts();
        if k == 0 {
            return;
        }
        if k <= GRAIN {
            let mut rest = Some(parts);
            self.leaf_loop(offset, offset + k, |ctx, i| {
                let r = rest.take().expect("parts exhausted");
                if i + 1 == offset + k {
                    body(ctx, i, r);
                } else {
                    let (one, tail) = r.split_parts(1);
                    rest = Some(tail);
                    body(ctx, i, one);
                }
            });
            return;
        }
        let mid = k / 2;
        let (l, r) = parts.split_parts(mid);
        self.fork_join(
            |c| c.each_part(offset, l, body),
            |c| c.each_part(offset + mid, r, body),
        );
    }
}

/// Counter-based coin: a uniform 64-bit word that is a pure function of
/// `(seed, stream, index)`.
pub fn coin(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Something that can be cut into a number of equal parts.
pub trait Parts: Sized + Send {
    fn parts(&self) -> usize;
    /// Splits after the first `k` parts.
    fn split_parts(self, k: usize) -> (Self, Self);
}

/// A slab or slice viewed as consecutive chunks of `size` items.
pub struct Chunks<S> {
    inner: S,
    size: usize,
}

impl<S> Chunks<S> {
    pub fn new(inner: S, size: usize) -> Self {
        assert!(size > 0, "chunk size must be positive");
        Chunks { inner, size }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<'a, T: Traced> Parts for Chunks<Slab<'a, T>> {
    fn parts(&self) -> usize {
        self.inner.len() / self.size
    }

    fn split_parts(self, k: usize) -> (Self, Self) {
        let (a, b) = self.inner.split_at(k * self.size);
        (Chunks::new(a, self.size), Chunks::new(b, self.size))
    }
}

impl<T: Send> Parts for Chunks<&mut [T]> {
    fn parts(&self) -> usize {
        self.inner.len() / self.size
    }

    fn split_parts(self, k: usize) -> (Self, Self) {
        let (a, b) = self.inner.split_at_mut(k * self.size);
        (Chunks::new(a, self.size), Chunks::new(b, self.size))
    }
}

impl<A: Parts, B: Parts> Parts for (A, B) {
    fn parts(&self) -> usize {
        debug_assert_eq!(self.0.parts(), self.1.parts());
        self.0.parts()
    }

    fn split_parts(self, k: usize) -> (Self, Self) {
        let (a0, a1) = self.0.split_parts(k);
        let (b0, b1) = self.1.split_parts(k);
        ((a0, b0), (a1, b1))
    }
}

/// A tracked mutable view of (part of) a registered array.
///
/// Reads and writes go through a [`Ctx`] so they are counted and traced with
/// the index relative to the registered array.
pub struct Slab<'a, T> {
    ptr: *mut T,
    len: usize,
    array: ArrayId,
    offset: usize,
    _marker: PhantomData<&'a mut [T]>,
}

// A slab is a `&mut [T]` with extra bookkeeping.
unsafe impl<T: Send> Send for Slab<'_, T> {}
unsafe impl<T: Sync> Sync for Slab<'_, T> {}

impl<'a, T: Traced> Slab<'a, T> {
    /// Registers `data` as a new logical array.
    pub fn new(ctx: &mut Ctx<'_>, data: &'a mut [T]) -> Self {
        let array = ctx.register::<T>(data.len());
        Slab {
            ptr: data.as_mut_ptr(),
            len: data.len(),
            array,
            offset: 0,
            _marker: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn array(&self) -> ArrayId {
        self.array
    }

    /// Position of the first item within the registered array.
    pub fn offset(&self) -> usize {
        self.offset
    }

    #[inline]
    pub fn get(&self, ctx: &mut Ctx<'_>, i: usize) -> T {
        assert!(i < self.len, "slab index {i} out of bounds ({})", self.len);
        ctx.touch(Op::Read, self.array, self.offset + i);
        // SAFETY: bounds checked above; the slab owns a unique borrow.
        unsafe { *self.ptr.add(i) }
    }

    #[inline]
    pub fn set(&mut self, ctx: &mut Ctx<'_>, i: usize, v: T) {
        assert!(i < self.len, "slab index {i} out of bounds ({})", self.len);
        ctx.touch(Op::Write, self.array, self.offset + i);
        // SAFETY: as in `get`.
        unsafe { *self.ptr.add(i) = v }
    }

    /// Branch-free compare-exchange of slots `i < j`: afterwards slot `i`
    /// holds the element that is not `after` the other. Records two reads,
    /// one compare and two writes whatever the outcome.
    #[inline]
    pub fn compare_exchange<C>(&mut self, ctx: &mut Ctx<'_>, i: usize, j: usize, after: &C)
    where
        C: Fn(&T, &T) -> bool,
    {
        let a = self.get(ctx, i);
        let b = self.get(ctx, j);
        ctx.touch(Op::Compare, self.array, self.offset + i);
        let swap = after(&a, &b);
        let (lo, hi) = if swap { (b, a) } else { (a, b) };
        self.set(ctx, i, lo);
        self.set(ctx, j, hi);
    }

    pub fn split_at(self, mid: usize) -> (Slab<'a, T>, Slab<'a, T>) {
        assert!(mid <= self.len);
        let right = Slab {
            // SAFETY: mid <= len.
            ptr: unsafe { self.ptr.add(mid) },
            len: self.len - mid,
            array: self.array,
            offset: self.offset + mid,
            _marker: PhantomData,
        };
        let left = Slab { len: mid, ..self };
        (left, right)
    }

    /// Sub-slab `[start, start + len)`.
    pub fn slice(self, start: usize, len: usize) -> Slab<'a, T> {
        let (_, rest) = self.split_at(start);
        rest.split_at(len).0
    }

    pub fn reborrow(&mut self) -> Slab<'_, T> {
        Slab {
            ptr: self.ptr,
            len: self.len,
            array: self.array,
            offset: self.offset,
            _marker: PhantomData,
        }
    }

    /// Untraced read-only view, for assertions and result extraction.
    pub fn peek(&self) -> &[T] {
        // SAFETY: the slab holds a unique borrow of len items.
        unsafe { std::slice::from_raw_parts(self.ptr, self.len) }
    }

    /// Shared-write view for patterns whose writes are disjoint but
    /// interleaved (transposes).
    ///
    /// # Safety
    /// Concurrent users of the returned views must write disjoint indices and
    /// must not read indices another user writes.
    pub(crate) unsafe fn shared(&mut self) -> SharedSlab<'_, T> {
        SharedSlab {
            ptr: self.ptr,
            len: self.len,
            array: self.array,
            offset: self.offset,
            _marker: PhantomData,
        }
    }
}

/// Copyable alias of a slab; see [`Slab::shared`].
pub(crate) struct SharedSlab<'a, T> {
    ptr: *mut T,
    len: usize,
    array: ArrayId,
    offset: usize,
    _marker: PhantomData<&'a [T]>,
}

impl<T> Clone for SharedSlab<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for SharedSlab<'_, T> {}

unsafe impl<T: Send> Send for SharedSlab<'_, T> {}
unsafe impl<T: Send> Sync for SharedSlab<'_, T> {}

impl<T: Traced> SharedSlab<'_, T> {
    pub(crate) fn array(&self) -> ArrayId {
        self.array
    }

    pub(crate) fn offset(&self) -> usize {
        self.offset
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    #[inline(always)]
    pub(crate) fn get(&self, ctx: &mut Ctx<'_>, i: usize) -> T {
        assert!(i < self.len);
        ctx.touch(Op::Read, self.array, self.offset + i);
        unsafe { *self.ptr.add(i) }
    }

    /// Unrecorded read; only for bodies whose accesses are charged in bulk.
    ///
    /// # Safety
    /// No other task may write slot `i` concurrently.
    #[inline(always)]
    pub(crate) unsafe fn peek(&self, i: usize) -> T {
        debug_assert!(i < self.len);
        *self.ptr.add(i)
    }

    /// # Safety
    /// As [`SharedSlab::peek`], for any concurrent access to slot `i`.
    #[inline(always)]
    pub(crate) unsafe fn poke(&self, i: usize, v: T) {
        debug_assert!(i < self.len);
        *self.ptr.add(i) = v
    }

    #[inline(always)]
    pub(crate) fn set(&self, ctx: &mut Ctx<'_>, i: usize, v: T) {
        assert!(i < self.len);
        ctx.touch(Op::Write, self.array, self.offset + i);
        unsafe { *self.ptr.add(i) = v }
    }
}
