//! Fixed-pattern data movement: prefix sums, segmented scans and the
//! recursive bin-matrix transpose.

use crate::element::{BinMatrix, Element, BOTTOM};
use crate::exec::{Ctx, SharedSlab, Slab, Traced};

/// In-place inclusive scan over a balanced binary tree (upsweep stores left
/// subtree sums, downsweep pushes prefixes). The access pattern depends only
/// on `data.len()`.
pub fn scan_in_place<T, F>(ctx: &mut Ctx<'_>, mut data: Slab<'_, T>, combine: &F)
where
    T: Traced,
    F: Fn(T, T) -> T + Sync,
{
    let n = data.len();
    if n <= 1 {
        return;
    }
    let init = data.peek()[0];
    ctx.with_scratch(2 * n.next_power_of_two(), init, |ctx, mut tree| {
        // SAFETY: upsweep writes only tree[node] of distinct nodes and reads
        // data; downsweep reads tree and writes distinct data slots.
        let (d, t) = unsafe { (data.shared(), tree.shared()) };
        upsweep(ctx, 1, 0, n, d, t, combine);
        downsweep(ctx, 1, 0, n, None, d, t, combine);
    });
}

fn upsweep<T, F>(
    ctx: &mut Ctx<'_>,
    node: usize,
    lo: usize,
    hi: usize,
    data: SharedSlab<'_, T>,
    tree: SharedSlab<'_, T>,
    combine: &F,
) -> T
where
    T: Traced,
    F: Fn(T, T) -> T + Sync,
{
    if hi - lo == 1 {
        return data.get(ctx, lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (l, r) = ctx.fork_join(
        |c| upsweep(c, 2 * node, lo, mid, data, tree, combine),
        |c| upsweep(c, 2 * node + 1, mid, hi, data, tree, combine),
    );
    tree.set(ctx, node, l);
    ctx.tick();
    combine(l, r)
}

#[allow(clippy::too_many_arguments)]
fn downsweep<T, F>(
    ctx: &mut Ctx<'_>,
    node: usize,
    lo: usize,
    hi: usize,
    prefix: Option<T>,
    data: SharedSlab<'_, T>,
    tree: SharedSlab<'_, T>,
    combine: &F,
) where
    T: Traced,
    F: Fn(T, T) -> T + Sync,
{
    if hi - lo == 1 {
        if let Some(p) = prefix {
            let v = data.get(ctx, lo);
            data.set(ctx, lo, combine(p, v));
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let left = tree.get(ctx, node);
    ctx.tick();
    let right_prefix = Some(match prefix {
        Some(p) => combine(p, left),
        None => left,
    });
    ctx.fork_join(
        |c| downsweep(c, 2 * node, lo, mid, prefix, data, tree, combine),
        |c| downsweep(c, 2 * node + 1, mid, hi, right_prefix, data, tree, combine),
    );
}

/// `out[i] = combine(values[0], …, values[i])`.
pub fn prefix_sum<T, F>(ctx: &mut Ctx<'_>, mut values: Vec<T>, combine: F) -> Vec<T>
where
    T: Traced,
    F: Fn(T, T) -> T + Sync,
{
    let slab = Slab::new(ctx, &mut values);
    scan_in_place(ctx, slab, &combine);
    values
}

/// Slot of a segmented scan: `key == None` marks a filler (⊥).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seg {
    pub key: Option<u64>,
    pub value: u64,
}

impl Traced for Seg {}

impl Seg {
    pub fn new(key: u64, value: u64) -> Self {
        Seg {
            key: Some(key),
            value,
        }
    }

    pub const BOTTOM: Seg = Seg {
        key: None,
        value: BOTTOM,
    };
}

/// Segmented combine: the running value restarts whenever the key changes.
/// Associative as long as equal keys are contiguous. `f` is evaluated on
/// every pair, including ⊥ payloads, so it must not panic on overflow.
#[inline]
fn seg_combine<F: Fn(u64, u64) -> u64>(f: &F, a: Seg, b: Seg) -> Seg {
    let same = a.key == b.key && b.key.is_some();
    let joined = f(a.value, b.value);
    Seg {
        key: b.key,
        value: if same { joined } else { b.value },
    }
}

/// Runs a segmented scan forwards (`reverse == false`) or backwards over a
/// registered slab of segments. Filler slots come out as ⊥.
pub(crate) fn segmented_scan_slab<F>(
    ctx: &mut Ctx<'_>,
    mut data: Slab<'_, Seg>,
    f: &F,
    reverse: bool,
) where
    F: Fn(u64, u64) -> u64 + Sync,
{
    let n = data.len();
    let combine = |a: Seg, b: Seg| seg_combine(f, a, b);
    if reverse {
        reverse_scan(ctx, data.reborrow(), &combine);
    } else {
        scan_in_place(ctx, data.reborrow(), &combine);
    }
    // SAFETY: one body per index.
    let d = unsafe { data.shared() };
    ctx.parallel_for(n, |c, i| {
        let s = d.get(c, i);
        let out = if s.key.is_some() { s } else { Seg::BOTTOM };
        d.set(c, i, out);
    });
}

/// Suffix scan: the forward scan of the mirrored array, mirrored back.
fn reverse_scan<T, F>(ctx: &mut Ctx<'_>, data: Slab<'_, T>, combine: &F)
where
    T: Traced,
    F: Fn(T, T) -> T + Sync,
{
    let n = data.len();
    if n <= 1 {
        return;
    }
    // mirror through a scratch buffer so the scan itself stays forward
    let init = data.peek()[0];
    ctx.with_scratch(n, init, |ctx, mut tmp| {
        copy_reversed(ctx, &data, &mut tmp);
        scan_in_place(ctx, tmp.reborrow(), combine);
        let mut data = data;
        copy_reversed(ctx, &tmp, &mut data);
    });
}

fn copy_reversed<T: Traced>(ctx: &mut Ctx<'_>, src: &Slab<'_, T>, dst: &mut Slab<'_, T>) {
    let n = src.len();
    // SAFETY: body i writes only dst[i].
    let d = unsafe { dst.shared() };
    ctx.parallel_for(n, |c, i| {
        let v = src.get(c, n - 1 - i);
        d.set(c, i, v);
    });
}

/// Aggregation: `out[i] = f` over the values of `i`'s key group from `i` to
/// the group's end. Equal keys must be contiguous.
pub fn segmented_suffix<F>(ctx: &mut Ctx<'_>, mut items: Vec<Seg>, f: F) -> Vec<Seg>
where
    F: Fn(u64, u64) -> u64 + Sync,
{
    let slab = Slab::new(ctx, &mut items);
    segmented_scan_slab(ctx, slab, &f, true);
    items
}

/// Propagation: `out[i] = f` over the values of `i`'s key group from the
/// group's start to `i`. With `f = |a, _| a` every slot learns its group
/// head's value.
pub fn segmented_prefix<F>(ctx: &mut Ctx<'_>, mut items: Vec<Seg>, f: F) -> Vec<Seg>
where
    F: Fn(u64, u64) -> u64 + Sync,
{
    let slab = Slab::new(ctx, &mut items);
    segmented_scan_slab(ctx, slab, &f, false);
    items
}

/// Copies an `rows × cols` matrix of `cell`-item cells from `src` into `dst`
/// transposed, halving the larger dimension recursively.
pub fn transpose_cells<T: Traced>(
    ctx: &mut Ctx<'_>,
    src: &Slab<'_, T>,
    dst: &mut Slab<'_, T>,
    rows: usize,
    cols: usize,
    cell: usize,
) {
    assert_eq!(src.len(), rows * cols * cell);
    assert_eq!(dst.len(), rows * cols * cell);
    // SAFETY: each (row, col) cell writes its own destination range.
    let d = unsafe { dst.shared() };
    let shape = Shape { rows, cols, cell };
    transpose_rec(ctx, src, d, shape, (0, rows), (0, cols));
}

#[derive(Clone, Copy)]
struct Shape {
    rows: usize,
    cols: usize,
    cell: usize,
}

fn transpose_rec<T: Traced>(
    ctx: &mut Ctx<'_>,
    src: &Slab<'_, T>,
    dst: SharedSlab<'_, T>,
    s: Shape,
    (r0, r1): (usize, usize),
    (c0, c1): (usize, usize),
) {
    let (h, w) = (r1 - r0, c1 - c0);
    if h == 0 || w == 0 {
        return;
    }
    if h == 1 && w == 1 {
        let from = (r0 * s.cols + c0) * s.cell;
        let to = (c0 * s.rows + r0) * s.cell;
        ctx.parallel_for(s.cell, |c, k| {
            let v = src.get(c, from + k);
            dst.set(c, to + k, v);
        });
        return;
    }
    if h >= w {
        let m = r0 + h / 2;
        ctx.fork_join(
            |c| transpose_rec(c, src, dst, s, (r0, m), (c0, c1)),
            |c| transpose_rec(c, src, dst, s, (m, r1), (c0, c1)),
        );
    } else {
        let m = c0 + w / 2;
        ctx.fork_join(
            |c| transpose_rec(c, src, dst, s, (r0, r1), (c0, m)),
            |c| transpose_rec(c, src, dst, s, (r0, r1), (m, c1)),
        );
    }
}

/// `result.bin(j, i) == m.bin(i, j)`.
pub fn transpose_bins(ctx: &mut Ctx<'_>, m: BinMatrix) -> BinMatrix {
    let (rows, cols, z) = (m.rows(), m.cols(), m.capacity());
    let mut src = m.into_slots();
    let mut out = vec![Element::filler(); src.len()];
    {
        let s = Slab::new(ctx, &mut src);
        let mut d = Slab::new(ctx, &mut out);
        transpose_cells(ctx, &s, &mut d, rows, cols, z);
        let id = s.array();
        ctx.retire(id);
    }
    BinMatrix::new(cols, rows, z, out).expect("transpose keeps the slot count")
}
