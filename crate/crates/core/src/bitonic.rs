//! Bitonic sort and merge in binary fork-join.
//!
//! A merge of `m = 2^k` items views the input as an `r × c` row-major
//! matrix with `r = 2^⌈k/2⌉`, `c = 2^⌊k/2⌋`. The comparator layers with
//! strides `m/2 … c` act inside columns and the remaining ones inside rows,
//! so the merge transposes, merges the columns recursively, transposes back
//! and merges the rows. Transposes are done in place on square blocks, so
//! neither sort nor merge needs scratch space. Below 64 items the network
//! is evaluated layer by layer.

use crate::element::{ceil_log2, Element};
use crate::error::{Error, Result};
use crate::exec::{Chunks, Counters, Ctx, SharedSlab, Slab, Traced};
use crate::instrument::Op;

const BASE: usize = 64;

/// `(key, origin)` order with fillers last.
pub fn elem_after(a: &Element, b: &Element) -> bool {
    let key = |e: &Element| {
        let (k, o) = e.sort_key();
        (u128::from(k) << 64) | u128::from(o)
    };
    key(a) > key(b)
}

/// One comparator on slots `i < j`: afterwards slot `i` holds the smaller
/// item when `ascending`, the larger one otherwise.
#[inline(always)]
fn comparator<T: Traced, C: Fn(&T, &T) -> bool>(
    ctx: &mut Ctx<'_>,
    data: SharedSlab<'_, T>,
    i: usize,
    j: usize,
    ascending: bool,
    after: &C,
) {
    let a = data.get(ctx, i);
    let b = data.get(ctx, j);
    ctx.touch(Op::Compare, data.array(), data.offset() + i);
    let swap = if ascending { after(&a, &b) } else { after(&b, &a) };
    let (x, y) = if swap { (b, a) } else { (a, b) };
    data.set(ctx, i, x);
    data.set(ctx, j, y);
}

const COMPARATOR_COST: Counters = Counters {
    work: 5,
    span: 5,
    comparisons: 1,
    retries: 0,
};

fn check_len(n: usize) -> Result<()> {
    if n > 0 && !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo {
            what: "bitonic length",
            value: n,
        });
    }
    Ok(())
}

/// Sorts a power-of-two slab in place. `after(a, b)` means `a` belongs
/// after `b` in ascending order.
pub fn sort_slab<T, C>(ctx: &mut Ctx<'_>, mut data: Slab<'_, T>, ascending: bool, after: &C)
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
{
    let n = data.len();
    assert!(n == 0 || n.is_power_of_two(), "bitonic length {n} is not a power of two");
    if n <= 1 {
        return;
    }
    if n <= BASE {
        network_sort(ctx, &mut data, ascending, after);
        return;
    }
    {
        let (l, r) = data.reborrow().split_at(n / 2);
        ctx.fork_join(
            |c| sort_slab(c, l, ascending, after),
            |c| sort_slab(c, r, !ascending, after),
        );
    }
    merge_slab(ctx, data, ascending, after);
}

/// Merges a bitonic power-of-two slab in place.
///
/// For `m = 2^k` with even `k` the `√m × √m` view is transposed in place,
/// its rows (the former columns) merged, transposed back and its rows
/// merged. For odd `k` the `2c × c` view stacks two `c × c` squares: the
/// first column layer pairs equal positions of the two squares, after which
/// each square is an independent even-`k` merge.
pub fn merge_slab<T, C>(ctx: &mut Ctx<'_>, mut data: Slab<'_, T>, ascending: bool, after: &C)
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
{
    let m = data.len();
    assert!(m == 0 || m.is_power_of_two(), "bitonic length {m} is not a power of two");
    if m <= 1 {
        return;
    }
    if m <= BASE {
        network_merge(ctx, &mut data, ascending, after);
        return;
    }
    let k = m.trailing_zeros();
    if k % 2 == 1 {
        layer(ctx, &mut data, m / 2, |_| ascending, after);
        let (top, bottom) = data.split_at(m / 2);
        ctx.fork_join(
            |c| merge_slab(c, top, ascending, after),
            |c| merge_slab(c, bottom, ascending, after),
        );
        return;
    }
    let side = 1usize << (k / 2);
    transpose_square(ctx, &mut data, side);
    ctx.for_each_part(Chunks::new(data.reborrow(), side), |c, _, row| {
        merge_slab(c, row.into_inner(), ascending, after)
    });
    transpose_square(ctx, &mut data, side);
    ctx.for_each_part(Chunks::new(data, side), |c, _, row| {
        merge_slab(c, row.into_inner(), ascending, after)
    });
}

const TILE: usize = 8;

/// In-place transpose of a row-major `side × side` slab.
pub fn transpose_square<T: Traced>(ctx: &mut Ctx<'_>, data: &mut Slab<'_, T>, side: usize) {
    assert_eq!(data.len(), side * side);
    // SAFETY: every task owns a disjoint set of cells (a diagonal block or a
    // pair of mirrored off-diagonal blocks).
    let d = unsafe { data.shared() };
    transpose_diag(ctx, d, side, 0, side);
}

fn transpose_diag<T: Traced>(ctx: &mut Ctx<'_>, d: SharedSlab<'_, T>, side: usize, o: usize, s: usize) {
    if s <= TILE {
        let pairs = s * (s - 1) / 2;
        // t-th pair (i, j) with i < j, row-major over the upper triangle
        let cells = |t: usize| {
            let (mut i, mut rest) = (0, t);
            while rest >= s - 1 - i {
                rest -= s - 1 - i;
                i += 1;
            }
            let j = i + 1 + rest;
            ((o + i) * side + o + j, (o + j) * side + o + i)
        };
        ctx.parallel_for_fixed(
            pairs,
            SWAP_COST,
            |t| {
                let (a, b) = cells(t);
                swap_unrecorded(d, a, b);
            },
            |c, t| {
                let (a, b) = cells(t);
                swap_cells(c, d, a, b);
            },
        );
        return;
    }
    let h = s / 2;
    ctx.fork_join(
        |c| {
            c.fork_join(
                |c| transpose_diag(c, d, side, o, h),
                |c| transpose_diag(c, d, side, o + h, h),
            );
        },
        |c| swap_mirrored(c, d, side, (o, o + h), (o + h, o), h),
    );
}

/// Swaps block `X` at `x` with the transpose of block `Y` at `y`
/// (`X[i][j] ↔ Y[j][i]`).
fn swap_mirrored<T: Traced>(
    ctx: &mut Ctx<'_>,
    d: SharedSlab<'_, T>,
    side: usize,
    x: (usize, usize),
    y: (usize, usize),
    s: usize,
) {
    if s <= TILE {
        let cells = |t: usize| {
            let (i, j) = (t / s, t % s);
            ((x.0 + i) * side + x.1 + j, (y.0 + j) * side + y.1 + i)
        };
        ctx.parallel_for_fixed(
            s * s,
            SWAP_COST,
            |t| {
                let (a, b) = cells(t);
                swap_unrecorded(d, a, b);
            },
            |c, t| {
                let (a, b) = cells(t);
                swap_cells(c, d, a, b);
            },
        );
        return;
    }
    let h = s / 2;
    let q = |i: usize, j: usize| {
        ((x.0 + i * h, x.1 + j * h), (y.0 + j * h, y.1 + i * h))
    };
    ctx.fork_join(
        |c| {
            c.fork_join(
                |c| {
                    let (a, b) = q(0, 0);
                    swap_mirrored(c, d, side, a, b, h)
                },
                |c| {
                    let (a, b) = q(0, 1);
                    swap_mirrored(c, d, side, a, b, h)
                },
            );
        },
        |c| {
            c.fork_join(
                |c| {
                    let (a, b) = q(1, 0);
                    swap_mirrored(c, d, side, a, b, h)
                },
                |c| {
                    let (a, b) = q(1, 1);
                    swap_mirrored(c, d, side, a, b, h)
                },
            );
        },
    );
}

const SWAP_COST: Counters = Counters {
    work: 4,
    span: 4,
    comparisons: 0,
    retries: 0,
};

/// [`swap_cells`] without the events, for bulk-charged loops.
#[inline(always)]
fn swap_unrecorded<T: Traced>(d: SharedSlab<'_, T>, a: usize, b: usize) {
    assert!(a < d.len() && b < d.len());
    // SAFETY: the caller's task owns cells a and b.
    unsafe {
        let (x, y) = (d.peek(a), d.peek(b));
        d.poke(a, y);
        d.poke(b, x);
    }
}

#[inline]
fn swap_cells<T: Traced>(ctx: &mut Ctx<'_>, d: SharedSlab<'_, T>, a: usize, b: usize) {
    let x = d.get(ctx, a);
    let y = d.get(ctx, b);
    d.set(ctx, a, y);
    d.set(ctx, b, x);
}

/// Half-cleaner layers with strides `m/2, …, 1`.
fn network_merge<T, C>(ctx: &mut Ctx<'_>, data: &mut Slab<'_, T>, ascending: bool, after: &C)
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
{
    let m = data.len();
    let mut stride = m / 2;
    while stride >= 1 {
        layer(ctx, data, stride, |_| ascending, after);
        stride /= 2;
    }
}

/// The recursive sort unrolled: the block of size `s` holding index `i` runs
/// in direction `ascending` flipped once for every enclosing right half.
fn network_sort<T, C>(ctx: &mut Ctx<'_>, data: &mut Slab<'_, T>, ascending: bool, after: &C)
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
{
    let n = data.len();
    let mut size = 2;
    while size <= n {
        let mut stride = size / 2;
        while stride >= 1 {
            let mask = (n - 1) & !(size - 1);
            layer(ctx, data, stride, |i| ascending ^ ((i & mask).count_ones() & 1 == 1), after);
            stride /= 2;
        }
        size *= 2;
    }
}

/// One comparator layer at `stride`; `dir(i)` gives the direction of the
/// comparator whose lower slot is `i`.
fn layer<T, C, D>(ctx: &mut Ctx<'_>, data: &mut Slab<'_, T>, stride: usize, dir: D, after: &C)
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
    D: Fn(usize) -> bool + Sync,
{
    let half = data.len() / 2;
    // SAFETY: comparator t touches slots i and i + stride, distinct for every t.
    let d = unsafe { data.shared() };
    let low = stride - 1;
    ctx.parallel_for_fixed(
        half,
        COMPARATOR_COST,
        |t| {
            let i = ((t & !low) << 1) | (t & low);
            let j = i + stride;
            assert!(j < d.len());
            // SAFETY: as above; j < len checked.
            unsafe {
                let (a, b) = (d.peek(i), d.peek(j));
                let swap = if dir(i) { after(&a, &b) } else { after(&b, &a) };
                if swap {
                    d.poke(i, b);
                    d.poke(j, a);
                }
            }
        },
        |c, t| {
            let i = ((t & !low) << 1) | (t & low);
            comparator(c, d, i, i + stride, dir(i), after);
        },
    );
}

fn run_on_vec<T, F>(ctx: &mut Ctx<'_>, mut data: Vec<T>, f: F) -> Result<Vec<T>>
where
    T: Traced,
    F: FnOnce(&mut Ctx<'_>, Slab<'_, T>),
{
    check_len(data.len())?;
    let slab = Slab::new(ctx, &mut data);
    f(ctx, slab);
    Ok(data)
}

/// Sorts by `(key, origin)`, fillers last (first when descending).
pub fn bitonic_sort(ctx: &mut Ctx<'_>, data: Vec<Element>, ascending: bool) -> Result<Vec<Element>> {
    run_on_vec(ctx, data, |ctx, s| sort_slab(ctx, s, ascending, &elem_after))
}

/// Merges a bitonic sequence by `(key, origin)`.
pub fn bitonic_merge(ctx: &mut Ctx<'_>, data: Vec<Element>, ascending: bool) -> Result<Vec<Element>> {
    run_on_vec(ctx, data, |ctx, s| merge_slab(ctx, s, ascending, &elem_after))
}

/// Generic ascending sort of any length: pads with `pad` (which must sort
/// after every real item) to the next power of two, sorts, truncates.
pub fn sort_padded<T, C>(ctx: &mut Ctx<'_>, mut data: Vec<T>, pad: T, after: &C) -> Vec<T>
where
    T: Traced,
    C: Fn(&T, &T) -> bool + Sync,
{
    let n = data.len();
    if n <= 1 {
        return data;
    }
    data.resize(n.next_power_of_two(), pad);
    let slab = Slab::new(ctx, &mut data);
    let id = slab.array();
    sort_slab(ctx, slab, true, after);
    ctx.retire(id);
    data.truncate(n);
    data
}

/// `n·k(k+1)/4` for `n = 2^k`.
pub fn comparator_count(n: usize) -> u64 {
    let k = u64::from(ceil_log2(n));
    n as u64 * k * (k + 1) / 4
}
