//! Sort-based oblivious building blocks: bin placement, send-receive and
//! the (deliberately revealing) final compaction.

use crate::bitonic::sort_slab;
use crate::element::{BinMatrix, Element, Kind};
use crate::error::{Error, Result};
use crate::exec::{Ctx, Slab, Traced};
use crate::primitives::{scan_in_place, segmented_scan_slab, Seg};

/// Placement order: non-fillers by group, reals before temps, then origin;
/// fillers last.
fn place_after(a: &Element, b: &Element) -> bool {
    let key = |e: &Element| {
        (u128::from(e.is_filler()) << 97)
            | (u128::from(e.group) << 65)
            | (u128::from(e.kind == Kind::Temp) << 64)
            | u128::from(e.origin)
    };
    key(a) > key(b)
}

/// Bin placement of `src` into `beta` bins of capacity `z` written to `dst`.
///
/// `group_of` gives the destination bin of each real element. Every bin of
/// the output holds its group's reals in origin order followed by fillers.
pub(crate) fn bin_place_into<G>(
    ctx: &mut Ctx<'_>,
    src: &Slab<'_, Element>,
    dst: &mut Slab<'_, Element>,
    beta: usize,
    z: usize,
    group_of: &G,
) -> Result<()>
where
    G: Fn(&Element) -> u32 + Sync,
{
    let l = src.len();
    let bz = beta * z;
    assert_eq!(dst.len(), bz);
    let total = (l + bz).next_power_of_two();
    ctx.with_scratch(total, Element::filler(), |ctx, mut w| {
        // 1. copy the input and append z temps per group
        {
            // SAFETY: body i writes w[i] only.
            let ws = unsafe { w.shared() };
            ctx.parallel_for(total, |c, i| {
                let e = if i < l {
                    let mut e = src.get(c, i);
                    if e.is_real() {
                        e.group = group_of(&e);
                    } else {
                        e = Element::filler();
                    }
                    e
                } else if i < l + bz {
                    let t = i - l;
                    Element::temp((t / z) as u32, (t % z) as u64)
                } else {
                    Element::filler()
                };
                ws.set(c, i, e);
            });
        }
        // 2. group the elements, reals first
        sort_slab(ctx, w.reborrow(), true, &place_after);
        // 3-4. offset within the group; anything at offset >= z is excess
        let overflow = ctx.with_scratch(total, Seg::BOTTOM, |ctx, mut seg| {
            {
                // SAFETY: body i writes seg[i] only.
                let ss = unsafe { seg.shared() };
                ctx.parallel_for(total, |c, i| {
                    let e = w.get(c, i);
                    let s = if e.is_filler() {
                        Seg::BOTTOM
                    } else {
                        Seg::new(u64::from(e.group), i as u64)
                    };
                    ss.set(c, i, s);
                });
            }
            segmented_scan_slab(ctx, seg.reborrow(), &|a, _| a, false);
            // SAFETY: body i touches w[i] only.
            let ws = unsafe { w.shared() };
            ctx.map_reduce(
                total,
                None,
                |c, i| {
                    let e = ws.get(c, i);
                    let head = seg.get(c, i);
                    let excess = head.key.is_some() && i as u64 - head.value >= z as u64;
                    let out = if excess && !e.is_real() {
                        Element::filler()
                    } else {
                        e
                    };
                    ws.set(c, i, out);
                    (excess && e.is_real()).then_some(e.group)
                },
                |a: Option<u32>, b| match (a, b) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, None) => x,
                    (None, y) => y,
                },
            )
        });
        if let Some(group) = overflow {
            return Err(Error::GroupOverflow {
                group: group as usize,
                capacity: z,
            });
        }
        // 5. excess temps became fillers; sort them away
        sort_slab(ctx, w.reborrow(), true, &place_after);
        // 6. keep beta*z slots, temps turn into fillers
        // SAFETY: body i writes dst[i] only.
        let ds = unsafe { dst.shared() };
        ctx.parallel_for(bz, |c, i| {
            let e = w.get(c, i);
            ds.set(c, i, if e.is_real() { e } else { Element::filler() });
        });
        Ok(())
    })
}

/// Places every real element into bin `element.group` of a `1 × beta`
/// matrix of capacity `z`.
pub fn bin_place(ctx: &mut Ctx<'_>, mut input: Vec<Element>, beta: usize, z: usize) -> Result<BinMatrix> {
    if beta == 0 || z == 0 {
        return Err(Error::InvalidInput("bin placement needs beta, Z >= 1".into()));
    }
    if let Some(e) = input.iter().find(|e| e.is_real() && e.group as usize >= beta) {
        return Err(Error::InvalidInput(format!(
            "element with origin {} targets group {} of {beta}",
            e.origin, e.group
        )));
    }
    let mut out = vec![Element::filler(); beta * z];
    {
        let src = Slab::new(ctx, &mut input);
        let mut dst = Slab::new(ctx, &mut out);
        bin_place_into(ctx, &src, &mut dst, beta, z, &|e: &Element| e.group)?;
    }
    BinMatrix::new(1, beta, z, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Route {
    key: u64,
    value: u64,
    pos: u64,
    /// 0 source, 1 destination, 2 padding
    role: u8,
    hit: bool,
}

impl Traced for Route {}

impl Route {
    const PAD: Route = Route {
        key: u64::MAX,
        value: u64::MAX,
        pos: u64::MAX,
        role: 2,
        hit: false,
    };
}

/// Delivers to each destination key the value of the source with that key
/// (`None` when no source has it). Source keys must be distinct.
pub fn send_receive(ctx: &mut Ctx<'_>, sources: &[(u64, u64)], dests: &[u64]) -> Result<Vec<Option<u64>>> {
    let (n, m) = (sources.len(), dests.len());
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut src = sources.to_vec();
    let mut dst = dests.to_vec();
    let src = Slab::new(ctx, &mut src);
    let dst = Slab::new(ctx, &mut dst);
    let total = (n + m).next_power_of_two();
    ctx.with_scratch(total, Route::PAD, |ctx, mut w| {
        {
            // SAFETY: body i writes w[i] only.
            let ws = unsafe { w.shared() };
            ctx.parallel_for(total, |c, i| {
                let r = if i < n {
                    let (key, value) = src.get(c, i);
                    Route {
                        key,
                        value,
                        pos: i as u64,
                        role: 0,
                        hit: true,
                    }
                } else if i < n + m {
                    Route {
                        key: dst.get(c, i - n),
                        value: u64::MAX,
                        pos: (i - n) as u64,
                        role: 1,
                        hit: false,
                    }
                } else {
                    Route::PAD
                };
                ws.set(c, i, r);
            });
        }
        let by_key = |a: &Route, b: &Route| {
            let k = |r: &Route| (r.role == 2, r.key, r.role, r.pos);
            k(a) > k(b)
        };
        sort_slab(ctx, w.reborrow(), true, &by_key);
        let dup = ctx.map_reduce(
            total - 1,
            None,
            |c, i| {
                let (a, b) = (w.get(c, i), w.get(c, i + 1));
                (a.role == 0 && b.role == 0 && a.key == b.key).then_some(a.key)
            },
            |a: Option<u64>, b| a.or(b),
        );
        if let Some(k) = dup {
            return Err(Error::DuplicateKey(k));
        }
        // propagate the group head (the source, when present) to its group
        let first = |a: Route, b: Route| {
            let same = a.key == b.key && a.role != 2 && b.role != 2;
            Route {
                value: if same { a.value } else { b.value },
                hit: if same { a.hit } else { b.hit },
                ..b
            }
        };
        scan_in_place(ctx, w.reborrow(), &first);
        let by_dest = |a: &Route, b: &Route| (a.role != 1, a.pos) > (b.role != 1, b.pos);
        sort_slab(ctx, w.reborrow(), true, &by_dest);
        let mut out = vec![None; m];
        {
            let mut os = Slab::new(ctx, &mut out);
            // SAFETY: body i writes out[i] only.
            let o = unsafe { os.shared() };
            ctx.parallel_for(m, |c, i| {
                let r = w.get(c, i);
                o.set(c, i, r.hit.then_some(r.value));
            });
        }
        Ok(out)
    })
}

/// Number of real elements in each bin.
pub fn bin_loads(bins: &BinMatrix) -> Vec<usize> {
    bins.real_loads()
}

/// Concatenates the real elements of `data` in order. The write positions
/// depend on where the reals are, so the whole routine runs as a public
/// phase.
pub(crate) fn compact_slab(ctx: &mut Ctx<'_>, data: &Slab<'_, Element>) -> Vec<Element> {
    ctx.public_phase(|ctx| {
        let n = data.len();
        if n == 0 {
            return Vec::new();
        }
        let mut rank = vec![0u64; n];
        let mut rs = Slab::new(ctx, &mut rank);
        {
            // SAFETY: body i writes rank[i] only.
            let r = unsafe { rs.shared() };
            ctx.parallel_for(n, |c, i| {
                let e = data.get(c, i);
                r.set(c, i, u64::from(e.is_real()));
            });
        }
        scan_in_place(ctx, rs.reborrow(), &|a: u64, b: u64| a + b);
        let count = rs.get(ctx, n - 1) as usize;
        let mut out = vec![Element::filler(); count];
        {
            let mut os = Slab::new(ctx, &mut out);
            // SAFETY: reals have distinct ranks, so writes are disjoint.
            let o = unsafe { os.shared() };
            ctx.parallel_for(n, |c, i| {
                let e = data.get(c, i);
                if e.is_real() {
                    let p = rs.get(c, i) as usize - 1;
                    o.set(c, p, e);
                }
            });
        }
        out
    })
}

/// Removes every filler from the bins, keeping bin order.
pub fn compact_reveal(ctx: &mut Ctx<'_>, bins: BinMatrix) -> Vec<Element> {
    let mut slots = bins.into_slots();
    let s = Slab::new(ctx, &mut slots);
    let id = s.array();
    let out = compact_slab(ctx, &s);
    ctx.retire(id);
    out
}
