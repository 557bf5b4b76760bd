//! Oblivious random bin assignment: the iterative γ-way butterfly
//! ([`meta_orba`]) and its cache-agnostic recursive form ([`rec_orba`]).

use crate::element::{ceil_log2, BinMatrix, Element, PipelineParams};
use crate::error::{Error, Result};
use crate::exec::{coin, Chunks, Ctx, Slab};
use crate::oblivious::bin_place_into;
use crate::primitives::transpose_cells;

const LABEL_STREAM: u64 = 1;
const RETRY_STREAM: u64 = 7;

/// Seed used by retry attempt `attempt` of a run seeded with `seed`.
pub fn attempt_seed(seed: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        seed
    } else {
        coin(seed, RETRY_STREAM, u64::from(attempt))
    }
}

/// Gives every real element a uniform label in `[0, beta)` drawn from
/// `(ctx.seed(), origin)`. Fillers get `u64::MAX`.
pub fn assign_labels(ctx: &mut Ctx<'_>, input: Vec<Element>, beta: usize) -> Result<Vec<Element>> {
    let seed = ctx.seed();
    assign_labels_with(ctx, input, beta, seed, false)
}

/// Labels keyed by `origin`, or by slot index when `positional`.
pub(crate) fn assign_labels_with(
    ctx: &mut Ctx<'_>,
    mut input: Vec<Element>,
    beta: usize,
    seed: u64,
    positional: bool,
) -> Result<Vec<Element>> {
    if !beta.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "beta", value: beta });
    }
    let mask = beta as u64 - 1;
    {
        let mut slab = Slab::new(ctx, &mut input);
        let n = slab.len();
        // SAFETY: body i touches slot i only.
        let s = unsafe { slab.shared() };
        ctx.parallel_for(n, |c, i| {
            let mut e = s.get(c, i);
            e.label = if e.is_real() {
                let id = if positional { i as u64 } else { e.origin };
                coin(seed, LABEL_STREAM, id) & mask
            } else {
                u64::MAX
            };
            s.set(c, i, e);
        });
        let id = slab.array();
        ctx.retire(id);
    }
    Ok(input)
}

/// `width` label bits starting `offset` bits below the top of a
/// `total`-bit label.
#[inline]
fn digit(label: u64, total: u32, offset: u32, width: u32) -> u32 {
    ((label >> (total - offset - width)) & ((1u64 << width) - 1)) as u32
}

fn check_input(input: &[Element], params: &PipelineParams) -> Result<()> {
    params.validate()?;
    if input.len() != params.padded_len() {
        return Err(Error::Shape(format!(
            "ORBA input has {} elements, expected beta*Z/2 = {}",
            input.len(),
            params.padded_len()
        )));
    }
    check_labels(input, params.beta)
}

fn check_labels<'a>(input: impl IntoIterator<Item = &'a Element>, beta: usize) -> Result<()> {
    match input.into_iter().find(|e| e.is_real() && e.label >= beta as u64) {
        Some(e) => Err(Error::InvalidInput(format!(
            "element with origin {} has label {} outside [0, {beta})",
            e.origin, e.label
        ))),
        None => Ok(()),
    }
}

/// Lays `input` out as `input.len() / (z/2)` bins, each half full.
pub fn spread_into_bins(ctx: &mut Ctx<'_>, mut input: Vec<Element>, z: usize) -> Result<BinMatrix> {
    let half = z / 2;
    if half == 0 || !input.len().is_multiple_of(half) {
        return Err(Error::Shape(format!(
            "{} elements do not fill bins of capacity {z} to half",
            input.len()
        )));
    }
    let beta = input.len() / half;
    let mut out = vec![Element::filler(); beta * z];
    {
        let src = Slab::new(ctx, &mut input);
        let mut dst = Slab::new(ctx, &mut out);
        // SAFETY: body i writes dst[i] only.
        let d = unsafe { dst.shared() };
        ctx.parallel_for(beta * z, |c, i| {
            let (b, t) = (i / z, i % z);
            let e = if t < half {
                src.get(c, b * half + t)
            } else {
                Element::filler()
            };
            d.set(c, i, e);
        });
        let ids = (src.array(), dst.array());
        ctx.retire(ids.0);
        ctx.retire(ids.1);
    }
    BinMatrix::new(1, beta, z, out)
}

/// Iterative butterfly. Layer `i` groups bins at stride `σ` (the product of
/// the earlier radices, `γ^i` when every radix is `γ`) and places each group
/// by the next label bits, most significant first. The last layer uses a
/// smaller radix when `log₂β` is not a multiple of `log₂γ`.
///
/// Output bin `b` holds the reals labelled `b` in origin order.
pub fn meta_orba(ctx: &mut Ctx<'_>, input: Vec<Element>, params: &PipelineParams) -> Result<BinMatrix> {
    check_input(&input, params)?;
    let (z, beta) = (params.z, params.beta);
    let total = params.label_bits();
    let step = params.gamma.trailing_zeros();
    let mut bins = spread_into_bins(ctx, input, z)?.into_slots();
    let mut tmp = vec![Element::filler(); beta * z];
    {
        let mut cur = Slab::new(ctx, &mut bins);
        let mut gathered = Slab::new(ctx, &mut tmp);
        let (mut sigma, mut used, mut layer) = (1usize, 0u32, 0usize);
        while used < total {
            let width = step.min(total - used);
            let rho = 1usize << width;
            {
                // gather group j's members into gathered[j*rho*z ..]
                // SAFETY: body i writes gathered[i] only.
                let g = unsafe { gathered.shared() };
                let src = &cur;
                ctx.parallel_for(beta * z, |c, i| {
                    let (bin, t) = (i / z, i % z);
                    let (j, k) = (bin / rho, bin % rho);
                    let base = (j / sigma) * sigma * rho + j % sigma;
                    let v = src.get(c, (base + k * sigma) * z + t);
                    g.set(c, i, v);
                });
            }
            let offset = used;
            let parts = (
                Chunks::new(gathered.reborrow(), rho * z),
                Chunks::new(cur.reborrow(), rho * z),
            );
            ctx.try_for_each_part(parts, |c, j, (src, dst)| {
                let (src, mut dst) = (src.into_inner(), dst.into_inner());
                let group_of = |e: &Element| digit(e.label, total, offset, width);
                bin_place_into(c, &src, &mut dst, rho, z, &group_of).map_err(|e| match e {
                    Error::GroupOverflow { group, .. } => Error::Overflow {
                        layer,
                        bin: j * rho + group,
                    },
                    other => other,
                })
            })?;
            sigma *= rho;
            used += width;
            layer += 1;
        }
        let ids = (cur.array(), gathered.array());
        ctx.retire(ids.0);
        ctx.retire(ids.1);
    }
    BinMatrix::new(1, beta, z, bins)
}

/// Recursive ORBA over a row of `β` bins, routing by label bits
/// `s .. s + log₂β` (of a `params.label_bits()`-bit label).
///
/// `β ≤ γ` is a single bin placement. Otherwise the row is cut into `β₁`
/// partitions of `β₂` bins (`β₁` = √β rounded up to a power of two), each
/// partition is routed on the leading `log₂β₂` bits, the `β₁ × β₂` matrix is
/// transposed and each of the `β₂` rows is routed on the remaining bits.
/// [`Error::Overflow`] reports the bit offset of the failing placement as
/// its layer.
pub fn rec_orba(ctx: &mut Ctx<'_>, bins: BinMatrix, s: u32, params: &PipelineParams) -> Result<BinMatrix> {
    params.validate()?;
    let (z, beta) = (bins.capacity(), bins.bin_count());
    if z != params.z {
        return Err(Error::Shape(format!("bins have capacity {z}, params say {}", params.z)));
    }
    if !beta.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "bin count", value: beta });
    }
    let total = params.label_bits();
    if s + beta.trailing_zeros() > total {
        return Err(Error::Shape(format!(
            "bits {s}..{} exceed the {total}-bit label",
            s + beta.trailing_zeros()
        )));
    }
    check_labels(bins.slots(), 1 << total)?;
    let mut src = bins.into_slots();
    let mut out = vec![Element::filler(); beta * z];
    {
        let a = Slab::new(ctx, &mut src);
        let b = Slab::new(ctx, &mut out);
        let ids = (a.array(), b.array());
        let cfg = RecCfg {
            z,
            gamma: params.gamma,
            total,
        };
        let r = rec(ctx, a, b, beta, s, &cfg);
        ctx.retire(ids.0);
        ctx.retire(ids.1);
        r?;
    }
    BinMatrix::new(1, beta, z, out)
}

struct RecCfg {
    z: usize,
    gamma: usize,
    total: u32,
}

/// Routes the bins of `src` into `dst`; `src` is left as scratch.
fn rec(
    ctx: &mut Ctx<'_>,
    mut src: Slab<'_, Element>,
    mut dst: Slab<'_, Element>,
    beta: usize,
    s: u32,
    cfg: &RecCfg,
) -> Result<()> {
    let z = cfg.z;
    if beta <= cfg.gamma {
        let width = beta.trailing_zeros();
        let total = cfg.total;
        let group_of = |e: &Element| digit(e.label, total, s, width);
        let first = dst.offset() / z;
        return bin_place_into(ctx, &src, &mut dst, beta, z, &group_of).map_err(|e| match e {
            Error::GroupOverflow { group, .. } => Error::Overflow {
                layer: s as usize,
                bin: first + group,
            },
            other => other,
        });
    }
    let lg = beta.trailing_zeros();
    let b1 = 1usize << ceil_log2(1usize << lg.div_ceil(2));
    let b2 = beta / b1;
    let parts = (Chunks::new(src.reborrow(), b2 * z), Chunks::new(dst.reborrow(), b2 * z));
    ctx.try_for_each_part(parts, |c, _, (a, b)| {
        rec(c, a.into_inner(), b.into_inner(), b2, s, cfg)
    })?;
    transpose_cells(ctx, &dst, &mut src, b1, b2, z);
    let next = s + b2.trailing_zeros();
    let parts = (Chunks::new(src.reborrow(), b1 * z), Chunks::new(dst.reborrow(), b1 * z));
    ctx.try_for_each_part(parts, |c, _, (a, b)| {
        rec(c, a.into_inner(), b.into_inner(), b1, next, cfg)
    })
}

/// Labels, spreads and routes `input` (of length `β·Z/2`) with
/// [`rec_orba`], retrying with a fresh seed on overflow.
pub fn orba(ctx: &mut Ctx<'_>, input: Vec<Element>, params: &PipelineParams) -> Result<BinMatrix> {
    params.validate()?;
    let attempts = params.max_retries + 1;
    for attempt in 0..attempts {
        let seed = attempt_seed(ctx.seed(), attempt);
        let labelled = assign_labels_with(ctx, input.clone(), params.beta, seed, false)?;
        check_input(&labelled, params)?;
        let bins = spread_into_bins(ctx, labelled, params.z)?;
        match rec_orba(ctx, bins, 0, params) {
            Ok(out) => return Ok(out),
            Err(Error::Overflow { .. }) => ctx.add_retry(),
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted { attempts })
}
