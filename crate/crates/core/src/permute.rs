//! Butterfly random permutation: ORBA into random bins, a random order
//! inside every bin, then filler removal.

use crate::bitonic::sort_slab;
use crate::element::{pad_to_shape, BinMatrix, Element, PipelineParams};
use crate::error::{Error, Result};
use crate::exec::{coin, Chunks, Ctx, Slab};
use crate::oblivious::compact_reveal;
use crate::orba::{assign_labels_with, attempt_seed, rec_orba, spread_into_bins};

const PERM_STREAM: u64 = 2;

/// Fillers carry label +∞ and sink to the bin tail.
fn label_after(a: &Element, b: &Element) -> bool {
    (a.is_filler(), a.label) > (b.is_filler(), b.label)
}

/// Uniform random permutation of `input` driven by `ctx.seed()`.
pub fn b_rpermute(ctx: &mut Ctx<'_>, input: Vec<Element>) -> Result<Vec<Element>> {
    if input.len() <= 1 {
        return Ok(input);
    }
    let params = PipelineParams::for_len(input.len())?;
    b_rpermute_with(ctx, input, &params)
}

/// [`b_rpermute`] with an explicit shape.
pub fn b_rpermute_with(ctx: &mut Ctx<'_>, input: Vec<Element>, params: &PipelineParams) -> Result<Vec<Element>> {
    let bins = permute_bins(ctx, input, params)?;
    Ok(compact_reveal(ctx, bins))
}

/// The oblivious part of the permutation: the randomly ordered bins before
/// compaction.
pub fn permute_bins(ctx: &mut Ctx<'_>, input: Vec<Element>, params: &PipelineParams) -> Result<BinMatrix> {
    let seed = ctx.seed();
    permute_bins_seeded(ctx, input, params, seed)
}

pub(crate) fn permute_bins_seeded(
    ctx: &mut Ctx<'_>,
    mut input: Vec<Element>,
    params: &PipelineParams,
    seed: u64,
) -> Result<BinMatrix> {
    params.validate()?;
    if input.iter().any(|e| !e.is_real()) {
        return Err(Error::InvalidInput("permutation input must hold real elements only".into()));
    }
    pad_to_shape(&mut input, params)?;
    let attempts = params.max_retries + 1;
    for attempt in 0..attempts {
        let seed = attempt_seed(seed, attempt);
        let labelled = assign_labels_with(ctx, input.clone(), params.beta, seed, true)?;
        let bins = spread_into_bins(ctx, labelled, params.z)?;
        let routed = match rec_orba(ctx, bins, 0, params) {
            Ok(r) => r,
            Err(Error::Overflow { .. }) => {
                ctx.add_retry();
                continue;
            }
            Err(e) => return Err(e),
        };
        return shuffle_bins(ctx, routed, seed, params.max_retries);
    }
    Err(Error::RetriesExhausted { attempts })
}

/// Sorts every bin by fresh 64-bit labels. A bin whose reals share a label
/// is relabelled and sorted again.
fn shuffle_bins(ctx: &mut Ctx<'_>, bins: BinMatrix, seed: u64, max_rounds: u32) -> Result<BinMatrix> {
    let (rows, cols, z) = (bins.rows(), bins.cols(), bins.capacity());
    let mut slots = bins.into_slots();
    {
        let mut all = Slab::new(ctx, &mut slots);
        let id = all.array();
        let parts = Chunks::new(all.reborrow(), z);
        let res = ctx.try_for_each_part(parts, |c, b, bin| {
            let mut bin = bin.into_inner();
            for round in 0..=max_rounds {
                let stream = PERM_STREAM + 16 * u64::from(round);
                {
                    // SAFETY: body t touches slot t only.
                    let s = unsafe { bin.shared() };
                    c.parallel_for(z, |c, t| {
                        let mut e = s.get(c, t);
                        e.label = coin(seed, stream, (b * z + t) as u64);
                        s.set(c, t, e);
                    });
                }
                sort_slab(c, bin.reborrow(), true, &label_after);
                let clash = {
                    let s = &bin;
                    c.map_reduce(
                        z - 1,
                        false,
                        |c, t| {
                            let (x, y) = (s.get(c, t), s.get(c, t + 1));
                            c.tick();
                            x.is_real() && y.is_real() && x.label == y.label
                        },
                        |a, b| a | b,
                    )
                };
                if !clash {
                    return Ok(());
                }
                c.add_retry();
            }
            Err(Error::RetriesExhausted {
                attempts: max_rounds + 1,
            })
        });
        ctx.retire(id);
        res?;
    }
    BinMatrix::new(rows, cols, z, slots)
}
