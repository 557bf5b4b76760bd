//! Registry of traceable operations and the digest-equality check.

use crate::apps::{emulate_crcw_step, euler_tour, list_rank, CrcwOp, CrcwRequest, Edge, Priority};
use crate::bitonic::bitonic_sort;
use crate::element::{elements_from_keys, Element, PipelineParams};
use crate::error::{Error, Result};
use crate::exec::{coin, Ctx};
use crate::instrument::{record_trace, Trace, TracerOptions};
use crate::oblivious::{bin_place, send_receive};
use crate::orba::orba;
use crate::permute::permute_bins;
use crate::primitives::{prefix_sum, segmented_prefix, segmented_suffix, Seg};
use crate::rsort::quicksort_control;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Operations whose trace should depend on the input size and seed only.
pub const OBLIVIOUS_OPS: &[&str] = &[
    "bitonic_sort",
    "bin_place",
    "rec_orba",
    "b_rpermute",
    "send_receive",
    "prefix_sum",
    "aggregation",
    "propagation",
    "list_rank",
    "euler_tour",
    "emulate_crcw_step",
];

/// Every name accepted by [`check_oblivious`], including the control.
pub fn known_ops() -> Vec<&'static str> {
    let mut v = OBLIVIOUS_OPS.to_vec();
    v.push("quicksort_control");
    v
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeVerdict {
    pub n: usize,
    pub digests: Vec<String>,
    /// Input indices `(0, j)` whose digest differs from input 0's.
    pub mismatches: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub op: String,
    pub seed: u64,
    pub sizes: Vec<SizeVerdict>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.sizes.iter().all(|s| s.mismatches.is_empty())
    }

    /// Number of distinct digests seen at each size.
    pub fn distinct(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .map(|s| s.digests.iter().collect::<std::collections::BTreeSet<_>>().len())
            .collect()
    }
}

/// Runs `op` on `inputs` distinct random inputs of every size with one
/// fixed seed and compares the trace digests.
pub fn check_oblivious(op: &str, sizes: &[usize], inputs: usize, seed: u64) -> Result<CheckReport> {
    if !known_ops().contains(&op) {
        return Err(Error::InvalidInput(format!("unknown operation {op:?}")));
    }
    if inputs < 2 {
        return Err(Error::InvalidInput("need at least two inputs to compare".into()));
    }
    let mut out = Vec::new();
    for &n in sizes {
        if n == 0 {
            return Err(Error::InvalidInput("sizes must be positive".into()));
        }
        let mut digests = Vec::with_capacity(inputs);
        for k in 0..inputs {
            digests.push(trace_input(op, n, seed, k, TracerOptions::default())?.digest);
        }
        let mismatches = (1..inputs).filter(|&j| digests[j] != digests[0]).map(|j| (0, j)).collect();
        out.push(SizeVerdict { n, digests, mismatches });
    }
    Ok(CheckReport {
        op: op.to_string(),
        seed,
        sizes: out,
    })
}

/// Trace of the `k`-th generated input of size `n`, as used by
/// [`check_oblivious`].
pub fn trace_input(op: &str, n: usize, seed: u64, k: usize, opts: TracerOptions) -> Result<Trace> {
    if !known_ops().contains(&op) {
        return Err(Error::InvalidInput(format!("unknown operation {op:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(coin(seed, 11, (n as u64) << 20 | k as u64));
    let ((), trace, _) = record_trace(seed, opts, |ctx| run_op(ctx, op, n, &mut rng))?;
    Ok(trace)
}

fn random_keys(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.gen()).collect()
}

pub fn random_list(rng: &mut impl Rng, n: usize) -> Vec<u64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut succ = vec![0u64; n];
    for w in order.windows(2) {
        succ[w[0]] = w[1] as u64 + 1;
    }
    succ
}

/// Random labelled tree on vertices `1..=n`.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Vec<Edge> {
    let mut ids: Vec<u64> = (1..=n as u64).collect();
    ids.shuffle(rng);
    (1..n).map(|i| (ids[rng.gen_range(0..i)], ids[i])).collect()
}

fn grouped_segs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Seg> {
    let mut key = 0u64;
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                key += 1;
                return Seg::BOTTOM;
            }
            if rng.gen_bool(0.3) {
                key += 1;
            }
            Seg::new(key, rng.gen())
        })
        .collect()
}

fn run_op(ctx: &mut Ctx<'_>, op: &str, n: usize, rng: &mut ChaCha8Rng) {
    match op {
        "bitonic_sort" => {
            let keys = random_keys(rng, n.next_power_of_two());
            bitonic_sort(ctx, elements_from_keys(&keys), true).expect("power-of-two length");
        }
        "bin_place" => {
            let beta = 8;
            let input: Vec<Element> = (0..n)
                .map(|i| {
                    if rng.gen_bool(0.2) {
                        Element::filler()
                    } else {
                        Element {
                            group: rng.gen_range(0..beta as u32),
                            ..Element::real(rng.gen(), 0, i as u64)
                        }
                    }
                })
                .collect();
            bin_place(ctx, input, beta, n.next_power_of_two()).expect("capacity holds every input");
        }
        "rec_orba" => {
            let params = orba_params(n);
            let mut input = elements_from_keys(&random_keys(rng, n));
            input.resize(params.padded_len(), Element::filler());
            let _ = orba(ctx, input, &params);
        }
        "b_rpermute" => {
            let params = PipelineParams::for_len(n).expect("valid length");
            let _ = permute_bins(ctx, elements_from_keys(&random_keys(rng, n)), &params);
        }
        "send_receive" => {
            let mut keys: Vec<u64> = (0..2 * n as u64).collect();
            keys.shuffle(rng);
            let sources: Vec<(u64, u64)> = keys[..n].iter().map(|&k| (k, rng.gen())).collect();
            let dests: Vec<u64> = (0..n).map(|_| rng.gen_range(0..2 * n as u64)).collect();
            send_receive(ctx, &sources, &dests).expect("distinct source keys");
        }
        "prefix_sum" => {
            let values: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1 << 20)).collect();
            prefix_sum(ctx, values, |a, b| a + b);
        }
        "aggregation" => {
            segmented_suffix(ctx, grouped_segs(rng, n), u64::wrapping_add);
        }
        "propagation" => {
            segmented_prefix(ctx, grouped_segs(rng, n), |a, _| a);
        }
        "list_rank" => {
            list_rank(ctx, &random_list(rng, n)).expect("valid list");
        }
        "euler_tour" => {
            euler_tour(ctx, &random_tree(rng, n.max(2))).expect("valid tree");
        }
        "emulate_crcw_step" => {
            let s = n.max(1);
            let memory: Vec<u64> = (0..s).map(|_| rng.gen()).collect();
            let requests: Vec<CrcwRequest> = (0..n)
                .map(|_| CrcwRequest {
                    op: if rng.gen() { CrcwOp::Read } else { CrcwOp::Write },
                    addr: rng.gen_range(0..s as u64),
                    value: rng.gen(),
                })
                .collect();
            emulate_crcw_step(ctx, &requests, &memory, Priority::LowestIndex).expect("addresses in range");
        }
        "quicksort_control" => {
            quicksort_control(ctx, elements_from_keys(&random_keys(rng, n)));
        }
        _ => unreachable!("checked by check_oblivious"),
    }
}

/// Default ORBA shape for `n` inputs.
pub fn orba_params(n: usize) -> PipelineParams {
    let mut p = PipelineParams::for_len(n).expect("valid length");
    p.n = p.padded_len();
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_op_is_oblivious_at_small_n() {
        for op in OBLIVIOUS_OPS {
            let r = check_oblivious(op, &[64], 4, 3).unwrap();
            assert!(r.passed(), "{op}: {:?}", r.distinct());
        }
    }

    #[test]
    fn control_leaks() {
        let r = check_oblivious("quicksort_control", &[64], 6, 3).unwrap();
        assert!(!r.passed());
        assert!(r.distinct()[0] >= 2);
    }

    #[test]
    fn stored_trace_matches_digest_run() {
        let opts = TracerOptions {
            store_events: true,
            ..TracerOptions::default()
        };
        let t = trace_input("bitonic_sort", 16, 1, 0, opts).unwrap();
        assert!(!t.events.is_empty());
        let r = check_oblivious("bitonic_sort", &[16], 2, 1).unwrap();
        assert_eq!(t.digest, r.sizes[0].digests[0]);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(check_oblivious("nope", &[8], 3, 0).is_err());
        assert!(check_oblivious("bitonic_sort", &[8], 1, 0).is_err());
    }
}
