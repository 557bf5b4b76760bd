//! Applications built from the oblivious primitives: list ranking, Euler
//! tour and one CRCW PRAM step.

use crate::bitonic::sort_padded;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::exec::{Ctx, Slab};
use crate::oblivious::send_receive;
use crate::permute::b_rpermute;
use crate::primitives::{prefix_sum, segmented_prefix, Seg};

/// Distance of every node to the tail. Nodes are numbered `1..=n` and
/// `succ[i]` is the successor of node `i + 1` (`0` at the tail).
pub fn list_rank(ctx: &mut Ctx<'_>, succ: &[u64]) -> Result<Vec<u64>> {
    list_rank_weighted(ctx, succ, &vec![1; succ.len()])
}

/// Weighted ranks: the sum of the weights of the nodes ahead of each node.
pub fn list_rank_weighted(ctx: &mut Ctx<'_>, succ: &[u64], weights: &[u64]) -> Result<Vec<u64>> {
    let n = succ.len();
    if weights.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} nodes", weights.len())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(&s) = succ.iter().find(|&&s| s > n as u64) {
        return Err(Error::InvalidInput(format!("successor {s} outside 1..={n}")));
    }
    if succ.iter().filter(|&&s| s == 0).count() != 1 {
        return Err(Error::InvalidInput("a list needs exactly one tail".into()));
    }
    // origin tags by prefix sum; key = successor, value = weight
    let tags = prefix_sum(ctx, vec![1u64; n], |a, b| a + b);
    let nodes: Vec<Element> = (0..n).map(|i| Element::real(succ[i], weights[i], tags[i] - 1)).collect();
    let permuted = b_rpermute(ctx, nodes)?;
    let pos = prefix_sum(ctx, vec![1u64; n], |a, b| a + b);
    // each node learns where its successor went
    let sources: Vec<(u64, u64)> = permuted.iter().zip(&pos).map(|(e, &p)| (e.origin + 1, p - 1)).collect();
    let wants: Vec<u64> = permuted.iter().map(|e| e.key).collect();
    let next = send_receive(ctx, &sources, &wants)?;
    let weight: Vec<u64> = permuted.iter().map(|e| e.value).collect();
    let ranks = ctx.public_phase(|ctx| pointer_jump(ctx, &next, &weight));
    let back: Vec<(u64, u64)> = permuted.iter().zip(&ranks).map(|(e, &r)| (e.origin, r)).collect();
    let order: Vec<u64> = (0..n as u64).collect();
    let out = send_receive(ctx, &back, &order)?;
    Ok(out.into_iter().map(|r| r.expect("every node ranked")).collect())
}

/// Synchronous pointer jumping over `next` (positions), accumulating the
/// weight of every node ahead.
fn pointer_jump(ctx: &mut Ctx<'_>, next: &[Option<u64>], weight: &[u64]) -> Vec<u64> {
    let n = next.len();
    let mut val: Vec<u64> = next.iter().map(|s| s.map_or(0, |p| weight[p as usize])).collect();
    let mut nxt: Vec<Option<u64>> = next.to_vec();
    let mut val2 = val.clone();
    let mut nxt2 = nxt.clone();
    let rounds = crate::element::ceil_log2(n.max(2));
    for _ in 0..rounds {
        {
            let vs = Slab::new(ctx, &mut val);
            let ns = Slab::new(ctx, &mut nxt);
            let mut vd = Slab::new(ctx, &mut val2);
            let mut nd = Slab::new(ctx, &mut nxt2);
            // SAFETY: body i writes slot i of the destination arrays only.
            let (v2, n2) = unsafe { (vd.shared(), nd.shared()) };
            ctx.parallel_for(n, |c, i| {
                let (v, s) = (vs.get(c, i), ns.get(c, i));
                match s {
                    Some(j) => {
                        let j = j as usize;
                        let (vj, sj) = (vs.get(c, j), ns.get(c, j));
                        v2.set(c, i, v.wrapping_add(vj));
                        n2.set(c, i, sj);
                    }
                    None => {
                        v2.set(c, i, v);
                        n2.set(c, i, None);
                    }
                }
            });
            let ids = [vs.array(), ns.array(), vd.array(), nd.array()];
            for id in ids {
                ctx.retire(id);
            }
        }
        std::mem::swap(&mut val, &mut val2);
        std::mem::swap(&mut nxt, &mut nxt2);
    }
    val
}

/// Sequential pointer walk: the reference for [`list_rank_weighted`].
pub fn list_rank_oracle(succ: &[u64], weights: &[u64]) -> Vec<u64> {
    let n = succ.len();
    let mut pred = vec![None; n];
    for (i, &s) in succ.iter().enumerate() {
        if s > 0 {
            pred[s as usize - 1] = Some(i);
        }
    }
    let mut rank = vec![0u64; n];
    let Some(mut cur) = succ.iter().position(|&s| s == 0) else {
        return rank;
    };
    let mut acc = 0u64;
    loop {
        rank[cur] = acc;
        acc = acc.wrapping_add(weights[cur]);
        match pred[cur] {
            Some(p) => cur = p,
            None => break,
        }
    }
    rank
}

/// A directed tree edge.
pub type Edge = (u64, u64);

fn edge_key((u, v): Edge) -> u64 {
    (u << 32) | v
}

/// Euler tour successor map `τ((x, y)) = Adjsucc(y, x)` over both
/// orientations of every edge of a tree given as undirected edges. The
/// result is listed in `(first endpoint, second endpoint)` order.
pub fn euler_tour(ctx: &mut Ctx<'_>, edges: &[Edge]) -> Result<Vec<(Edge, Edge)>> {
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= 1 << 32 || v >= 1 << 32 || u == v) {
        return Err(Error::InvalidInput(format!("bad tree edge ({u}, {v})")));
    }
    let m = 2 * edges.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let directed: Vec<Element> = edges
        .iter()
        .flat_map(|&(u, v)| [(u, v), (v, u)])
        .enumerate()
        .map(|(i, e)| Element::real(edge_key(e), e.1, i as u64))
        .collect();
    let sorted = sort_padded(ctx, directed, Element::filler(), &crate::bitonic::elem_after);
    // every edge learns the first edge of its adjacency list
    let heads: Vec<Seg> = sorted.iter().map(|e| Seg::new(e.key >> 32, e.value)).collect();
    let heads = segmented_prefix(ctx, heads, |a, _| a);
    // and the next edge in it, wrapping to the head at the end
    let mut adj_next = vec![0u64; m];
    {
        let mut sorted = sorted.clone();
        let mut heads = heads;
        let s = Slab::new(ctx, &mut sorted);
        let h = Slab::new(ctx, &mut heads);
        let mut out = Slab::new(ctx, &mut adj_next);
        // SAFETY: body i writes out[i] only.
        let o = unsafe { out.shared() };
        ctx.parallel_for(m, |c, i| {
            let here = s.get(c, i);
            let head = h.get(c, i);
            let after = s.get(c, (i + 1) % m);
            let same = after.key >> 32 == here.key >> 32 && i + 1 < m;
            o.set(c, i, if same { after.value } else { head.value });
        });
    }
    let sources: Vec<(u64, u64)> = sorted.iter().zip(&adj_next).map(|(e, &w)| (e.key, w)).collect();
    let wants: Vec<u64> = sorted.iter().map(|e| edge_key((e.value, e.key >> 32))).collect();
    let got = send_receive(ctx, &sources, &wants)?;
    sorted
        .iter()
        .zip(got)
        .map(|(e, w)| {
            let (x, y) = (e.key >> 32, e.value);
            match w {
                Some(w) => Ok(((x, y), (y, w))),
                None => Err(Error::InvalidInput(format!("edge ({x}, {y}) has no reverse"))),
            }
        })
        .collect()
}

/// Conflict rule for concurrent writes to one address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    /// The lowest processor index wins.
    LowestIndex,
    /// The largest value wins; ties go to the lowest index.
    HighestValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrcwOp {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrcwRequest {
    pub op: CrcwOp,
    pub addr: u64,
    /// Ignored for reads.
    pub value: u64,
}

/// One CRCW step: processor `i` issues `requests[i]`. Returns the memory
/// after all winning writes and, per processor, the value read (`None` for
/// writers). Reads see the memory before the step.
pub fn emulate_crcw_step(
    ctx: &mut Ctx<'_>,
    requests: &[CrcwRequest],
    memory: &[u64],
    priority: Priority,
) -> Result<(Vec<u64>, Vec<Option<u64>>)> {
    let s = memory.len() as u64;
    if let Some(r) = requests.iter().find(|r| r.addr >= s) {
        return Err(Error::AddressOutOfRange {
            addr: r.addr,
            size: memory.len(),
        });
    }
    let cells: Vec<(u64, u64)> = memory.iter().enumerate().map(|(a, &v)| (a as u64, v)).collect();
    let asked: Vec<u64> = requests.iter().map(|r| r.addr).collect();
    let fetched = send_receive(ctx, &cells, &asked)?;
    let reads = requests
        .iter()
        .zip(fetched)
        .map(|(r, v)| (r.op == CrcwOp::Read).then_some(v).flatten())
        .collect();
    // writes sorted by (addr, rank); reads sort to the end as fillers
    let writes: Vec<Element> = requests
        .iter()
        .enumerate()
        .map(|(i, r)| match r.op {
            CrcwOp::Write => Element {
                label: match priority {
                    Priority::LowestIndex => i as u64,
                    Priority::HighestValue => u64::MAX - r.value,
                },
                ..Element::real(r.addr, r.value, i as u64)
            },
            CrcwOp::Read => Element::filler(),
        })
        .collect();
    let by_rank = |a: &Element, b: &Element| {
        let k = |e: &Element| (e.is_filler(), e.key, e.label, e.origin);
        k(a) > k(b)
    };
    let mut sorted = sort_padded(ctx, writes, Element::filler(), &by_rank);
    // losers (and reads) get private keys nobody asks for
    let mut winners = vec![(0u64, 0u64); sorted.len()];
    {
        let st = Slab::new(ctx, &mut sorted);
        let mut w = Slab::new(ctx, &mut winners);
        // SAFETY: body i writes winners[i] only.
        let ws = unsafe { w.shared() };
        ctx.parallel_for(st.len(), |c, i| {
            let e = st.get(c, i);
            let prev = if i > 0 { st.get(c, i - 1) } else { Element::filler() };
            let wins = e.is_real() && !(prev.is_real() && prev.key == e.key);
            ws.set(c, i, if wins { (e.key, e.value) } else { (s + i as u64, 0) });
        });
    }
    let addrs: Vec<u64> = (0..s).collect();
    let landed = send_receive(ctx, &winners, &addrs)?;
    let mut out = memory.to_vec();
    {
        let mut o = Slab::new(ctx, &mut out);
        // SAFETY: body a writes out[a] only.
        let os = unsafe { o.shared() };
        ctx.parallel_for(memory.len(), |c, a| {
            let old = os.get(c, a);
            os.set(c, a, landed[a].unwrap_or(old));
        });
    }
    Ok((out, reads))
}

/// Direct CRCW semantics: the reference for [`emulate_crcw_step`].
pub fn crcw_oracle(requests: &[CrcwRequest], memory: &[u64], priority: Priority) -> (Vec<u64>, Vec<Option<u64>>) {
    let reads = requests
        .iter()
        .map(|r| (r.op == CrcwOp::Read).then(|| memory[r.addr as usize]))
        .collect();
    let mut out = memory.to_vec();
    let mut best: Vec<Option<(usize, u64)>> = vec![None; memory.len()];
    for (i, r) in requests.iter().enumerate().filter(|(_, r)| r.op == CrcwOp::Write) {
        let slot = &mut best[r.addr as usize];
        let better = match (*slot, priority) {
            (None, _) => true,
            (Some(_), Priority::LowestIndex) => false,
            (Some((_, v)), Priority::HighestValue) => r.value > v,
        };
        if better {
            *slot = Some((i, r.value));
        }
    }
    for (a, b) in best.iter().enumerate() {
        if let Some((_, v)) = b {
            out[a] = *v;
        }
    }
    (out, reads)
}

/// Follows `τ` from the first edge; returns the orbit length and whether
/// `τ` is a bijection on the listed edges.
pub fn tour_orbit(tau: &[(Edge, Edge)]) -> (usize, bool) {
    use std::collections::{HashMap, HashSet};
    let map: HashMap<Edge, Edge> = tau.iter().copied().collect();
    let images: HashSet<Edge> = tau.iter().map(|&(_, t)| t).collect();
    let bijective = map.len() == tau.len() && images.len() == tau.len() && images.iter().all(|e| map.contains_key(e));
    let Some(&(start, _)) = tau.first() else {
        return (0, bijective);
    };
    let (mut cur, mut len) = (start, 0);
    loop {
        len += 1;
        match map.get(&cur) {
            Some(&next) if next != start && len <= tau.len() => cur = next,
            _ => break,
        }
    }
    (len, bijective)
}
