//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. `ACCEPTANCE_ONLY=1,5` restricts the run.

use std::collections::{BTreeSet, HashMap};
use std::process::Command;
use std::time::Instant;

use obfj::apps::{
    crcw_oracle, emulate_crcw_step, euler_tour, list_rank, list_rank_oracle, tour_orbit, CrcwOp, CrcwRequest,
    Priority,
};
use obfj::bitonic::{bitonic_sort, comparator_count};
use obfj::check::{check_oblivious, random_list, random_tree};
use obfj::element::{elements_from_keys, pad_to_shape, PipelineParams};
use obfj::instrument::{record_trace, CacheConfig, TracerOptions};
use obfj::orba::{assign_labels, meta_orba, rec_orba, spread_into_bins};
use obfj::permute::b_rpermute;
use obfj::rsort::bb_sort;
use obfj::{BinMatrix, Ctx, Error};
use obfj_cli::{run_sort, Algo};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn progress(msg: &str) {
    eprintln!("    .. {msg}");
}

/// max / min − 1 over a series of fitted constants.
fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let min = xs.iter().cloned().fold(f64::MAX, f64::min);
    max / min - 1.0
}

fn fmt_series(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn adversarial(n: usize) -> Vec<Vec<u64>> {
    let n64 = n as u64;
    let mut one_swap: Vec<u64> = (0..n64).collect();
    one_swap.swap(0, n - 1);
    vec![
        (0..n64).collect(),
        (0..n64).rev().collect(),
        vec![7; n],
        (0..n64).map(|i| i % 2).collect(),
        (0..n64).map(|i| i.min(n64 - 1 - i)).collect(),
        (0..n64).map(|i| i % 16).collect(),
        one_swap,
        (0..n64).map(|i| if i % 3 == 0 { u64::MAX } else { 0 }).collect(),
        (0..n64).map(|i| (n64 - i) / 8 * 8 + i % 8).collect(),
        (0..n64).map(|i| if i < n64 / 2 { u64::MAX - i } else { i }).collect(),
    ]
}

fn random_keys(n: usize, k: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 1_000_003 + k);
    if k % 2 == 0 {
        (0..n).map(|_| rng.gen()).collect()
    } else {
        (0..n).map(|_| rng.gen_range(0..(n as u64 / 4).max(2))).collect()
    }
}

fn matches_reference(algo: Algo, keys: &[u64], seed: u64) -> bool {
    let input = elements_from_keys(keys);
    let mut want: Vec<(u64, u64)> = input.iter().map(|e| (e.key, e.origin)).collect();
    want.sort();
    match run_sort(&mut Ctx::sequential(seed), algo, input) {
        Ok(out) => out.iter().map(|e| (e.key, e.origin)).collect::<Vec<_>>() == want,
        Err(_) => false,
    }
}

fn criterion_1() -> Verdict {
    let budget = 600.0;
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut per_size = Vec::new();
    for k in (6..=16).step_by(2) {
        let n = 1usize << k;
        let t = Instant::now();
        for algo in [Algo::Bitonic, Algo::Bb, Algo::Butterfly] {
            let adv = adversarial(n);
            let bad: Vec<String> = (0..1010u64)
                .into_par_iter()
                .filter_map(|i| {
                    let keys = if i < 1000 { random_keys(n, i) } else { adv[(i - 1000) as usize].clone() };
                    (!matches_reference(algo, &keys, i)).then(|| format!("{} n={n} array {i}", algo.name()))
                })
                .collect();
            mismatches.extend(bad);
        }
        per_size.push(format!("2^{k}: {:.1}s", t.elapsed().as_secs_f64()));
        progress(&format!("n = 2^{k} done after {:.1}s", start.elapsed().as_secs_f64()));
    }
    let total = start.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    verdict(
        mismatches.is_empty() && total < budget,
        format!(
            "{} mismatches over 3 algorithms x 6 sizes x 1010 arrays; runtime {total:.0}s (budget {budget:.0}s, {cores} core(s)); per size [{}]{}",
            mismatches.len(),
            per_size.join(", "),
            mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    )
}

fn criterion_2() -> Verdict {
    let ops = [
        "bitonic_sort",
        "bin_place",
        "rec_orba",
        "b_rpermute",
        "send_receive",
        "aggregation",
        "propagation",
        "list_rank",
        "euler_tour",
        "emulate_crcw_step",
    ];
    let sizes = [256, 1000, 4096];
    let mut failed = Vec::new();
    for op in ops {
        match check_oblivious(op, &sizes, 20, 2024) {
            Ok(r) if r.passed() => {}
            Ok(r) => failed.push(format!("{op} distinct={:?}", r.distinct())),
            Err(e) => failed.push(format!("{op}: {e}")),
        }
    }
    let control = check_oblivious("quicksort_control", &sizes, 20, 2024).expect("control runs");
    let control_ok = control.distinct().iter().all(|&d| d >= 2);
    verdict(
        failed.is_empty() && control_ok,
        format!(
            "{}/10 operations give one digest over 20 inputs at n in {sizes:?}{}; quicksort control distinct digests {:?}",
            10 - failed.len(),
            if failed.is_empty() { String::new() } else { format!(" (failing: {})", failed.join("; ")) },
            control.distinct()
        ),
    )
}

fn criterion_3() -> Verdict {
    let mut bad = Vec::new();
    for k in 1..=12u32 {
        let n = 1usize << k;
        let keys: Vec<u64> = (0..n as u64).rev().collect();
        let mut ctx = Ctx::sequential(k as u64);
        bitonic_sort(&mut ctx, elements_from_keys(&keys), true).expect("power of two");
        let want = (n as u64) * u64::from(k * (k + 1)) / 4;
        let got = ctx.counters().comparisons;
        if got != want || comparator_count(n) != want {
            bad.push(format!("k={k}: {got} != {want}"));
        }
    }
    verdict(bad.is_empty(), format!("k = 1..12, mismatches: {}", if bad.is_empty() { "none".into() } else { bad.join(", ") }))
}

fn routed(bins: &BinMatrix) -> Vec<(obfj::Kind, u64, u64, u64, u64)> {
    bins.slots().iter().map(|e| (e.kind, e.key, e.value, e.origin, e.label)).collect()
}

fn criterion_4() -> Verdict {
    let (z, gamma) = (64, 4);
    let mut mismatches = 0;
    let mut overflows = 0;
    for beta in [16usize, 64, 256] {
        let params = PipelineParams::with_shape(z, gamma, beta).expect("valid shape");
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (beta as u64) << 32);
            let keys: Vec<u64> = (0..params.padded_len()).map(|_| rng.gen()).collect();
            let labelled = assign_labels(&mut Ctx::sequential(seed), elements_from_keys(&keys), beta).expect("labels");
            let meta = meta_orba(&mut Ctx::sequential(seed), labelled.clone(), &params);
            let bins = spread_into_bins(&mut Ctx::sequential(seed), labelled, z).expect("spread");
            let rec = rec_orba(&mut Ctx::sequential(seed), bins, 0, &params);
            match (meta, rec) {
                (Ok(m), Ok(r)) if routed(&m) == routed(&r) => {}
                (Err(Error::Overflow { .. }), Err(Error::Overflow { .. })) => overflows += 1,
                _ => mismatches += 1,
            }
        }
    }
    verdict(
        mismatches == 0,
        format!("150 runs (Z={z}, gamma={gamma}, beta in 16/64/256): {mismatches} bin mismatches, {overflows} runs where both overflowed"),
    )
}

const CACHE_M: usize = 1 << 15;
const CACHE_B: usize = 64;

fn traced_misses<R>(seed: u64, f: impl FnOnce(&mut Ctx<'_>) -> R) -> u64 {
    let opts = TracerOptions {
        digest: false,
        caches: vec![CacheConfig::new(CACHE_M, CACHE_B)],
        ..TracerOptions::default()
    };
    let (_, trace, _) = record_trace(seed, opts, f).expect("tracer");
    trace.misses[0]
}

/// Cache parameters in element units: M_e = M / 4, B_e = B / 4.
fn log_m(n: usize) -> f64 {
    (n as f64).ln() / ((CACHE_M / 4) as f64).ln()
}

fn blocks(n: usize) -> f64 {
    n as f64 / (CACHE_B / 4) as f64
}

fn criterion_5() -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;

    let mut c_bitonic = Vec::new();
    for k in 16..=20 {
        let n = 1usize << k;
        let keys = random_keys(n, 0);
        let misses = traced_misses(1, |ctx| bitonic_sort(ctx, elements_from_keys(&keys), true).unwrap());
        let bound = blocks(n) * log_m(n) * ((n / (CACHE_M / 4)) as f64).log2();
        c_bitonic.push(misses as f64 / bound);
        progress(&format!("bitonic 2^{k}: {misses} misses, c = {:.2}", misses as f64 / bound));
    }
    let ok_a = c_bitonic.iter().all(|&c| c <= 8.0) && spread(&c_bitonic) < 0.25;
    pass &= ok_a;
    lines.push(format!(
        "(a) bitonic c = [{}] (limit 8, spread {:.0}%) {}",
        fmt_series(&c_bitonic),
        100.0 * spread(&c_bitonic),
        if ok_a { "ok" } else { "FAIL" }
    ));

    let mut c_orba = Vec::new();
    let mut c_bb = Vec::new();
    for k in 14..=20 {
        let n = 1usize << k;
        let keys = random_keys(n, 0);
        let params = PipelineParams::for_len(n).expect("valid n");
        let mut input = elements_from_keys(&keys);
        pad_to_shape(&mut input, &params).expect("pad");
        let mut setup = Ctx::sequential(3);
        let labelled = assign_labels(&mut setup, input, params.beta).expect("labels");
        let bins = spread_into_bins(&mut setup, labelled, params.z).expect("spread");
        let m_orba = traced_misses(3, |ctx| rec_orba(ctx, bins, 0, &params).is_ok());
        let m_bb = traced_misses(3, |ctx| bb_sort(ctx, elements_from_keys(&keys)).is_ok());
        let bound = blocks(n) * log_m(n);
        c_orba.push(m_orba as f64 / bound);
        c_bb.push(m_bb as f64 / bound);
        progress(&format!("2^{k}: rec_orba c = {:.1}, bb_sort c = {:.1}", m_orba as f64 / bound, m_bb as f64 / bound));
    }
    for (name, cs) in [("rec_orba", &c_orba), ("bb_sort", &c_bb)] {
        let ok = cs.iter().all(|&c| c <= 10.0) && spread(cs) < 0.25;
        pass &= ok;
        lines.push(format!(
            "(b) {name} c = [{}] (limit 10, spread {:.0}%) {}",
            fmt_series(cs),
            100.0 * spread(cs),
            if ok { "ok" } else { "FAIL" }
        ));
    }
    verdict(pass, format!("M = {CACHE_M} words, B = {CACHE_B} words, 4 words/element; {}", lines.join("; ")))
}

fn criterion_6() -> Verdict {
    let mut ratios = Vec::new();
    for k in 8..=16u32 {
        let n = 1usize << k;
        let mut ctx = Ctx::sequential(0);
        bitonic_sort(&mut ctx, elements_from_keys(&random_keys(n, 0)), true).expect("power of two");
        let kf = f64::from(k);
        ratios.push(ctx.counters().span as f64 / (kf * kf * kf.log2()));
    }
    let s = spread(&ratios);
    verdict(s < 0.30, format!("span/(k^2 log2 k) for k = 8..16: [{}], spread {:.1}% (limit 30%)", fmt_series(&ratios), 100.0 * s))
}

fn chi_squared_p(counts: &[u64], total: u64) -> f64 {
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

/// Cells of an n×n position table outside p ± 3σ.
fn position_outliers(table: &[u64], n: usize, runs: u64) -> usize {
    let p = 1.0 / n as f64;
    let mean = runs as f64 * p;
    let sigma = (runs as f64 * p * (1.0 - p)).sqrt();
    table.iter().filter(|&&c| (c as f64 - mean).abs() > 3.0 * sigma).count()
}

fn position_table(n: usize, runs: u64, perm: impl Fn(u64) -> Vec<u64> + Sync) -> Vec<u64> {
    (0..runs)
        .into_par_iter()
        .fold(
            || vec![0u64; n * n],
            |mut t, seed| {
                for (pos, &elem) in perm(seed).iter().enumerate() {
                    t[elem as usize * n + pos] += 1;
                }
                t
            },
        )
        .reduce(|| vec![0u64; n * n], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
}

fn criterion_7() -> Verdict {
    let runs5 = 120_000u64;
    let input5 = elements_from_keys(&[0, 1, 2, 3, 4]);
    let perms: HashMap<Vec<u64>, u64> = (0..runs5)
        .into_par_iter()
        .fold(HashMap::new, |mut m: HashMap<Vec<u64>, u64>, seed| {
            let out = b_rpermute(&mut Ctx::sequential(seed), input5.clone()).expect("permute");
            *m.entry(out.iter().map(|e| e.key).collect()).or_default() += 1;
            m
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    let mut counts: Vec<u64> = perms.values().copied().collect();
    counts.resize(120, 0);
    let p5 = chi_squared_p(&counts, runs5);
    let ok5 = perms.len() == 120 && p5 >= 1e-4;
    progress(&format!("n = 5: {} permutations seen, p = {p5:.4}", perms.len()));

    let n = 256;
    let runs = 100_000u64;
    let input = elements_from_keys(&(0..n as u64).collect::<Vec<_>>());
    let table = position_table(n, runs, |seed| {
        b_rpermute(&mut Ctx::sequential(seed), input.clone()).expect("permute").iter().map(|e| e.key).collect()
    });
    let outliers = position_outliers(&table, n, runs);
    // same test applied to rand's Fisher-Yates shuffle, for scale
    let control = position_table(n, runs, |seed| {
        let mut v: Vec<u64> = (0..n as u64).collect();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        v
    });
    let control_outliers = position_outliers(&control, n, runs);
    let expected = (n * n) as f64 * 0.0027;
    verdict(
        ok5 && outliers == 0,
        format!(
            "n=5: {} of 120 permutations, chi2 p = {p5:.4} (need >= 1e-4); n=256: {outliers} of {} cells outside 3 sigma (need 0; a uniform shuffler expects about {expected:.0}; Fisher-Yates control gives {control_outliers})",
            perms.len(),
            n * n
        ),
    )
}

fn criterion_8() -> Verdict {
    let n = 1usize << 16;
    let retries: u64 = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut ctx = Ctx::sequential(seed);
            bb_sort(&mut ctx, elements_from_keys(&random_keys(n, seed))).expect("bb_sort");
            ctx.counters().retries
        })
        .sum();
    progress(&format!("bb_sort: {retries} retries"));
    let params = PipelineParams::for_len(n).expect("valid n");
    let overflows = (0..200u64)
        .into_par_iter()
        .filter(|&seed| {
            let mut input = elements_from_keys(&random_keys(n, seed));
            pad_to_shape(&mut input, &params).expect("pad");
            let mut ctx = Ctx::sequential(seed);
            let labelled = assign_labels(&mut ctx, input, params.beta).expect("labels");
            let bins = spread_into_bins(&mut ctx, labelled, params.z).expect("spread");
            matches!(rec_orba(&mut ctx, bins, 0, &params), Err(Error::Overflow { .. }))
        })
        .count();
    verdict(
        retries <= 1 && overflows == 0,
        format!("n = 2^16, 200 seeds: bb_sort retries {retries} (limit 1), rec_orba overflows {overflows} (limit 0)"),
    )
}

fn criterion_9() -> Verdict {
    let lr_bad = (0..500u64)
        .into_par_iter()
        .filter(|&i| {
            let n = if i % 50 == 0 { 1 << 14 } else { 1 + (i as usize * 7919) % (1 << 14) };
            let succ = random_list(&mut ChaCha8Rng::seed_from_u64(i), n);
            list_rank(&mut Ctx::sequential(i), &succ).ok() != Some(list_rank_oracle(&succ, &vec![1; n]))
        })
        .count();
    let et_bad = (0..200u64)
        .into_par_iter()
        .filter(|&i| {
            let n = if i % 50 == 0 { 1 << 12 } else { 2 + (i as usize * 104_729) % ((1 << 12) - 1) };
            let tree = random_tree(&mut ChaCha8Rng::seed_from_u64(i), n);
            match euler_tour(&mut Ctx::sequential(i), &tree) {
                Ok(tau) => tour_orbit(&tau) != (2 * (n - 1), true),
                Err(_) => true,
            }
        })
        .count();
    let crcw_bad = (0..1000u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let s = rng.gen_range(1..=256usize);
            let p = rng.gen_range(1..=512usize);
            let memory: Vec<u64> = (0..s).map(|_| rng.gen_range(0..1000)).collect();
            let requests: Vec<CrcwRequest> = (0..p)
                .map(|_| CrcwRequest {
                    op: if rng.gen() { CrcwOp::Read } else { CrcwOp::Write },
                    addr: rng.gen_range(0..s as u64),
                    value: rng.gen_range(0..1000),
                })
                .collect();
            let prio = if i % 2 == 0 { Priority::LowestIndex } else { Priority::HighestValue };
            emulate_crcw_step(&mut Ctx::sequential(i), &requests, &memory, prio).ok()
                != Some(crcw_oracle(&requests, &memory, prio))
        })
        .count();
    verdict(
        lr_bad + et_bad + crcw_bad == 0,
        format!("list_rank {lr_bad}/500, euler_tour {et_bad}/200, emulate_crcw_step {crcw_bad}/1000 mismatches"),
    )
}

fn obfj(args: &[&str]) -> (bool, Vec<u8>, Vec<u8>) {
    let o = Command::new(env!("CARGO_BIN_EXE_obfj")).args(args).output().expect("binary runs");
    (o.status.success(), o.stdout, o.stderr)
}

fn without_wall(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv).lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a)).collect::<Vec<_>>().join("\n")
}

fn report_without_wall(json: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(json.trim_ascii()).expect("json report");
    v.as_object_mut().expect("object").remove("wallNanos");
    v
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let input = dir.path().join("input.bin");
    let keys = random_keys(30_000, 1);
    std::fs::write(&input, obfj::codec::encode_binary(&elements_from_keys(&keys))).expect("write input");
    let mut problems = Vec::new();
    let mut runs = 0;
    for algo in ["bitonic", "bb", "butterfly"] {
        let mut outputs = Vec::new();
        for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
            let out = dir.path().join(format!("{algo}-{tag}.bin"));
            let (ok, _, err) = obfj(&[
                "sort", "--algo", algo, "--seed", "9", "--format", "bin", "--threads", threads, "--report", "json",
                input.to_str().unwrap(), "-o", out.to_str().unwrap(),
            ]);
            runs += 1;
            if !ok {
                problems.push(format!("sort {algo} failed"));
                continue;
            }
            outputs.push((std::fs::read(&out).expect("output"), report_without_wall(&err)));
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            problems.push(format!("sort {algo} differs between runs"));
        }
    }
    let mut csvs = Vec::new();
    for threads in ["1", "1", "4"] {
        let (ok, out, _) = obfj(&[
            "bench", "--sizes", "2^10,3000,2^13", "--algos", "bitonic,bb,butterfly", "--seeds", "1,2", "--threads", threads,
        ]);
        runs += 1;
        if !ok {
            problems.push("bench failed".into());
        }
        csvs.push(without_wall(&out));
    }
    if csvs.windows(2).any(|w| w[0] != w[1]) {
        problems.push("bench CSV differs between runs".into());
    }
    verdict(
        problems.is_empty(),
        format!(
            "{runs} CLI runs (repeat and --threads 1 vs 4): {}",
            if problems.is_empty() { "byte-identical apart from wall_ns".into() } else { problems.join("; ") }
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "correctness oracle suite", criterion_1),
        (2, "obliviousness suite", criterion_2),
        (3, "exact comparator counts", criterion_3),
        (4, "meta/rec ORBA equivalence", criterion_4),
        (5, "cache-bound fits", criterion_5),
        (6, "span scaling", criterion_6),
        (7, "permutation uniformity", criterion_7),
        (8, "overflow/retry budget", criterion_8),
        (9, "application oracles", criterion_9),
        (10, "reproducibility", criterion_10),
    ];
    let mut failures = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        eprintln!("criterion {id} ({name}) running");
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {}: {name} [{secs:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failures += usize::from(!v.pass);
    }
    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
}
