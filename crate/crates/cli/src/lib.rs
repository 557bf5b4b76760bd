//! Command implementations behind the `obfj` binary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use obfj::apps::{euler_tour, list_rank, list_rank_oracle, tour_orbit};
use obfj::bitonic::{elem_after, sort_padded};
use obfj::check::{check_oblivious, known_ops, random_list, random_tree, trace_input, CheckReport};
use obfj::codec;
use obfj::instrument::{record_trace, CacheConfig, CostReport, TracerOptions};
use obfj::rsort::{bb_sort, butterfly_sort};
use obfj::{element::strip_fillers, Backend, Ctx, Element, Error as CoreError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const CSV_HEADER: &str = "algo,n,seed,work,span,comparisons,cache_misses,M,B,retries,wall_ns";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Core(CoreError::RetriesExhausted { .. }) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Algo {
    Bitonic,
    Bb,
    Butterfly,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bitonic => "bitonic",
            Algo::Bb => "bb",
            Algo::Butterfly => "butterfly",
        }
    }

    pub fn parse(s: &str) -> CliResult<Algo> {
        match s {
            "bitonic" => Ok(Algo::Bitonic),
            "bb" => Ok(Algo::Bb),
            "butterfly" => Ok(Algo::Butterfly),
            _ => Err(usage(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Bin,
}

/// Sorts with any of the three algorithms. Bitonic pads to a power of two
/// with fillers.
pub fn run_sort(ctx: &mut Ctx<'_>, algo: Algo, input: Vec<Element>) -> CliResult<Vec<Element>> {
    if input.is_empty() {
        return Ok(input);
    }
    Ok(match algo {
        Algo::Bitonic => strip_fillers(sort_padded(ctx, input, Element::filler(), &elem_after)),
        Algo::Bb => bb_sort(ctx, input)?,
        Algo::Butterfly => butterfly_sort(ctx, input)?,
    })
}

/// Pseudorandom keys determined by `(n, seed)`.
pub fn random_input(n: usize, seed: u64) -> Vec<Element> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
    obfj::element::elements_from_keys(&keys)
}

/// `1000`, `2^12` or a comma list of either.
pub fn parse_sizes(s: &str) -> CliResult<Vec<usize>> {
    let parse_one = |t: &str| -> Option<usize> {
        let t = t.trim();
        match t.split_once('^') {
            Some(("2", k)) => k.parse::<u32>().ok().filter(|&k| k < 48).map(|k| 1usize << k),
            Some(_) => None,
            None => t.parse().ok(),
        }
    };
    let sizes: Option<Vec<usize>> = s.split(',').map(parse_one).collect();
    match sizes {
        Some(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => Ok(v),
        _ => Err(usage(format!("invalid size list {s:?}; expected e.g. 2^12,2^14,1000"))),
    }
}

pub fn parse_u64_list(s: &str) -> CliResult<Vec<u64>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| usage(format!("invalid number {t:?} in {s:?}"))))
        .collect()
}

/// Runs `f` on the requested backend. `threads = Some(1)` forces the
/// sequential backend; anything else uses a rayon pool of that size.
pub fn with_backend<R: Send>(threads: Option<usize>, f: impl FnOnce(Backend) -> R + Send) -> CliResult<R> {
    match threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(1) => Ok(f(Backend::Sequential)),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| usage(format!("cannot start {t} threads: {e}")))?;
            Ok(pool.install(|| f(Backend::Parallel)))
        }
        None => Ok(f(Backend::Parallel)),
    }
}

fn read_file(path: &PathBuf) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

fn read_text(path: &PathBuf) -> CliResult<String> {
    String::from_utf8(read_file(path)?).map_err(|_| usage(format!("{}: not valid UTF-8", path.display())))
}

fn write_output(path: Option<&PathBuf>, bytes: &[u8], stdout: &mut dyn std::io::Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => stdout.write_all(bytes).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

#[derive(Clone, Debug, Default)]
pub struct SortArgs {
    pub algo: Option<Algo>,
    pub seed: u64,
    pub n: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub report_json: bool,
    pub verify: bool,
    pub cache: Option<CacheConfig>,
}

pub struct SortOutcome {
    pub output: Vec<Element>,
    pub report: CostReport,
}

fn is_sorted_permutation(input: &[Element], output: &[Element]) -> bool {
    let mut expect: Vec<(u64, u64)> = input.iter().map(|e| (e.key, e.value)).collect();
    expect.sort();
    let got: Vec<(u64, u64)> = output.iter().map(|e| (e.key, e.value)).collect();
    // equal keys may come out with their values in origin order, not value order
    let mut got_sorted = got.clone();
    got_sorted.sort();
    got_sorted == expect && got.windows(2).all(|w| w[0].0 <= w[1].0)
}

pub fn sort_command(args: &SortArgs, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> CliResult<SortOutcome> {
    let algo = args.algo.ok_or_else(|| usage("--algo is required"))?;
    let input = match (&args.input, args.n) {
        (Some(_), Some(_)) => return Err(usage("--n and an input file are mutually exclusive")),
        (None, None) => return Err(usage("give an input file or --n")),
        (None, Some(n)) => random_input(n, args.seed),
        (Some(p), None) => match args.format {
            Format::Bin => codec::decode_binary(&read_file(p)?)?,
            Format::Text => codec::decode_text(&read_text(p)?)?,
        },
    };
    let seed = args.seed;
    let start = Instant::now();
    let (res, counters) = with_backend(args.threads, |backend| {
        let mut ctx = Ctx::new(seed, backend);
        let r = run_sort(&mut ctx, algo, input.clone());
        (r, ctx.counters())
    })?;
    let wall = start.elapsed().as_nanos() as u64;
    let output = res?;
    let mut report = CostReport::from_counters(counters);
    report.wall_nanos = wall;
    if let Some(cfg) = &args.cache {
        report.cache_misses = traced_misses(algo, input.clone(), seed, cfg)?;
    }
    if args.verify && !is_sorted_permutation(&input, &output) {
        return Err(CliError::Verification("output is not a sorted permutation of the input".into()));
    }
    let bytes = match args.format {
        Format::Bin => codec::encode_binary(&output),
        Format::Text => codec::encode_text(&output).into_bytes(),
    };
    write_output(args.output.as_ref(), &bytes, stdout)?;
    if args.report_json {
        let json = serde_json::to_string(&report).expect("report serializes");
        writeln!(stderr, "{json}").map_err(|source| CliError::Io {
            path: "<stderr>".into(),
            source,
        })?;
    }
    Ok(SortOutcome { output, report })
}

fn traced_misses(algo: Algo, input: Vec<Element>, seed: u64, cfg: &CacheConfig) -> CliResult<u64> {
    let opts = TracerOptions {
        digest: false,
        caches: vec![*cfg],
        words_per_element: cfg.words_per_element,
        ..TracerOptions::default()
    };
    let (r, trace, _) = record_trace(seed, opts, |ctx| run_sort(ctx, algo, input))?;
    r?;
    Ok(trace.misses[0])
}

#[derive(Clone, Debug)]
pub struct BenchArgs {
    pub sizes: Vec<usize>,
    pub algos: Vec<Algo>,
    pub seeds: Vec<u64>,
    pub cache: CacheConfig,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchRow {
    pub algo: Algo,
    pub n: usize,
    pub seed: u64,
    pub report: CostReport,
}

impl BenchRow {
    pub fn csv(&self, cache: &CacheConfig) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.algo.name(),
            self.n,
            self.seed,
            r.work,
            r.span,
            r.comparisons,
            r.cache_misses,
            cache.m,
            cache.b,
            r.retries,
            r.wall_nanos
        )
    }
}

/// One row per (algo, n, seed). Costs come from a plain run on the chosen
/// backend; misses from a separate sequential traced run.
pub fn bench_command(args: &BenchArgs, out: &mut dyn std::io::Write) -> CliResult<Vec<BenchRow>> {
    args.cache.validate()?;
    let io = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut rows = Vec::new();
    for &algo in &args.algos {
        for &n in &args.sizes {
            for &seed in &args.seeds {
                let input = random_input(n, seed);
                let start = Instant::now();
                let (res, counters) = with_backend(args.threads, |backend| {
                    let mut ctx = Ctx::new(seed, backend);
                    let r = run_sort(&mut ctx, algo, input.clone());
                    (r, ctx.counters())
                })?;
                let wall = start.elapsed().as_nanos() as u64;
                res?;
                let mut report = CostReport::from_counters(counters);
                report.wall_nanos = wall;
                report.cache_misses = traced_misses(algo, input, seed, &args.cache)?;
                let row = BenchRow { algo, n, seed, report };
                writeln!(out, "{}", row.csv(&args.cache)).map_err(io)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct TraceCheckArgs {
    pub op: String,
    pub sizes: Vec<usize>,
    pub inputs: usize,
    pub seed: u64,
    pub dump: Option<PathBuf>,
}

pub fn trace_check_command(args: &TraceCheckArgs, out: &mut dyn std::io::Write) -> CliResult<CheckReport> {
    if !known_ops().contains(&args.op.as_str()) {
        return Err(usage(format!(
            "unknown operation {:?}; known: {}",
            args.op,
            known_ops().join(", ")
        )));
    }
    if args.inputs < 2 {
        return Err(usage("--inputs must be at least 2"));
    }
    let report = check_oblivious(&args.op, &args.sizes, args.inputs, args.seed)?;
    let mut text = String::new();
    for (s, d) in report.sizes.iter().zip(report.distinct()) {
        let verdict = if s.mismatches.is_empty() { "match" } else { "MISMATCH" };
        let _ = writeln!(text, "{} n={} inputs={} distinct={} {} {}", args.op, s.n, args.inputs, d, s.digests[0], verdict);
        for (a, b) in &s.mismatches {
            let _ = writeln!(text, "  input {a} vs input {b}: {} != {}", s.digests[*a], s.digests[*b]);
        }
    }
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })?;
    if let Some(path) = &args.dump {
        let opts = TracerOptions {
            store_events: true,
            ..TracerOptions::default()
        };
        let trace = trace_input(&args.op, args.sizes[0], args.seed, 0, opts)?;
        let mut buf = Vec::new();
        trace.dump(&mut buf).expect("writing to memory");
        writeln!(buf, "digest {}", trace.digest).expect("writing to memory");
        std::fs::write(path, buf).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    if !report.passed() {
        return Err(CliError::Verification(format!("{} produced input-dependent traces", args.op)));
    }
    Ok(report)
}

#[derive(Clone, Debug, Default)]
pub struct AppArgs {
    pub input: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub verify: bool,
}

fn app_source(args: &AppArgs) -> CliResult<Option<String>> {
    match (&args.input, args.n) {
        (Some(_), Some(_)) => Err(usage("--n and an input file are mutually exclusive")),
        (None, None) => Err(usage("give an input file or --n")),
        (Some(p), None) => Ok(Some(read_text(p)?)),
        (None, Some(_)) => Ok(None),
    }
}

/// Successor list, one entry per line: the 1-based index of the next node,
/// or 0 for the tail. Prints each node's distance to the tail.
pub fn listrank_command(args: &AppArgs, stdout: &mut dyn std::io::Write) -> CliResult<Vec<u64>> {
    let succ = match app_source(args)? {
        Some(text) => codec::decode_text(&text)?.iter().map(|e| e.key).collect(),
        None => random_list(&mut ChaCha8Rng::seed_from_u64(args.seed), args.n.unwrap_or(0)),
    };
    let ranks = list_rank(&mut Ctx::sequential(args.seed), &succ)?;
    if args.verify && ranks != list_rank_oracle(&succ, &vec![1; succ.len()]) {
        return Err(CliError::Verification("ranks disagree with a sequential walk".into()));
    }
    let mut text = String::new();
    for r in &ranks {
        let _ = writeln!(text, "{r}");
    }
    write_output(args.output.as_ref(), text.as_bytes(), stdout)?;
    Ok(ranks)
}

/// Edge list in, one `x y y w` line per directed edge out: the tour
/// continues from `(x, y)` to `(y, w)`.
pub fn euler_command(args: &AppArgs, stdout: &mut dyn std::io::Write) -> CliResult<Vec<((u64, u64), (u64, u64))>> {
    let edges = match app_source(args)? {
        Some(text) => codec::decode_edges(&text)?,
        None => random_tree(&mut ChaCha8Rng::seed_from_u64(args.seed), args.n.unwrap_or(0)),
    };
    let tau = euler_tour(&mut Ctx::sequential(args.seed), &edges)?;
    if args.verify {
        let (len, bijective) = tour_orbit(&tau);
        if !bijective || len != 2 * edges.len() {
            return Err(CliError::Verification(format!(
                "successor map is not a single cycle over all {} directed edges",
                2 * edges.len()
            )));
        }
    }
    let mut text = String::new();
    for ((x, y), (y2, w)) in &tau {
        let _ = writeln!(text, "{x} {y} {y2} {w}");
    }
    write_output(args.output.as_ref(), text.as_bytes(), stdout)?;
    Ok(tau)
}
