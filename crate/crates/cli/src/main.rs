use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use obfj::instrument::CacheConfig;
use obfj_cli::*;

#[derive(Parser)]
#[command(name = "obfj", version, about = "Data-oblivious fork-join sorting, permutation and graph tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sort a file of keys, or a generated random array.
    Sort {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sort n pseudorandom keys instead of reading a file.
        #[arg(long)]
        n: Option<usize>,
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the cost report to stderr.
        #[arg(long, value_enum)]
        report: Option<ReportKind>,
        /// Check the output against the input before writing it.
        #[arg(long)]
        verify: bool,
        /// Also count misses in an ideal cache of this many words.
        #[arg(long, requires = "cache_b")]
        cache_m: Option<usize>,
        #[arg(long, requires = "cache_m")]
        cache_b: Option<usize>,
    },
    /// CSV cost sweep over algorithms, sizes and seeds.
    Bench {
        #[arg(long, default_value = "2^12,2^14")]
        sizes: String,
        #[arg(long, default_value = "bitonic,bb,butterfly")]
        algos: String,
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, default_value_t = 32768)]
        cache_m: usize,
        #[arg(long, default_value_t = 64)]
        cache_b: usize,
        #[arg(long, default_value_t = 4)]
        words_per_element: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare trace digests of one operation across random inputs.
    TraceCheck {
        #[arg(long)]
        op: String,
        #[arg(long, default_value = "256")]
        n: String,
        #[arg(long, default_value_t = 20)]
        inputs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the event log of the first input here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Rank a linked list given as successor indices (1-based, 0 = tail).
    Listrank {
        input: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        verify: bool,
    },
    /// Euler-tour successors of a tree given as `u v` edge lines.
    Euler {
        input: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        verify: bool,
    },
}

fn run(cmd: Cmd) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    match cmd {
        Cmd::Sort {
            algo,
            seed,
            n,
            input,
            output,
            format,
            threads,
            report,
            verify,
            cache_m,
            cache_b,
        } => {
            let cache = match (cache_m, cache_b) {
                (Some(m), Some(b)) => {
                    let c = CacheConfig::new(m, b);
                    c.validate()?;
                    Some(c)
                }
                _ => None,
            };
            let args = SortArgs {
                algo: Some(algo),
                seed,
                n,
                input,
                output,
                format,
                threads,
                report_json: report.is_some(),
                verify,
                cache,
            };
            sort_command(&args, &mut stdout, &mut stderr)?;
        }
        Cmd::Bench {
            sizes,
            algos,
            seeds,
            cache_m,
            cache_b,
            words_per_element,
            threads,
        } => {
            let args = BenchArgs {
                sizes: parse_sizes(&sizes)?,
                algos: algos.split(',').map(|a| Algo::parse(a.trim())).collect::<CliResult<_>>()?,
                seeds: parse_u64_list(&seeds)?,
                cache: CacheConfig {
                    m: cache_m,
                    b: cache_b,
                    words_per_element,
                },
                threads,
            };
            bench_command(&args, &mut stdout)?;
        }
        Cmd::TraceCheck {
            op,
            n,
            inputs,
            seed,
            dump,
        } => {
            let args = TraceCheckArgs {
                op,
                sizes: parse_sizes(&n)?,
                inputs,
                seed,
                dump,
            };
            trace_check_command(&args, &mut stdout)?;
        }
        Cmd::Listrank {
            input,
            n,
            seed,
            output,
            verify,
        } => {
            listrank_command(&AppArgs { input, n, seed, output, verify }, &mut stdout)?;
        }
        Cmd::Euler {
            input,
            n,
            seed,
            output,
            verify,
        } => {
            euler_command(&AppArgs { input, n, seed, output, verify }, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obfj: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
