use std::process::{Command, Output};

use obfj::bitonic::comparator_count;
use obfj::codec;

fn obfj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obfj")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn sort_generated_input_reports_json() {
    let o = obfj(&["sort", "--algo", "bb", "--n", "4096", "--seed", "7", "--report", "json", "--verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let keys: Vec<u64> = String::from_utf8(o.stdout).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(keys.len(), 4096);
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    let report: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    for field in ["work", "span", "comparisons", "cacheMisses", "retries", "wallNanos"] {
        assert!(report.get(field).is_some(), "missing {field}");
    }
    assert_eq!(report["retries"], 0);
}

#[test]
fn singleton_file_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.txt");
    std::fs::write(&input, "42\n").unwrap();
    let o = obfj(&["sort", "--algo", "bitonic", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(o.stdout, b"42\n");
}

#[test]
fn file_sorts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    let text: String = (0..2000u64).map(|i| format!("{}\n", (i * 7919) % 1000)).collect();
    std::fs::write(&input, text).unwrap();
    let run = |out: &str, threads: &str| {
        let path = dir.path().join(out);
        let o = obfj(&[
            "sort", "--algo", "butterfly", "--seed", "7", "--threads", threads, input.to_str().unwrap(), "-o",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(path).unwrap()
    };
    let a = run("a.txt", "1");
    assert_eq!(a, run("b.txt", "1"));
    assert_eq!(a, run("c.txt", "3"));
}

#[test]
fn binary_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    let output = dir.path().join("out.bin");
    let elems: Vec<_> = (0..100u64).map(|i| obfj::Element::real(100 - i, i, i)).collect();
    std::fs::write(&input, codec::encode_binary(&elems)).unwrap();
    let o = obfj(&[
        "sort", "--algo", "bb", "--format", "bin", input.to_str().unwrap(), "-o", output.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let sorted = codec::decode_binary(&std::fs::read(output).unwrap()).unwrap();
    let pairs: Vec<(u64, u64)> = sorted.iter().map(|e| (e.key, e.value)).collect();
    assert_eq!(pairs, (0..100u64).rev().map(|i| (100 - i, i)).collect::<Vec<_>>());
}

#[test]
fn sort_usage_errors() {
    assert_eq!(code(&obfj(&["sort", "--algo", "bb"])), 2);
    assert_eq!(code(&obfj(&["sort", "--algo", "bb", "--n", "3", "some-file"])), 2);
    assert_eq!(code(&obfj(&["sort", "--algo", "quick", "--n", "3"])), 2);
    assert_eq!(code(&obfj(&["sort", "--algo", "bb", "/definitely/not/here"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1\nbanana\n").unwrap();
    let o = obfj(&["sort", "--algo", "bb", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn bench_rows_and_columns() {
    let o = obfj(&[
        "bench", "--sizes", "2^6,2^7,2^8", "--algos", "bitonic,butterfly", "--seeds", "1,2", "--cache-m", "32768",
        "--cache-b", "64",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(obfj_cli::CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(r.len(), 11);
        assert_eq!((r[7], r[8]), ("32768", "64"));
        if r[0] == "bitonic" {
            let n: usize = r[1].parse().unwrap();
            assert_eq!(r[5].parse::<u64>().unwrap(), comparator_count(n));
        }
    }
}

#[test]
fn bench_rejects_bad_sizes() {
    assert_eq!(code(&obfj(&["bench", "--sizes", "2^x"])), 2);
    assert_eq!(code(&obfj(&["bench", "--sizes", "64", "--algos", "heap"])), 2);
    assert_eq!(code(&obfj(&["bench", "--sizes", "64", "--cache-m", "100", "--cache-b", "64"])), 2);
}

#[test]
fn trace_check_verdicts() {
    assert_eq!(code(&obfj(&["trace-check", "--op", "bitonic_sort", "--n", "256", "--inputs", "20"])), 0);
    assert_eq!(code(&obfj(&["trace-check", "--op", "quicksort_control", "--n", "256", "--inputs", "5"])), 1);
    assert_eq!(code(&obfj(&["trace-check", "--op", "bitonic_sort", "--inputs", "1"])), 2);
    assert_eq!(code(&obfj(&["trace-check", "--op", "heapsort"])), 2);
}

#[test]
fn trace_dump_lists_events() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("trace.log");
    let o = obfj(&["trace-check", "--op", "bitonic_sort", "--n", "8", "--inputs", "2", "--dump", dump.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let log = std::fs::read_to_string(dump).unwrap();
    let compares = log.lines().filter(|l| l.starts_with("compare ")).count() as u64;
    assert_eq!(compares, comparator_count(8));
    let last = log.lines().last().unwrap();
    let digest = last.strip_prefix("digest ").unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains(digest));
}

#[test]
fn listrank_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("list.txt");
    // 3 -> 1 -> 4 -> 2
    std::fs::write(&input, "4\n0\n1\n2\n").unwrap();
    let o = obfj(&["listrank", input.to_str().unwrap(), "--verify"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "2\n0\n3\n1\n");
}

#[test]
fn euler_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tree.txt");
    std::fs::write(&input, "1 2\n1 3\n3 4\n").unwrap();
    let o = obfj(&["euler", input.to_str().unwrap(), "--verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 6);
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 2 3\n").unwrap();
    assert_eq!(code(&obfj(&["euler", bad.to_str().unwrap()])), 2);
}
