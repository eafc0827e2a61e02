use std::path::{Path, PathBuf};

use tempfile::TempDir;
use valelim::cli::{run_captured, EXIT_INPUT, EXIT_LIMIT, EXIT_MISMATCH, EXIT_OK};
use valelim::netio::{parse_result, read_network};

const CHAIN: &str = "
variable A { type discrete [ 2 ] { a0, a1 }; }
variable B { type discrete [ 2 ] { b0, b1 }; }
variable C { type discrete [ 2 ] { c0, c1 }; }
probability ( A ) { table 0.6, 0.4; }
probability ( B | A ) { (a0) 0.7, 0.3; (a1) 0.2, 0.8; }
probability ( C | B ) { (b0) 0.5, 0.5; (b1) 0.9, 0.1; }
";

fn chain_file(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("chain.bif");
    std::fs::write(&path, CHAIN).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn posterior(line: &str) -> Vec<f64> {
    parse_result(line)["posterior"].split(',').map(|x| x.parse().unwrap()).collect()
}

#[test]
fn query_every_engine_on_the_chain() {
    let dir = TempDir::new().unwrap();
    let net = chain_file(&dir);
    for engine in ["gen-and-sum", "prob-bt", "value-elim", "variable-elim", "brute-force"] {
        for order in ["min-fill", "dynamic", "id"] {
            let (code, out, err) = run_captured(&[
                "query", "--net", s(&net), "--evidence", "A=a0", "--query", "C", "--engine", engine, "--order", order,
            ]);
            assert_eq!(code, EXIT_OK, "{err}");
            let fields = parse_result(&out);
            assert_eq!(fields["engine"], engine);
            assert_eq!(fields["query"], "C");
            let p = posterior(&out);
            assert!((p[0] - 0.62).abs() < 1e-12 && (p[1] - 0.38).abs() < 1e-12, "{engine}: {p:?}");
        }
    }
}

#[test]
fn order_file_is_read_by_name() {
    let dir = TempDir::new().unwrap();
    let net = chain_file(&dir);
    let order = dir.path().join("order.txt");
    std::fs::write(&order, "B\nA\n").unwrap();
    let (code, out, err) = run_captured(&["query", "--net", s(&net), "--query", "C", "--order", s(&order)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(parse_result(&out)["ordering"], "file");
    let p = posterior(&out);
    assert!((p[0] - (0.5 * 0.5 + 0.5 * 0.9)).abs() < 1e-12);
}

#[test]
fn zero_evidence_is_reported_not_an_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("det.bif");
    std::fs::write(&path, CHAIN.replace("(b1) 0.9, 0.1", "(b1) 0.0, 1.0")).unwrap();
    let (code, out, _) = run_captured(&["query", "--net", s(&path), "--evidence", "B=b1,C=c0", "--query", "A"]);
    assert_eq!(code, EXIT_OK);
    let fields = parse_result(&out);
    assert_eq!(fields["zero_evidence"], "1");
    assert_eq!(fields["posterior"], "evidence_probability_zero");
}

#[test]
fn bad_names_fail_before_computing() {
    let dir = TempDir::new().unwrap();
    let net = chain_file(&dir);
    let (code, out, err) = run_captured(&["query", "--net", s(&net), "--evidence", "A=a7", "--query", "C"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(out.is_empty());
    assert!(err.contains("'A'") && err.contains("a0, a1"), "{err}");

    let (code, _, err) = run_captured(&["query", "--net", s(&net), "--query", "Z"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("'Z'") && err.contains("A, B, C"), "{err}");

    let (code, _, err) = run_captured(&["query", "--net", s(&net), "--evidence", "A", "--query", "C"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("Name=Label"), "{err}");
}

#[test]
fn missing_and_malformed_files_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.bif");
    let (code, _, err) = run_captured(&["query", "--net", s(&missing), "--query", "C"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("nope.bif"), "{err}");

    let broken = dir.path().join("broken.bif");
    std::fs::write(&broken, "variable A { type discrete [ 2 ] { a0, a1 }; }\nprobability ( A ) { table 0.6, 0.3; }").unwrap();
    let (code, _, err) = run_captured(&["query", "--net", s(&broken), "--query", "A"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("A"), "{err}");

    let (code, _, _) = run_captured(&["query", "--query", "A"]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn brute_force_refuses_large_networks() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("big.bif");
    let (code, _, err) = run_captured(&["gen", "--out", s(&path), "--vars", "25", "--max-domain", "2", "--seed", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, _, err) = run_captured(&["query", "--net", s(&path), "--query", "X24", "--engine", "brute-force"]);
    assert_eq!(code, EXIT_LIMIT);
    assert!(err.contains("budget"), "{err}");
    let (code, _, _) = run_captured(&["query", "--net", s(&path), "--query", "X24"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn timeouts_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("wide.bif");
    run_captured(&["gen", "--out", s(&path), "--vars", "40", "--max-parents", "1", "--max-domain", "2", "--zero-fraction", "0"]);
    let (code, _, err) = run_captured(&[
        "query", "--net", s(&path), "--query", "X0", "--engine", "prob-bt", "--no-barren", "--timeout", "0.001",
    ]);
    assert_eq!(code, EXIT_LIMIT);
    assert!(err.contains("timed out"), "{err}");
}

#[test]
fn gen_writes_readable_networks() {
    let dir = TempDir::new().unwrap();
    for name in ["g.bif", "g.json"] {
        let path = dir.path().join(name);
        let (code, out, _) = run_captured(&["gen", "--out", s(&path), "--vars", "7", "--seed", "5"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("7 variables"));
        assert_eq!(read_network(&path).unwrap(), valelim::netio::random_network(7, 3, 3, 0.25, 5));
    }
}

#[test]
fn verify_passes_and_zero_trials_is_vacuous() {
    let (code, out, _) = run_captured(&["verify", "--trials", "200", "--vars", "10", "--seed", "7"]);
    assert_eq!(code, EXIT_OK, "{out}");
    let max: f64 = out
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("max_disagreement="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(max <= 1e-9);

    let (code, out, _) = run_captured(&["verify", "--trials", "0"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("trials=0"));
}

#[test]
fn corrupted_verify_fails_with_a_reproduction() {
    let (code, out, _) = run_captured(&["verify", "--trials", "3", "--vars", "6", "--seed", "41", "--corrupt"]);
    assert_eq!(code, EXIT_MISMATCH);
    assert!(out.contains("FAIL seed=41"), "{out}");
    let repro = out.lines().find_map(|l| l.strip_prefix("reproduce: valelim ")).unwrap();
    let args: Vec<&str> = repro.split_whitespace().collect();
    let (code, again, _) = run_captured(&args);
    assert_eq!(code, EXIT_MISMATCH);
    assert!(again.contains("FAIL seed=41"));
}

#[test]
fn outputs_are_deterministic_apart_from_wall_time() {
    let strip = |text: String| -> Vec<String> {
        text.lines()
            .map(|l| l.split('\t').filter(|kv| !kv.starts_with("wall_ms=")).collect::<Vec<_>>().join("\t"))
            .collect()
    };
    let args = ["bench", "--family", "random", "--sizes", "6,8", "--trials", "4", "--engines", "value-elim,prob-bt", "--seed", "3"];
    let (c1, o1, _) = run_captured(&args);
    let (c2, o2, _) = run_captured(&args);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(strip(o1), strip(o2));
}

#[test]
fn bench_summarizes_disjoint_chains() {
    let (code, out, _) = run_captured(&[
        "bench", "--family", "disjoint-chains", "--sizes", "10,20,40", "--engines", "value-elim", "--no-barren",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().filter(|l| l.starts_with("instance=")).count(), 3);
    let ratios: Vec<f64> = out
        .lines()
        .filter_map(|l| l.split_whitespace().find_map(|kv| kv.strip_prefix("nodes_ratio=")))
        .map(|r| r.parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios.iter().all(|&r| r <= 2.5), "{ratios:?}");
}

#[test]
fn bench_records_limit_failures_and_continues() {
    let (code, out, _) = run_captured(&[
        "bench", "--family", "single-chain", "--sizes", "30,100", "--engines", "brute-force,value-elim",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("summary engine=brute-force size=30 runs=1 failed=1"), "{out}");
    assert!(out.contains("summary engine=value-elim size=100 runs=1 failed=0"), "{out}");
}
