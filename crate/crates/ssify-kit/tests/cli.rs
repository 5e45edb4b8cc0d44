//! End-to-end checks of the command line: exit codes, determinism, and the
//! shape of each command's output.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssify-kit"))
}

fn corpus(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("corpus");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn write_temp(name: &str, text: &str) -> String {
    let mut p = std::env::temp_dir();
    p.push(format!("ssify-kit-test-{name}-{}", std::process::id()));
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_the_corpus() {
    for name in ["diamond.ssir", "taint_echoes.ssir", "loop_sum.ssir"] {
        let out = run(&["validate", &corpus(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
    }
}

#[test]
fn validate_rejects_duplicate_labels_with_exit_1() {
    let path = write_temp(
        "dup",
        "func main {\nentry:\n  jump L\nL:\n  jump M\nL:\n  ret\nM:\n  ret\n}\n",
    );
    let out = run(&["validate", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate label"), "{}", stderr(&out));
}

#[test]
fn validate_rejects_phi_in_single_pred_block() {
    let path = write_temp(
        "phi1",
        "func main {\nentry:\n  v1 = const 1\n  jump L\nL:\n  v2 = phi(entry: v1)\n  ret\n}\n",
    );
    let out = run(&["validate", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("two predecessors"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn ssify_abcd_golden_on_diamond() {
    let out = run(&["ssify", &corpus("diamond.ssir"), "--strategy", "abcd"]);
    assert_eq!(out.status.code(), Some(0));
    let expected = "func main {\nentry:\n  v1 = input\n  (L1: undef, L2: v3) = sigma(v1)\n  branch v1 == 0, L1, L2\nL1:\n  v4 = const 1\n  jump L3\nL2:\n  use v3\n  jump L3\nL3:\n  v5 = phi(L1: v4, L2: v3)\n  use v5\n  ret\n}\n";
    assert_eq!(stdout(&out), expected);
    let report = stderr(&out);
    assert!(report.contains("kind=sigma"), "{report}");
    assert!(report.contains("kind=phi"), "{report}");
    // ccp coincides with abcd here: the only test is an equality.
    let ccp = run(&["ssify", &corpus("diamond.ssir"), "--strategy", "ccp"]);
    assert_eq!(stdout(&ccp), expected);
}

#[test]
fn ssify_bad_strategy_is_exit_2() {
    let out = run(&["ssify", &corpus("diamond.ssir"), "--strategy", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_taint_both_passes_and_reports_sinks() {
    let out = run(&[
        "analyze",
        &corpus("taint_echoes.ssir"),
        "--client",
        "taint",
        "--both",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("sink=entry:1 kind=use var=v1 value=tainted"),
        "{text}"
    );
    assert!(
        text.contains("sink=entry:3 kind=use var=v2 value=clean"),
        "{text}"
    );
    assert!(
        text.contains("sink=merge:0 kind=use var=v4 value=tainted"),
        "{text}"
    );
    assert!(
        text.contains("sink=sanit:1 kind=use var=v5 value=clean"),
        "{text}"
    );
    assert!(text.contains("equivalence=PASS"), "{text}");
}

#[test]
fn analyze_is_deterministic() {
    let a = run(&[
        "analyze",
        &corpus("nested_cond.ssir"),
        "--client",
        "ccp",
        "--both",
    ]);
    let b = run(&[
        "analyze",
        &corpus("nested_cond.ssir"),
        "--client",
        "ccp",
        "--both",
    ]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn analyze_empty_program_has_empty_listing() {
    let path = write_temp("empty", "func main {\nentry:\n  ret\n}\n");
    let out = run(&["analyze", &path, "--client", "constprop", "--sparse"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "func=main\n");
}

#[test]
fn analyze_refuses_broken_ssi_with_exit_3() {
    // A pre-existing dead phi survives the split (actual instructions are
    // never removed) and trips the property checker.
    let path = write_temp(
        "deadphi",
        "func main {\nentry:\n  v1 = const 1\n  branch v1 == 0, A, B\nA:\n  jump C\nB:\n  jump C\nC:\n  w1 = phi(A: v1, B: v1)\n  ret\n}\n",
    );
    let out = run(&["analyze", &path, "--client", "constprop", "--sparse"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("INFO"), "{}", stderr(&out));
}

#[test]
fn dot_exports_the_graph() {
    let out = run(&["dot", &corpus("diamond.ssir")]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("digraph program {"));
    assert_eq!(text.matches(" -> ").count(), 4);
    let annotated = run(&["dot", &corpus("diamond.ssir"), "--client", "constprop"]);
    assert!(
        stdout(&annotated).contains("label=\"v1:NAC\""),
        "{}",
        stdout(&annotated)
    );
}

#[test]
fn verify_growth_reports_counts() {
    let out = run(&["verify", "--suite", "growth"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(
        text.contains("program=growth_mix ccp=1 abcd=3 ssi=5"),
        "{text}"
    );
    assert!(text.contains("suite=growth PASS"), "{text}");
}

#[test]
fn verify_runs_small_suites_with_flags() {
    for suite in ["ssa", "ssi", "semantics", "equivalence", "seg"] {
        let out = run(&["verify", "--suite", suite, "--trials", "4", "--seed", "5"]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", stdout(&out));
        assert!(stdout(&out).contains("PASS"), "{suite}");
    }
}

#[test]
fn verify_seed_env_var_is_honored() {
    let out = bin()
        .args(["verify", "--suite", "roundtrip"])
        .env("SSIFY_SEED", "77")
        .output();
    // roundtrip is not a CLI suite; usage error is the contract.
    let out = out.expect("binary runs");
    assert_eq!(out.status.code(), Some(64));
    let out = bin()
        .args(["verify", "--suite", "ssa", "--trials", "3"])
        .env("SSIFY_SEED", "77")
        .output()
        .expect("binary runs");
    assert!(stdout(&out).contains("seed=77"), "{}", stdout(&out));
}

#[test]
fn print_is_canonical() {
    let path = write_temp(
        "canon",
        "func main {\nentry:\n\n  # comment\n  v   = const 1\n  use v\n  ret\n}\n",
    );
    let out = run(&["print", &path]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "func main {\nentry:\n  v = const 1\n  use v\n  ret\n}\n"
    );
}
