//! Acceptance suite: every criterion prints one pass/fail line and asserts.
//!
//! 1. semantics: trace preservation over at least 100 programs, 10 input
//!    vectors and 5 strategies each, zero divergences, under a minute.
//! 2. equivalence: dense and sparse solutions equal on live ranges for all
//!    clients over the same corpus, exactly.
//! 3. ssi-property: SPLIT-DEF, SPLIT-MEET, INFO, LINK and VERSION hold on
//!    every (program, matching client) pair after splitting.
//! 4. ssa-discipline: one definition per version, definitions dominate
//!    uses, no two versions of a base live together.
//! 5. seg: 200 random forward partitioned-variable instances plus the
//!    bundled files, all three bijections.
//! 6. growth: inserted counts ordered ccp <= abcd <= ssi on every
//!    benchmark, strictly on one.
//! 7. examples: the worked taint and null results at exact values.
//! 8. dominance: iterative dominators match the all-paths oracle on 500
//!    random graphs, both directions.
//! 9. roundtrip: parse-print identity on the corpus plus 1000 generated
//!    programs.

use std::time::Instant;

use ssify_kit::verify::*;

fn criterion(n: usize, report: SuiteReport, budget_secs: u64, elapsed: std::time::Duration) {
    let status = if report.passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {n} ({}): {status} [{:.2}s]",
        report.name,
        elapsed.as_secs_f64()
    );
    for line in &report.lines {
        println!("  {line}");
    }
    if let Some(detail) = &report.counterexample {
        println!("  {detail}");
    }
    assert!(
        report.passed,
        "criterion {n} ({}) failed: {:?}",
        report.name, report.counterexample
    );
    assert!(
        elapsed.as_secs() < budget_secs,
        "criterion {n} ({}) exceeded {budget_secs}s: {:?}",
        report.name,
        elapsed
    );
}

fn timed(f: impl FnOnce() -> SuiteReport) -> (SuiteReport, std::time::Duration) {
    let start = Instant::now();
    let report = f();
    (report, start.elapsed())
}

#[test]
fn criterion_1_semantics_preservation() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 100,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_semantics(cfg));
    criterion(1, report, 60, elapsed);
}

#[test]
fn criterion_2_dense_equals_sparse() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 100,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_equivalence(cfg));
    criterion(2, report, 60, elapsed);
}

#[test]
fn criterion_3_ssi_property() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 60,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_ssi(cfg));
    criterion(3, report, 60, elapsed);
}

#[test]
fn criterion_4_ssa_discipline_and_separation() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 100,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_ssa(cfg));
    criterion(4, report, 60, elapsed);
}

#[test]
fn criterion_5_seg_isomorphism() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 200,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_seg(cfg));
    criterion(5, report, 60, elapsed);
}

#[test]
fn criterion_6_growth_ordering() {
    let (report, elapsed) = timed(|| suite_growth(VerifyConfig::default()));
    criterion(6, report, 60, elapsed);
}

#[test]
fn criterion_7_worked_examples() {
    let (report, elapsed) = timed(|| suite_examples(VerifyConfig::default()));
    criterion(7, report, 60, elapsed);
}

#[test]
fn criterion_8_dominance_oracle() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 500,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_dominance(cfg));
    criterion(8, report, 60, elapsed);
}

#[test]
fn criterion_9_round_trip() {
    let cfg = VerifyConfig {
        seed: 0xacce97,
        trials: 1000,
        fuel: 512,
    };
    let (report, elapsed) = timed(|| suite_roundtrip(cfg));
    criterion(9, report, 60, elapsed);
}
