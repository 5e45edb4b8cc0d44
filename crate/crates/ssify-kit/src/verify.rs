//! Property suites over the generated and bundled corpora: semantics
//! preservation under every splitting strategy, dense/sparse solver
//! agreement, the single-information property, SSA discipline, evaluation
//! graph isomorphism, growth ordering, the worked examples, the dominance
//! oracle and the textual round trip. Each suite reports one pass/fail
//! line plus a reproduction seed on failure.

use std::collections::BTreeMap;

use crate::clients::*;
use crate::corpus;
use crate::dataflow::{
    check_equivalence, extract_sparse_system, solve_dense, solve_sparse, ClientAnalysis,
    SparseResult,
};
use crate::graph::{dominator_tree, oracle, GraphView};
use crate::interp::{fuzz_equivalence, generate_program, GenBounds, Rng};
use crate::ir::*;
use crate::points::Points;
use crate::seg::{seg_isomorphism, PvpAnalysis};
use crate::ssi_check::check_ssi;
use crate::ssify::{check_ssa, ssify, SplitReport};
use crate::strategy::{eval_strategy, StrategyExpr};
use crate::text::{parse, print};

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub seed: u64,
    pub trials: usize,
    pub fuel: u64,
}

impl Default for VerifyConfig {
    fn default() -> VerifyConfig {
        VerifyConfig {
            seed: 0xc0ffee,
            trials: 0,
            fuel: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub lines: Vec<String>,
    pub counterexample: Option<String>,
}

impl SuiteReport {
    fn pass(name: &str, lines: Vec<String>) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            passed: true,
            lines,
            counterexample: None,
        }
    }

    fn fail(name: &str, detail: String) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            passed: false,
            lines: Vec::new(),
            counterexample: Some(detail),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        match &self.counterexample {
            None => out.push_str(&format!("suite={} PASS\n", self.name)),
            Some(detail) => out.push_str(&format!("suite={} FAIL {detail}\n", self.name)),
        }
        out
    }
}

/// The five bundled strategies the semantics suite exercises.
pub const SEMANTICS_STRATEGIES: [&str; 5] = ["ssi", "abcd", "ccp", "uses-up", "defs-uses-down"];

/// Evaluate a strategy expression over every function of a program.
pub fn strategies_for(
    program: &Program,
    expr: &StrategyExpr,
) -> Result<BTreeMap<String, crate::strategy::SplittingStrategy>, StructuralError> {
    let mut map = BTreeMap::new();
    for func in &program.functions {
        let cfg = CfgIndex::build(func)?;
        let points = Points::build(func, &cfg);
        map.insert(func.name.clone(), eval_strategy(expr, func, &cfg, &points));
    }
    Ok(map)
}

pub fn ssify_with(
    program: &Program,
    expr: &StrategyExpr,
) -> Result<(Program, SplitReport), StructuralError> {
    let map = strategies_for(program, expr)?;
    ssify(program, &map)
}

fn generated_corpus(seed: u64, count: usize) -> Vec<(u64, Program)> {
    (0..count as u64)
        .map(|i| {
            (
                seed.wrapping_add(i),
                generate_program(seed.wrapping_add(i), GenBounds::default()),
            )
        })
        .collect()
}

/// Trace equivalence of every program against its split forms, all five
/// strategies, several input vectors each.
pub fn suite_semantics(cfg: VerifyConfig) -> SuiteReport {
    let programs = if cfg.trials > 0 { cfg.trials } else { 100 };
    let inputs_per = 10;
    let mut checked = 0usize;
    for (seed, program) in generated_corpus(cfg.seed, programs) {
        for strategy in SEMANTICS_STRATEGIES {
            let expr = StrategyExpr::parse(strategy).expect("bundled name");
            let (transformed, _) = match ssify_with(&program, &expr) {
                Ok(x) => x,
                Err(e) => {
                    return SuiteReport::fail(
                        "semantics",
                        format!("seed={seed} strategy={strategy} split failed: {e}"),
                    )
                }
            };
            if let Err(e) = validate(&transformed) {
                return SuiteReport::fail(
                    "semantics",
                    format!("seed={seed} strategy={strategy} invalid output: {e}"),
                );
            }
            let report = fuzz_equivalence(&program, &transformed, inputs_per, seed, cfg.fuel);
            checked += report.trials;
            if let Some(d) = report.divergence {
                return SuiteReport::fail(
                    "semantics",
                    format!(
                        "seed={seed} strategy={strategy} inputs={:?}: {}",
                        d.inputs, d.detail
                    ),
                );
            }
        }
    }
    SuiteReport::pass(
        "semantics",
        vec![format!(
            "programs={programs} strategies={} runs={checked} divergences=0",
            SEMANTICS_STRATEGIES.len()
        )],
    )
}

fn equivalence_one<C: ClientAnalysis>(
    program: &Program,
    client: &C,
    tag: &str,
) -> Result<usize, String> {
    let (transformed, _) = ssify_with(program, &client.strategy())
        .map_err(|e| format!("{tag} {} split failed: {e}", client.name()))?;
    let mut checked = 0;
    for func in &transformed.functions {
        let cfg = CfgIndex::build(func).map_err(|e| format!("{tag}: {e}"))?;
        let points = Points::build(func, &cfg);
        let dense = solve_dense(func, &points, client)
            .map_err(|e| format!("{tag} {}: {e}", client.name()))?;
        let sys = extract_sparse_system(func, client);
        let sparse = solve_sparse(func, client, &sys)
            .map_err(|e| format!("{tag} {}: {e}", client.name()))?;
        let report = check_equivalence(func, &points, &dense, &sparse);
        if let Some(d) = report.first_divergence {
            return Err(format!("{tag} {}: {d}", client.name()));
        }
        checked += report.checked;
    }
    Ok(checked)
}

fn equivalence_all(program: &Program, tag: &str) -> Result<usize, String> {
    let mut checked = 0;
    checked += equivalence_one(program, &ConstProp { conditional: false }, tag)?;
    checked += equivalence_one(program, &ConstProp { conditional: true }, tag)?;
    checked += equivalence_one(program, &TaintAnalysis, tag)?;
    checked += equivalence_one(program, &NullAnalysis, tag)?;
    checked += equivalence_one(program, &ClassInference, tag)?;
    Ok(checked)
}

/// Dense and sparse solutions agree exactly on live ranges, all clients,
/// generated plus bundled corpus.
pub fn suite_equivalence(cfg: VerifyConfig) -> SuiteReport {
    let programs = if cfg.trials > 0 { cfg.trials } else { 100 };
    let mut checked = 0usize;
    for (seed, program) in generated_corpus(cfg.seed, programs) {
        match equivalence_all(&program, &format!("seed={seed}")) {
            Ok(c) => checked += c,
            Err(e) => return SuiteReport::fail("equivalence", e),
        }
    }
    for (name, text) in corpus::all() {
        let program = match parse(text) {
            Ok(p) => p,
            Err(e) => return SuiteReport::fail("equivalence", format!("{name}: {e}")),
        };
        match equivalence_all(&program, name) {
            Ok(c) => checked += c,
            Err(e) => return SuiteReport::fail("equivalence", e),
        }
    }
    SuiteReport::pass(
        "equivalence",
        vec![format!(
            "programs={} clients=5 points_checked={checked} divergences=0",
            programs + corpus::all().len()
        )],
    )
}

fn ssi_one<C: ClientAnalysis>(program: &Program, client: &C, tag: &str) -> Result<(), String> {
    let (transformed, _) = ssify_with(program, &client.strategy())
        .map_err(|e| format!("{tag} {}: {e}", client.name()))?;
    for func in &transformed.functions {
        let cfg = CfgIndex::build(func).map_err(|e| format!("{tag}: {e}"))?;
        let points = Points::build(func, &cfg);
        let violations = check_ssi(func, &cfg, &points, client)
            .map_err(|e| format!("{tag} {}: {e}", client.name()))?;
        if let Some(v) = violations.first() {
            return Err(format!("{tag} {}: {v}", client.name()));
        }
    }
    Ok(())
}

/// The single-information property holds on every (program, matching
/// client) pair after splitting.
pub fn suite_ssi(cfg: VerifyConfig) -> SuiteReport {
    let programs = if cfg.trials > 0 { cfg.trials } else { 60 };
    let mut corpus_programs: Vec<(String, Program)> = Vec::new();
    for (seed, program) in generated_corpus(cfg.seed, programs) {
        corpus_programs.push((format!("seed={seed}"), program));
    }
    for (name, text) in corpus::all() {
        match parse(text) {
            Ok(p) => corpus_programs.push((name.to_string(), p)),
            Err(e) => return SuiteReport::fail("ssi", format!("{name}: {e}")),
        }
    }
    for (tag, program) in &corpus_programs {
        let r = ssi_one(program, &ConstProp { conditional: false }, tag)
            .and_then(|_| ssi_one(program, &ConstProp { conditional: true }, tag))
            .and_then(|_| ssi_one(program, &TaintAnalysis, tag))
            .and_then(|_| ssi_one(program, &NullAnalysis, tag))
            .and_then(|_| ssi_one(program, &ClassInference, tag));
        if let Err(e) = r {
            return SuiteReport::fail("ssi", e);
        }
    }
    SuiteReport::pass(
        "ssi",
        vec![format!(
            "programs={} clients=5 violations=0",
            corpus_programs.len()
        )],
    )
}

/// SSA discipline and live range separation after every strategy.
pub fn suite_ssa(cfg: VerifyConfig) -> SuiteReport {
    let programs = if cfg.trials > 0 { cfg.trials } else { 100 };
    for (seed, program) in generated_corpus(cfg.seed, programs) {
        for strategy in SEMANTICS_STRATEGIES {
            let expr = StrategyExpr::parse(strategy).expect("bundled name");
            let (transformed, _) = match ssify_with(&program, &expr) {
                Ok(x) => x,
                Err(e) => {
                    return SuiteReport::fail(
                        "ssa",
                        format!("seed={seed} strategy={strategy}: {e}"),
                    )
                }
            };
            for func in &transformed.functions {
                let cfg_idx = match CfgIndex::build(func) {
                    Ok(c) => c,
                    Err(e) => {
                        return SuiteReport::fail(
                            "ssa",
                            format!("seed={seed} strategy={strategy}: {e}"),
                        )
                    }
                };
                let points = Points::build(func, &cfg_idx);
                let violations = check_ssa(func, &cfg_idx, &points);
                if let Some(v) = violations.first() {
                    return SuiteReport::fail(
                        "ssa",
                        format!("seed={seed} strategy={strategy}: {v}"),
                    );
                }
            }
        }
    }
    SuiteReport::pass(
        "ssa",
        vec![format!(
            "programs={programs} strategies={} violations=0",
            SEMANTICS_STRATEGIES.len()
        )],
    )
}

/// Evaluation graph isomorphism: random forward partitioned-variable
/// instances plus the bundled reaching-uses file.
pub fn suite_seg(cfg: VerifyConfig) -> SuiteReport {
    let trials = if cfg.trials > 0 { cfg.trials } else { 200 };
    let mut rng = Rng::new(cfg.seed ^ 0x5e6);
    let mut checked = 0usize;
    for t in 0..trials as u64 {
        let seed = cfg.seed.wrapping_add(t);
        let program = generate_program(
            seed,
            GenBounds {
                max_blocks: 8,
                max_vars: 4,
                max_instrs: 4,
            },
        );
        let func = &program.functions[0];
        let base = "v";
        // Transfer nodes: the definitions (any real analysis of v transfers
        // there) plus a random sprinkle of other instruction nodes.
        let mut nodes = scan_occurrences(func, base).defs;
        nodes.retain(|n| matches!(n, Node::Inst(_, _)));
        for (b, block) in func.blocks.iter().enumerate() {
            for i in 0..block.body.len() {
                if rng.chance(1, 4) {
                    nodes.insert(Node::Inst(b, i));
                }
            }
        }
        let analysis = PvpAnalysis::Custom {
            name: format!("random-{seed}"),
            nodes,
        };
        match seg_isomorphism(func, base, &analysis) {
            Ok(report) if report.isomorphic() => checked += 1,
            Ok(report) => {
                return SuiteReport::fail(
                    "seg",
                    format!("seed={seed}: {}", report.mismatches.join("; ")),
                )
            }
            Err(e) => return SuiteReport::fail("seg", format!("seed={seed}: {e}")),
        }
    }
    for (name, analysis) in [
        ("reaching_uses", PvpAnalysis::ReachingUses),
        ("reaching_uses", PvpAnalysis::ReachingDefs),
        ("diamond", PvpAnalysis::ReachingDefs),
        ("loop_sum", PvpAnalysis::ReachingUses),
    ] {
        let text = corpus::all().iter().find(|(n, _)| *n == name).unwrap().1;
        let program = parse(text).expect("bundled corpus parses");
        let base = if name == "loop_sum" { "n" } else { "v" };
        match seg_isomorphism(&program.functions[0], base, &analysis) {
            Ok(report) if report.isomorphic() => checked += 1,
            Ok(report) => {
                return SuiteReport::fail(
                    "seg",
                    format!(
                        "{name} ({}): {}",
                        analysis.name(),
                        report.mismatches.join("; ")
                    ),
                )
            }
            Err(e) => return SuiteReport::fail("seg", format!("{name}: {e}")),
        }
    }
    SuiteReport::pass("seg", vec![format!("instances={checked} mismatches=0")])
}

/// Inserted pseudo-instruction counts are ordered ccp ≤ abcd ≤ ssi on every
/// bundled benchmark, strictly somewhere.
pub fn suite_growth(_cfg: VerifyConfig) -> SuiteReport {
    let mut lines = Vec::new();
    let mut strict = false;
    for (name, text) in corpus::all() {
        let program = match parse(text) {
            Ok(p) => p,
            Err(e) => return SuiteReport::fail("growth", format!("{name}: {e}")),
        };
        let mut counts = BTreeMap::new();
        for strategy in ["ccp", "abcd", "ssi"] {
            let expr = StrategyExpr::parse(strategy).expect("bundled name");
            match ssify_with(&program, &expr) {
                Ok((_, report)) => {
                    counts.insert(strategy, report.inserted_count());
                }
                Err(e) => return SuiteReport::fail("growth", format!("{name} {strategy}: {e}")),
            }
        }
        let (ccp, abcd, ssi) = (counts["ccp"], counts["abcd"], counts["ssi"]);
        lines.push(format!("program={name} ccp={ccp} abcd={abcd} ssi={ssi}"));
        if !(ccp <= abcd && abcd <= ssi) {
            return SuiteReport::fail(
                "growth",
                format!("{name}: ordering violated: ccp={ccp} abcd={abcd} ssi={ssi}"),
            );
        }
        if ccp < abcd && abcd < ssi {
            strict = true;
        }
    }
    if !strict {
        return SuiteReport::fail(
            "growth",
            "no bundled program orders the three strategies strictly".to_string(),
        );
    }
    SuiteReport::pass("growth", lines)
}

/// The two worked examples, checked at exact lattice values.
pub fn suite_examples(_cfg: VerifyConfig) -> SuiteReport {
    // Taint: four echo sites — raw input tainted, constant clean, the
    // failed-sanitize merge tainted, the sanitized value clean.
    let program = parse(corpus::TAINT_ECHOES).expect("bundled corpus parses");
    let client = TaintAnalysis;
    let (transformed, _) = match ssify_with(&program, &client.strategy()) {
        Ok(x) => x,
        Err(e) => return SuiteReport::fail("examples", format!("taint_echoes: {e}")),
    };
    let func = &transformed.functions[0];
    let sys = extract_sparse_system(func, &client);
    let sparse = match solve_sparse(func, &client, &sys) {
        Ok(s) => s,
        Err(e) => return SuiteReport::fail("examples", format!("taint_echoes: {e}")),
    };
    let expect = [
        ("v1", Taint::Tainted),
        ("v2", Taint::Clean),
        ("v4", Taint::Tainted),
        ("v5", Taint::Clean),
    ];
    let mut lines = Vec::new();
    for (name, want) in expect {
        let var = Var::versioned("v", name[1..].parse().unwrap());
        match sparse.of(&var) {
            Some(got) if *got == want => {
                lines.push(format!("taint_echoes {name}={got}"));
            }
            other => {
                return SuiteReport::fail(
                    "examples",
                    format!("taint_echoes {name}: expected {want}, got {other:?}"),
                )
            }
        }
    }

    // Null: the second receiver in the call chain is proven, the merge is
    // not.
    let program = parse(corpus::NULL_CHAIN).expect("bundled corpus parses");
    let client = NullAnalysis;
    let (transformed, _) = match ssify_with(&program, &client.strategy()) {
        Ok(x) => x,
        Err(e) => return SuiteReport::fail("examples", format!("null_chain: {e}")),
    };
    let func = &transformed.functions[0];
    let sys = extract_sparse_system(func, &client);
    let sparse = match solve_sparse(func, &client, &sys) {
        Ok(s) => s,
        Err(e) => return SuiteReport::fail("examples", format!("null_chain: {e}")),
    };
    match receiver_value(func, &sparse, "calls", 1) {
        Some((recv, Nullness::NotNull)) => {
            lines.push(format!("null_chain second_receiver={recv}=notnull"));
        }
        other => {
            return SuiteReport::fail(
                "examples",
                format!("null_chain second receiver: expected notnull, got {other:?}"),
            )
        }
    }
    match receiver_value(func, &sparse, "merge", 0) {
        Some((recv, Nullness::PossiblyNull)) => {
            lines.push(format!("null_chain merge_receiver={recv}=possiblynull"));
        }
        other => {
            return SuiteReport::fail(
                "examples",
                format!("null_chain merge receiver: expected possiblynull, got {other:?}"),
            )
        }
    }
    SuiteReport::pass("examples", lines)
}

fn receiver_value(
    func: &Function,
    sparse: &SparseResult<Nullness>,
    block: &str,
    index: usize,
) -> Option<(Var, Nullness)> {
    let b = func.blocks.iter().find(|b| b.label == block)?;
    let inst = b.body.get(index)?;
    let InstKind::Invoke { recv, .. } = &inst.kind else {
        return None;
    };
    let v = recv.as_var()?;
    sparse.of(v).map(|n| (v.clone(), *n))
}

/// Iterative dominators versus the all-paths oracle, both directions.
pub fn suite_dominance(cfg: VerifyConfig) -> SuiteReport {
    let trials = if cfg.trials > 0 { cfg.trials } else { 500 };
    for t in 0..trials as u64 {
        let seed = cfg.seed.wrapping_add(t);
        let program = generate_program(seed, GenBounds::default());
        let func = &program.functions[0];
        let cfg_idx = match CfgIndex::build(func) {
            Ok(c) => c,
            Err(e) => return SuiteReport::fail("dominance", format!("seed={seed}: {e}")),
        };
        let fwd = GraphView::forward(&cfg_idx);
        if dominator_tree(&fwd).idom != oracle::idoms(&fwd) {
            return SuiteReport::fail("dominance", format!("seed={seed}: forward mismatch"));
        }
        let rev = GraphView::reverse_with_virtual_exit(&cfg_idx, func);
        if dominator_tree(&rev).idom != oracle::idoms(&rev) {
            return SuiteReport::fail("dominance", format!("seed={seed}: reverse mismatch"));
        }
    }
    SuiteReport::pass(
        "dominance",
        vec![format!("graphs={trials} directions=2 mismatches=0")],
    )
}

/// Print-parse identity over the bundled and generated corpora.
pub fn suite_roundtrip(cfg: VerifyConfig) -> SuiteReport {
    let trials = if cfg.trials > 0 { cfg.trials } else { 1000 };
    for (name, text) in corpus::all() {
        match parse(text) {
            Ok(program) => {
                let printed = print(&program);
                match parse(&printed) {
                    Ok(again) if again == program => {}
                    _ => {
                        return SuiteReport::fail(
                            "roundtrip",
                            format!("{name} does not round-trip"),
                        )
                    }
                }
            }
            Err(e) => return SuiteReport::fail("roundtrip", format!("{name}: {e}")),
        }
    }
    for t in 0..trials as u64 {
        let seed = cfg.seed.wrapping_add(t);
        let program = generate_program(seed, GenBounds::default());
        let printed = print(&program);
        match parse(&printed) {
            Ok(again) if again == program => {}
            Ok(_) => {
                return SuiteReport::fail("roundtrip", format!("seed={seed}: reparse differs"))
            }
            Err(e) => return SuiteReport::fail("roundtrip", format!("seed={seed}: {e}")),
        }
    }
    SuiteReport::pass(
        "roundtrip",
        vec![format!(
            "programs={} failures=0",
            trials + corpus::all().len()
        )],
    )
}

/// The CLI's named suites.
pub fn run_suite(name: &str, cfg: VerifyConfig) -> Option<SuiteReport> {
    Some(match name {
        "ssa" => suite_ssa(cfg),
        "ssi" => suite_ssi(cfg),
        "semantics" => suite_semantics(cfg),
        "equivalence" => suite_equivalence(cfg),
        "seg" => suite_seg(cfg),
        "growth" => suite_growth(cfg),
        _ => return None,
    })
}
