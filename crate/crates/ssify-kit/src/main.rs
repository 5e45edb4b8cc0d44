//! Batch front door: validate and pretty-print programs, split live ranges
//! under a named strategy, run the bundled analyses dense or sparse, export
//! DOT, and drive the verification suites.
//!
//! Exit codes: 0 ok, 1 parse or validation failure, 2 transform failure,
//! 3 analysis refusal, 4 verification counterexample, 64 usage.

use std::collections::BTreeMap;
use std::process::ExitCode;

use ssify_kit::clients::*;
use ssify_kit::dataflow::{
    check_equivalence, extract_sparse_system, render_dense, render_sparse, solve_dense,
    solve_sparse, ClientAnalysis,
};
use ssify_kit::dot::to_dot;
use ssify_kit::ir::{CfgIndex, Function, InstKind, Program, Var};
use ssify_kit::points::Points;
use ssify_kit::ssi_check::check_ssi;
use ssify_kit::strategy::StrategyExpr;
use ssify_kit::text::{parse, print};
use ssify_kit::verify::{run_suite, ssify_with, VerifyConfig};

const USAGE: &str = "usage: ssify-kit <command> [args]

commands:
  validate <file>                          check structural invariants
  print <file>                             parse and re-emit canonical text
  ssify <file> --strategy <name|expr>      split live ranges (report on stderr)
  analyze <file> --client <name> [--sparse|--dense|--both]
  dot <file> [--client <name>]             GraphViz export, optionally annotated
  verify --suite <ssa|ssi|semantics|equivalence|seg|growth>
         [--seed <n>] [--trials <n>]

clients: constprop | ccp | taint | nullptr | classinf
strategies: ssa | ssi | abcd | ccp | uses-up | defs-uses-down | ... or
            literal atoms joined by +, e.g. defs_down+out_conds_down
env: SSIFY_SEED sets the default seed for verify.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("{message}");
            ExitCode::from(64)
        }
    }
}

struct Flags {
    positional: Vec<String>,
    named: BTreeMap<String, String>,
}

fn parse_flags(args: &[String]) -> Result<Flags, String> {
    let mut positional = Vec::new();
    let mut named = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if let Some(name) = a.strip_prefix("--") {
            match name {
                "sparse" | "dense" | "both" => {
                    named.insert("mode".to_string(), name.to_string());
                }
                "strategy" | "client" | "suite" | "seed" | "trials" | "fuel" => {
                    i += 1;
                    let value = args
                        .get(i)
                        .ok_or_else(|| format!("--{name} needs a value\n\n{USAGE}"))?;
                    named.insert(name.to_string(), value.clone());
                }
                _ => return Err(format!("unknown flag --{name}\n\n{USAGE}")),
            }
        } else {
            positional.push(a.clone());
        }
        i += 1;
    }
    Ok(Flags { positional, named })
}

fn run(args: &[String]) -> Result<ExitCode, String> {
    let Some(command) = args.first() else {
        return Err(USAGE.to_string());
    };
    let flags = parse_flags(&args[1..])?;
    match command.as_str() {
        "validate" => cmd_validate(&flags),
        "print" => cmd_print(&flags),
        "ssify" => cmd_ssify(&flags),
        "analyze" => cmd_analyze(&flags),
        "dot" => cmd_dot(&flags),
        "verify" => cmd_verify(&flags),
        other => Err(format!("unknown command `{other}`\n\n{USAGE}")),
    }
}

fn load(flags: &Flags) -> Result<Result<Program, String>, String> {
    let path = flags
        .positional
        .first()
        .ok_or_else(|| format!("missing input file\n\n{USAGE}"))?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    Ok(parse(&text).map_err(|e| format!("{path}:{e}")))
}

fn cmd_validate(flags: &Flags) -> Result<ExitCode, String> {
    match load(flags)? {
        Ok(_) => {
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }
        Err(diagnostic) => {
            eprintln!("{diagnostic}");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_print(flags: &Flags) -> Result<ExitCode, String> {
    match load(flags)? {
        Ok(program) => {
            print!("{}", print(&program));
            Ok(ExitCode::SUCCESS)
        }
        Err(diagnostic) => {
            eprintln!("{diagnostic}");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_ssify(flags: &Flags) -> Result<ExitCode, String> {
    let program = match load(flags)? {
        Ok(p) => p,
        Err(diagnostic) => {
            eprintln!("{diagnostic}");
            return Ok(ExitCode::from(1));
        }
    };
    let spec = flags
        .named
        .get("strategy")
        .ok_or_else(|| format!("ssify needs --strategy\n\n{USAGE}"))?;
    let expr = match StrategyExpr::parse(spec) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    };
    match ssify_with(&program, &expr) {
        Ok((transformed, report)) => {
            print!("{}", print(&transformed));
            eprint!("{}", report.render());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_analyze(flags: &Flags) -> Result<ExitCode, String> {
    let program = match load(flags)? {
        Ok(p) => p,
        Err(diagnostic) => {
            eprintln!("{diagnostic}");
            return Ok(ExitCode::from(1));
        }
    };
    let client = flags
        .named
        .get("client")
        .ok_or_else(|| format!("analyze needs --client\n\n{USAGE}"))?;
    let mode = flags
        .named
        .get("mode")
        .map(|s| s.as_str())
        .unwrap_or("sparse");
    dispatch_client(client, &program, mode)
}

fn dispatch_client(name: &str, program: &Program, mode: &str) -> Result<ExitCode, String> {
    match name {
        "constprop" => analyze_with(&ConstProp { conditional: false }, program, mode),
        "ccp" => analyze_with(&ConstProp { conditional: true }, program, mode),
        "taint" => analyze_with(&TaintAnalysis, program, mode),
        "nullptr" => analyze_with(&NullAnalysis, program, mode),
        "classinf" => analyze_with(&ClassInference, program, mode),
        other => Err(format!("unknown client `{other}`\n\n{USAGE}")),
    }
}

fn analyze_with<C: ClientAnalysis>(
    client: &C,
    program: &Program,
    mode: &str,
) -> Result<ExitCode, String> {
    let (transformed, _) = match ssify_with(program, &client.strategy()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    };
    for func in &transformed.functions {
        println!("func={}", func.name);
        let cfg = CfgIndex::build(func).map_err(|e| e.to_string())?;
        let points = Points::build(func, &cfg);
        let dense = if mode != "sparse" {
            match solve_dense(func, &points, client) {
                Ok(d) => Some(d),
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(3));
                }
            }
        } else {
            None
        };
        let sparse = if mode != "dense" {
            match check_ssi(func, &cfg, &points, client) {
                Ok(violations) => {
                    if let Some(v) = violations.first() {
                        eprintln!("refusing sparse analysis: {v}");
                        return Ok(ExitCode::from(3));
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(3));
                }
            }
            let sys = extract_sparse_system(func, client);
            match solve_sparse(func, client, &sys) {
                Ok(s) => Some(s),
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(3));
                }
            }
        } else {
            None
        };
        if let Some(dense) = &dense {
            print!("{}", render_dense(func, &points, dense));
        }
        if let Some(sparse) = &sparse {
            print!("{}", render_sparse(sparse));
            print_sinks(func, sparse);
        }
        if let (Some(dense), Some(sparse)) = (&dense, &sparse) {
            let report = check_equivalence(func, &points, dense, sparse);
            match report.first_divergence {
                None => println!("equivalence=PASS checked={}", report.checked),
                Some(d) => {
                    println!("equivalence=FAIL {d}");
                    return Ok(ExitCode::from(4));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_sinks<E: std::fmt::Display>(
    func: &Function,
    sparse: &ssify_kit::dataflow::SparseResult<E>,
) {
    for block in &func.blocks {
        for (j, inst) in block.body.iter().enumerate() {
            let (kind, arg) = match &inst.kind {
                InstKind::Use { arg } => ("use", arg),
                InstKind::Invoke { recv, .. } => ("invoke", recv),
                _ => continue,
            };
            if let Some(v) = arg.as_var() {
                if let Some(value) = sparse.of(v) {
                    println!("sink={}:{j} kind={kind} var={v} value={value}", block.label);
                }
            }
        }
    }
}

fn cmd_dot(flags: &Flags) -> Result<ExitCode, String> {
    let program = match load(flags)? {
        Ok(p) => p,
        Err(diagnostic) => {
            eprintln!("{diagnostic}");
            return Ok(ExitCode::from(1));
        }
    };
    match flags.named.get("client") {
        None => {
            print!("{}", to_dot(&program, None));
            Ok(ExitCode::SUCCESS)
        }
        Some(client) => dispatch_dot(client, &program),
    }
}

fn dispatch_dot(name: &str, program: &Program) -> Result<ExitCode, String> {
    match name {
        "constprop" => dot_with(&ConstProp { conditional: false }, program),
        "ccp" => dot_with(&ConstProp { conditional: true }, program),
        "taint" => dot_with(&TaintAnalysis, program),
        "nullptr" => dot_with(&NullAnalysis, program),
        "classinf" => dot_with(&ClassInference, program),
        other => Err(format!("unknown client `{other}`\n\n{USAGE}")),
    }
}

fn dot_with<C: ClientAnalysis>(client: &C, program: &Program) -> Result<ExitCode, String> {
    let (transformed, _) = match ssify_with(program, &client.strategy()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    };
    let mut annotations: BTreeMap<Var, String> = BTreeMap::new();
    for func in &transformed.functions {
        let sys = extract_sparse_system(func, client);
        match solve_sparse(func, client, &sys) {
            Ok(sparse) => {
                for (v, e) in sparse.vars.iter().zip(&sparse.values) {
                    annotations.insert(v.clone(), format!("{e}"));
                }
            }
            Err(e) => {
                eprintln!("{e}");
                return Ok(ExitCode::from(3));
            }
        }
    }
    print!("{}", to_dot(&transformed, Some(&annotations)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(flags: &Flags) -> Result<ExitCode, String> {
    let suite = flags
        .named
        .get("suite")
        .ok_or_else(|| format!("verify needs --suite\n\n{USAGE}"))?;
    let seed = match flags.named.get("seed") {
        Some(s) => s.parse::<u64>().map_err(|_| format!("bad --seed `{s}`"))?,
        None => match std::env::var("SSIFY_SEED") {
            Ok(s) => s
                .parse::<u64>()
                .map_err(|_| format!("bad SSIFY_SEED `{s}`"))?,
            Err(_) => VerifyConfig::default().seed,
        },
    };
    let trials = match flags.named.get("trials") {
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| format!("bad --trials `{s}`"))?,
        None => 0,
    };
    let fuel = match flags.named.get("fuel") {
        Some(s) => s.parse::<u64>().map_err(|_| format!("bad --fuel `{s}`"))?,
        None => VerifyConfig::default().fuel,
    };
    let cfg = VerifyConfig { seed, trials, fuel };
    let report =
        run_suite(suite, cfg).ok_or_else(|| format!("unknown suite `{suite}`\n\n{USAGE}"))?;
    print!("{}", report.render());
    if report.passed {
        println!("seed={seed}");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("reproduce with --seed {seed}");
        Ok(ExitCode::from(4))
    }
}
