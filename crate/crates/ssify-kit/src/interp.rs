//! Concrete small-step interpreter for the IR, the oracle for semantics
//! preservation, along with a seeded random program generator and a
//! differential fuzzing harness.
//!
//! Phi-functions resolve against the block last visited; sigma-functions
//! execute after the branch target is decided and assign only the taken
//! edge's destinations, leaving the others undefined; parallel groups read
//! all sources before writing any destination. Reading an undefined value
//! at an actual instruction is a trap — pseudo-instructions absorb
//! undefined values silently, which `clean` guarantees is harmless.

use std::collections::HashMap;
use std::fmt;

use crate::ir::*;

/// One observation: a `use` or `invoke` executed with a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub block: Label,
    pub index: usize,
    pub value: i64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "site={}:{} value={}", self.block, self.index, self.value)
    }
}

pub type Trace = Vec<TraceEvent>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed {
        trace: Trace,
        steps: u64,
    },
    Trap {
        site: String,
        var: String,
        trace: Trace,
    },
    FuelExhausted {
        trace: Trace,
    },
}

impl Outcome {
    pub fn trace(&self) -> &Trace {
        match self {
            Outcome::Completed { trace, .. }
            | Outcome::Trap { trace, .. }
            | Outcome::FuelExhausted { trace } => trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Defined(i64),
    Undefined,
}

struct Machine<'a> {
    func: &'a Function,
    env: HashMap<Var, Value>,
    inputs: &'a [i64],
    next_input: usize,
    last_block: Option<usize>,
    trace: Trace,
    steps: u64,
}

impl<'a> Machine<'a> {
    fn read(&self, op: &Operand) -> Value {
        match op {
            Operand::Undef => Value::Undefined,
            Operand::Var(v) => self.env.get(v).copied().unwrap_or(Value::Undefined),
        }
    }

    fn read_actual(&self, op: &Operand, site: String) -> Result<i64, Outcome> {
        match self.read(op) {
            Value::Defined(n) => Ok(n),
            Value::Undefined => Err(Outcome::Trap {
                site,
                var: op.to_string(),
                trace: self.trace.clone(),
            }),
        }
    }

    fn write(&mut self, op: &Operand, value: Value) {
        if let Operand::Var(v) = op {
            self.env.insert(v.clone(), value);
        }
    }
}

/// Run the first function of the program over an input stream. The stream
/// yields 0 once exhausted; `fuel` bounds the number of executed
/// instructions, terminators and phi groups.
pub fn run(program: &Program, inputs: &[i64], fuel: u64) -> Outcome {
    let func = &program.functions[0];
    let mut m = Machine {
        func,
        env: HashMap::new(),
        inputs,
        next_input: 0,
        last_block: None,
        trace: Vec::new(),
        steps: 0,
    };
    let mut block_idx = 0usize;
    loop {
        match run_block(&mut m, block_idx, fuel) {
            Ok(Some(next)) => {
                m.last_block = Some(block_idx);
                block_idx = next;
            }
            Ok(None) => {
                return Outcome::Completed {
                    trace: m.trace,
                    steps: m.steps,
                };
            }
            Err(outcome) => return outcome,
        }
    }
}

fn spend(m: &mut Machine<'_>, fuel: u64) -> Result<(), Outcome> {
    m.steps += 1;
    if m.steps > fuel {
        Err(Outcome::FuelExhausted {
            trace: m.trace.clone(),
        })
    } else {
        Ok(())
    }
}

fn run_block(m: &mut Machine<'_>, b: usize, fuel: u64) -> Result<Option<usize>, Outcome> {
    let block = &m.func.blocks[b];

    if !block.phis.is_empty() {
        spend(m, fuel)?;
        let from = m
            .last_block
            .expect("phi groups never sit in the entry block");
        let from_label = &m.func.blocks[from].label;
        let picked: Vec<(Operand, Value)> = block
            .phis
            .iter()
            .map(|phi| {
                let arg = phi.arg_for(from_label).expect("phi keyed by predecessor");
                (phi.dest.clone(), m.read(arg))
            })
            .collect();
        for (dest, value) in picked {
            m.write(&dest, value);
        }
    }

    for (j, inst) in block.body.iter().enumerate() {
        spend(m, fuel)?;
        let site = format!("{}:{}", block.label, j);
        // Parallel semantics: sources first, all writes after.
        let copy_values: Vec<(Operand, Value)> = inst
            .copies
            .iter()
            .map(|c| (c.dest.clone(), m.read(&c.src)))
            .collect();
        let host_write: Option<(Var, Value)> = match &inst.kind {
            InstKind::Const { dest, value } => Some((dest.clone(), Value::Defined(*value))),
            InstKind::Input { dest } => {
                let v = m.inputs.get(m.next_input).copied().unwrap_or(0);
                m.next_input += 1;
                Some((dest.clone(), Value::Defined(v)))
            }
            InstKind::BinOp { dest, op, lhs, rhs } => {
                let a = m.read_actual(lhs, site.clone())?;
                let b = m.read_actual(rhs, site.clone())?;
                Some((dest.clone(), Value::Defined(op.eval(a, b))))
            }
            InstKind::Sanitize { dest, src } => {
                let v = m.read_actual(src, site.clone())?;
                Some((dest.clone(), Value::Defined(v)))
            }
            InstKind::Use { arg } => {
                if inst.pseudo {
                    None
                } else {
                    let v = m.read_actual(arg, site.clone())?;
                    m.trace.push(TraceEvent {
                        block: block.label.clone(),
                        index: j,
                        value: v,
                    });
                    None
                }
            }
            InstKind::Invoke { recv, .. } => {
                if inst.pseudo {
                    None
                } else {
                    let v = m.read_actual(recv, site.clone())?;
                    m.trace.push(TraceEvent {
                        block: block.label.clone(),
                        index: j,
                        value: v,
                    });
                    None
                }
            }
            InstKind::ParallelCopy => None,
        };
        if let Some((dest, value)) = host_write {
            m.env.insert(dest, value);
        }
        for (dest, value) in copy_values {
            m.write(&dest, value);
        }
    }

    spend(m, fuel)?;
    let term_site = format!("{}:{}", block.label, block.body.len());
    let copy_values: Vec<(Operand, Value)> = block
        .term_copies
        .iter()
        .map(|c| (c.dest.clone(), m.read(&c.src)))
        .collect();
    let target: Option<usize> = match &block.terminator {
        Terminator::Ret => None,
        Terminator::Jump { target } => Some(block_index(m.func, target)),
        Terminator::Branch {
            cond,
            op,
            value,
            then_target,
            else_target,
        } => {
            let c = m.read_actual(cond, term_site)?;
            let taken = if op.eval(c, *value) {
                then_target
            } else {
                else_target
            };
            Some(block_index(m.func, taken))
        }
    };
    // Sigma groups execute once the target is known: sources are read, the
    // taken edge's destinations are written, the rest become undefined.
    // Undefined markers land first so that the not-yet-renamed form, where
    // every destination still carries the original name, keeps its value.
    let sigma_values: Vec<(Operand, Value)> = match target {
        Some(t) => {
            let target_label = &m.func.blocks[t].label;
            block
                .sigmas
                .iter()
                .flat_map(|sigma| {
                    let src = m.read(&sigma.src);
                    sigma.dests.iter().map(move |(l, d)| {
                        let value = if l == target_label {
                            src
                        } else {
                            Value::Undefined
                        };
                        (d.clone(), value)
                    })
                })
                .collect()
        }
        None => Vec::new(),
    };
    for (dest, value) in copy_values {
        m.write(&dest, value);
    }
    for (dest, value) in &sigma_values {
        if matches!(value, Value::Undefined) {
            m.write(dest, *value);
        }
    }
    for (dest, value) in sigma_values {
        if matches!(value, Value::Defined(_)) {
            m.write(&dest, value);
        }
    }
    Ok(target)
}

fn block_index(func: &Function, label: &str) -> usize {
    func.blocks
        .iter()
        .position(|b| b.label == label)
        .expect("validated label")
}

/// SplitMix64: a tiny, stable pseudo-random generator for reproducible
/// corpora and fuzz trials.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng {
            state: seed.wrapping_add(0x9e3779b97f4a7c15),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n` (n > 0).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.next_u64() % den < num
    }

    /// A small signed value, the range constants and branch bounds draw from.
    pub fn small_int(&mut self) -> i64 {
        (self.next_u64() % 9) as i64 - 4
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenBounds {
    pub max_blocks: usize,
    pub max_vars: usize,
    pub max_instrs: usize,
}

impl Default for GenBounds {
    fn default() -> GenBounds {
        GenBounds {
            max_blocks: 12,
            max_vars: 6,
            max_instrs: 5,
        }
    }
}

const VAR_NAMES: [&str; 6] = ["v", "w", "x", "y", "z", "q"];
const METHOD_NAMES: [&str; 4] = ["m", "f", "g", "h"];

/// Generate a valid program: a chain skeleton keeps every block reachable
/// and ends in a single `ret`; extra branch edges point anywhere, giving
/// loops and irreducible shapes. Every variable is defined in the entry
/// block before any other use.
pub fn generate_program(seed: u64, bounds: GenBounds) -> Program {
    let mut rng = Rng::new(seed);
    let n_blocks = 1 + rng.below(bounds.max_blocks.max(1));
    let n_vars = 1 + rng.below(bounds.max_vars.clamp(1, VAR_NAMES.len()));
    let vars: Vec<&str> = VAR_NAMES[..n_vars].to_vec();

    let label = |i: usize| {
        if i == 0 {
            "entry".to_string()
        } else {
            format!("B{i}")
        }
    };
    let mut blocks = Vec::new();
    for i in 0..n_blocks {
        let mut block = Block::new(label(i), Terminator::Ret);
        if i == 0 {
            for v in &vars {
                let dest = Var::new(*v);
                let kind = if rng.chance(1, 2) {
                    InstKind::Input { dest }
                } else {
                    InstKind::Const {
                        dest,
                        value: rng.small_int(),
                    }
                };
                block.body.push(Instruction::new(kind));
            }
        }
        let extra = rng.below(bounds.max_instrs + 1);
        for _ in 0..extra {
            let dest = Var::new(vars[rng.below(n_vars)]);
            let a = Operand::var(vars[rng.below(n_vars)]);
            let b = Operand::var(vars[rng.below(n_vars)]);
            let kind = match rng.below(8) {
                0 => InstKind::Const {
                    dest,
                    value: rng.small_int(),
                },
                1 => InstKind::Input { dest },
                2 | 3 => InstKind::BinOp {
                    dest,
                    op: [BinOp::Add, BinOp::Sub, BinOp::Mul][rng.below(3)],
                    lhs: a,
                    rhs: b,
                },
                4 => InstKind::Sanitize { dest, src: a },
                5 => InstKind::Use { arg: a },
                6 => InstKind::Invoke {
                    recv: a,
                    method: METHOD_NAMES[rng.below(METHOD_NAMES.len())].to_string(),
                },
                _ => {
                    let mut inst = Instruction::new(InstKind::ParallelCopy);
                    inst.copies.push(CopyPair {
                        dest: Operand::Var(dest),
                        src: a,
                        synthetic: false,
                    });
                    block.body.push(inst);
                    continue;
                }
            };
            block.body.push(Instruction::new(kind));
        }
        if i + 1 < n_blocks {
            let next = label(i + 1);
            // Entry must keep zero predecessors, so edges aim past it.
            let other = 1 + rng.below(n_blocks - 1);
            if rng.chance(1, 2) || label(other) == next {
                block.terminator = Terminator::Jump { target: next };
            } else {
                let cond = Operand::var(vars[rng.below(n_vars)]);
                let op = [RelOp::Eq, RelOp::Ne, RelOp::Lt, RelOp::Le][rng.below(4)];
                let (then_target, else_target) = if rng.chance(1, 2) {
                    (next, label(other))
                } else {
                    (label(other), next)
                };
                block.terminator = Terminator::Branch {
                    cond,
                    op,
                    value: rng.small_int(),
                    then_target,
                    else_target,
                };
            }
        }
        blocks.push(block);
    }
    Program {
        functions: vec![Function {
            name: "main".to_string(),
            blocks,
        }],
    }
}

/// A trace divergence found by differential execution.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub trial: usize,
    pub inputs: Vec<i64>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct EquivReport {
    pub trials: usize,
    pub divergence: Option<Divergence>,
}

impl EquivReport {
    pub fn equivalent(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Run both programs on `trials` random input vectors and compare the
/// observation traces: block labels and values must match event by event.
/// The transformed program gets proportionally more fuel to pay for its
/// copies; when either run exhausts its budget only the common prefix is
/// compared.
pub fn fuzz_equivalence(
    original: &Program,
    transformed: &Program,
    trials: usize,
    seed: u64,
    fuel: u64,
) -> EquivReport {
    let mut rng = Rng::new(seed ^ 0xfeed_5eed);
    // Per original step the transformed program executes at most one block's
    // worth of extra pseudo-instructions.
    let growth = transformed.functions[0]
        .blocks
        .iter()
        .map(block_weight)
        .max()
        .unwrap_or(1)
        .max(1);
    for trial in 0..trials {
        let len = 4 + rng.below(12);
        let inputs: Vec<i64> = (0..len).map(|_| rng.small_int()).collect();
        let a = run(original, &inputs, fuel);
        let a_steps = match &a {
            Outcome::Completed { steps, .. } => *steps,
            _ => fuel,
        };
        let b_fuel = a_steps.saturating_mul(growth) + 64;
        let b = run(transformed, &inputs, b_fuel);
        if let Some(detail) = compare_outcomes(&a, &b) {
            return EquivReport {
                trials: trial + 1,
                divergence: Some(Divergence {
                    trial,
                    inputs,
                    detail,
                }),
            };
        }
    }
    EquivReport {
        trials,
        divergence: None,
    }
}

fn block_weight(b: &Block) -> u64 {
    (b.phis.len() + b.body.len() + b.sigmas.len() + 2) as u64
}

fn compare_outcomes(a: &Outcome, b: &Outcome) -> Option<String> {
    let prefix_only =
        matches!(a, Outcome::FuelExhausted { .. }) || matches!(b, Outcome::FuelExhausted { .. });
    if !prefix_only {
        match (a, b) {
            (Outcome::Completed { .. }, Outcome::Completed { .. }) => {}
            (Outcome::Trap { .. }, Outcome::Trap { .. }) => {}
            _ => return Some(format!("outcome kinds differ: {a:?} vs {b:?}")),
        }
    }
    let ta = a.trace();
    let tb = b.trace();
    let upto = if prefix_only {
        ta.len().min(tb.len())
    } else {
        ta.len().max(tb.len())
    };
    for i in 0..upto {
        match (ta.get(i), tb.get(i)) {
            (Some(x), Some(y)) if x.block == y.block && x.value == y.value => {}
            (x, y) => {
                return Some(format!("event {i} differs: {x:?} vs {y:?}"));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse, print};

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn trace_of(text: &str, inputs: &[i64]) -> Vec<(String, i64)> {
        let program = parse(text).unwrap();
        match run(&program, inputs, 10_000) {
            Outcome::Completed { trace, .. } => {
                trace.into_iter().map(|e| (e.block, e.value)).collect()
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn diamond_traces() {
        assert_eq!(trace_of(DIAMOND, &[0]), vec![("L3".to_string(), 1)]);
        assert_eq!(
            trace_of(DIAMOND, &[5]),
            vec![("L2".to_string(), 5), ("L3".to_string(), 5)]
        );
    }

    #[test]
    fn swap_parallel_copy_exchanges_values() {
        let text = "func main {\nentry:\n  a = const 1\n  b = const 2\n  a = b || b = a\n  use a\n  use b\n  ret\n}\n";
        assert_eq!(
            trace_of(text, &[]),
            vec![("entry".to_string(), 2), ("entry".to_string(), 1)]
        );
    }

    #[test]
    fn input_exhaustion_yields_zero() {
        let text = "func main {\nentry:\n  v = input\n  w = input\n  use w\n  ret\n}\n";
        assert_eq!(trace_of(text, &[7]), vec![("entry".to_string(), 0)]);
    }

    #[test]
    fn undefined_read_traps() {
        let program = parse("func main {\nentry:\n  use undef\n  ret\n}\n").unwrap();
        match run(&program, &[], 100) {
            Outcome::Trap { site, .. } => assert_eq!(site, "entry:0"),
            other => panic!("expected trap, got {other:?}"),
        }
    }

    #[test]
    fn sigma_assigns_only_the_taken_edge() {
        let text = "func main {\nentry:\n  v1 = input\n  (L1: v2, L2: v3) = sigma(v1)\n  branch v1 == 0, L1, L2\nL1:\n  use v2\n  ret\nL2:\n  use v3\n  ret\n}\n";
        assert_eq!(trace_of(text, &[0]), vec![("L1".to_string(), 0)]);
        assert_eq!(trace_of(text, &[9]), vec![("L2".to_string(), 9)]);
    }

    #[test]
    fn fuel_exhaustion_reports_partial_trace() {
        let text = "func main {\nentry:\n  v = const 0\n  jump L\nL:\n  v = add v v\n  use v\n  branch v == 0, L, X\nX:\n  ret\n}\n";
        let program = parse(text).unwrap();
        match run(&program, &[], 50) {
            Outcome::FuelExhausted { trace } => assert!(!trace.is_empty()),
            other => panic!("expected fuel exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let a = generate_program(1, GenBounds::default());
        let b = generate_program(1, GenBounds::default());
        assert_eq!(a, b);
        // Frozen golden: any change to the generator is a deliberate one.
        let golden = "func main {\nentry:\n  v = const -1\n  invoke v.f\n  v = const 1\n  branch v == -1, B1, B7\nB1:\n  use v\n  v = sanitize v\n  v = v\n  branch v == 4, B2, B5\nB2:\n  v = const -4\n  v = sanitize v\n  v = v\n  branch v < -4, B3, B6\nB3:\n  v = sanitize v\n  v = mul v v\n  invoke v.h\n  use v\n  v = mul v v\n  branch v == -2, B4, B5\nB4:\n  branch v == 4, B1, B5\nB5:\n  branch v <= -3, B6, B4\nB6:\n  v = mul v v\n  v = v\n  v = add v v\n  jump B7\nB7:\n  use v\n  use v\n  use v\n  ret\n}\n";
        assert_eq!(print(&a), golden);
        for seed in 0..200 {
            let p = generate_program(seed, GenBounds::default());
            validate(&p).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn one_block_bound_generates_straight_line() {
        let p = generate_program(
            3,
            GenBounds {
                max_blocks: 1,
                max_vars: 2,
                max_instrs: 4,
            },
        );
        assert_eq!(p.functions[0].blocks.len(), 1);
        assert!(matches!(
            p.functions[0].blocks[0].terminator,
            Terminator::Ret
        ));
    }

    #[test]
    fn fuzz_detects_injected_phi_swap() {
        let transformed_text = "func main {\nentry:\n  v1 = input\n  branch v1 == 0, L1, L2\nL1:\n  v2 = const 1\n  jump L3\nL2:\n  use v1\n  jump L3\nL3:\n  v3 = phi(L1: v1, L2: v2)\n  use v3\n  ret\n}\n";
        let original = parse(DIAMOND).unwrap();
        let broken = parse(transformed_text).unwrap();
        let report = fuzz_equivalence(&original, &broken, 50, 11, 4096);
        assert!(!report.equivalent());
    }
}
