//! The intermediate representation: a CFG of basic blocks whose boundaries
//! carry phi-functions (at block entries, `In(l)`) and sigma-functions (at
//! block exits, `Out(l)`), plus parallel copies that may ride along with any
//! instruction or terminator.
//!
//! Control flow nodes come in three kinds: interior nodes (one predecessor,
//! one successor), forks (`Out(l)` of a block with two successors) and joins
//! (`In(l)` of a block with two or more predecessors). Phi-functions select
//! one operand per incoming edge; sigma-functions assign one destination per
//! outgoing edge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

pub type Label = String;

/// A variable reference: a base name plus an optional version number.
///
/// Versions are assigned by renaming; `v` with version 3 renders as `v3`.
/// Base names never end in a digit, so the rendering is unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub base: String,
    pub version: Option<u32>,
}

impl Var {
    pub fn new(base: impl Into<String>) -> Var {
        Var {
            base: base.into(),
            version: None,
        }
    }

    pub fn versioned(base: impl Into<String>, version: u32) -> Var {
        Var {
            base: base.into(),
            version: Some(version),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.version {
            Some(v) => write!(f, "{}{}", self.base, v),
            None => write!(f, "{}", self.base),
        }
    }
}

/// An operand position: a variable or the distinguished `undef`.
///
/// `undef` has no definition site; by convention it is defined at the entry
/// node, so it dominates every use. It appears in pseudo-instructions after
/// cleaning, and in actual instructions only for uses of never-defined names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Undef,
    Var(Var),
}

impl Operand {
    pub fn var(base: impl Into<String>) -> Operand {
        Operand::Var(Var::new(base))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Undef => None,
        }
    }

    pub fn is_undef(&self) -> bool {
        matches!(self, Operand::Undef)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Undef => write!(f, "undef"),
            Operand::Var(v) => write!(f, "{v}"),
        }
    }
}

/// One phi-function `dest = phi(l1: a1, ..., lq: aq)` at `In(l)`.
///
/// All phis of a block execute as one parallel group. Operands are keyed by
/// predecessor label. The `synthetic` flag marks phis inserted by `split`
/// and not yet committed by `clean`; it is ignored by structural equality.
#[derive(Debug, Clone)]
pub struct Phi {
    pub dest: Operand,
    pub args: Vec<(Label, Operand)>,
    pub synthetic: bool,
}

impl PartialEq for Phi {
    fn eq(&self, other: &Self) -> bool {
        self.dest == other.dest && self.args == other.args
    }
}
impl Eq for Phi {}

impl Phi {
    pub fn arg_for(&self, pred: &str) -> Option<&Operand> {
        self.args.iter().find(|(l, _)| l == pred).map(|(_, a)| a)
    }
}

/// One sigma-function `(l1: d1, ..., lq: dq) = sigma(src)` at `Out(l)`.
///
/// Destinations are keyed by successor label; on execution only the taken
/// edge's destination receives the source value.
#[derive(Debug, Clone)]
pub struct Sigma {
    pub src: Operand,
    pub dests: Vec<(Label, Operand)>,
    pub synthetic: bool,
}

impl PartialEq for Sigma {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src && self.dests == other.dests
    }
}
impl Eq for Sigma {}

impl Sigma {
    pub fn dest_for(&self, succ: &str) -> Option<&Operand> {
        self.dests.iter().find(|(l, _)| l == succ).map(|(_, d)| d)
    }
}

/// One `dest = src` pair inside a parallel copy group.
#[derive(Debug, Clone)]
pub struct CopyPair {
    pub dest: Operand,
    pub src: Operand,
    pub synthetic: bool,
}

impl PartialEq for CopyPair {
    fn eq(&self, other: &Self) -> bool {
        self.dest == other.dest && self.src == other.src
    }
}
impl Eq for CopyPair {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
        }
    }

    pub fn eval(self, a: i64, b: i64) -> i64 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
        }
    }

    /// Whether the test pins the value to a single constant on one side:
    /// `==` on the then edge, `!=` on the else edge.
    pub fn is_equality(self) -> bool {
        matches!(self, RelOp::Eq | RelOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstKind {
    /// `dest = const k`
    Const { dest: Var, value: i64 },
    /// `dest = input` — reads the next value from the input stream.
    Input { dest: Var },
    /// `dest = op a b`
    BinOp {
        dest: Var,
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    /// `dest = sanitize src` — identity on values, a cleanser for taint.
    Sanitize { dest: Var, src: Operand },
    /// `use arg` — an observation sink.
    Use { arg: Operand },
    /// `invoke recv.method` — a method call observation.
    Invoke { recv: Operand, method: String },
    /// A copy group `a = b || c = d || ...`; the pairs live in
    /// [`Instruction::copies`]. A plain copy is a one-pair group.
    ParallelCopy,
}

/// An instruction plus any parallel copies attached to it.
///
/// All sources (instruction operands, copy sources, pseudo uses) are read
/// before any destination is written. `pseudo_uses` and the `pseudo` flag
/// exist only for the sparse-evaluation-graph construction; neither is
/// printed nor considered by structural equality.
#[derive(Debug, Clone)]
pub struct Instruction {
    pub kind: InstKind,
    pub copies: Vec<CopyPair>,
    pub pseudo_uses: Vec<Operand>,
    pub pseudo: bool,
}

impl PartialEq for Instruction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.copies == other.copies
    }
}
impl Eq for Instruction {}

impl Instruction {
    pub fn new(kind: InstKind) -> Instruction {
        Instruction {
            kind,
            copies: Vec::new(),
            pseudo_uses: Vec::new(),
            pseudo: false,
        }
    }

    /// The variable defined by the instruction proper, if any (attached
    /// copy destinations not included).
    pub fn host_dest(&self) -> Option<&Var> {
        match &self.kind {
            InstKind::Const { dest, .. }
            | InstKind::Input { dest }
            | InstKind::BinOp { dest, .. }
            | InstKind::Sanitize { dest, .. } => Some(dest),
            InstKind::Use { .. } | InstKind::Invoke { .. } | InstKind::ParallelCopy => None,
        }
    }

    /// Operand slots read by the instruction proper.
    pub fn host_uses(&self) -> Vec<&Operand> {
        match &self.kind {
            InstKind::BinOp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Sanitize { src, .. } => vec![src],
            InstKind::Use { arg } => vec![arg],
            InstKind::Invoke { recv, .. } => vec![recv],
            InstKind::Const { .. } | InstKind::Input { .. } | InstKind::ParallelCopy => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Jump {
        target: Label,
    },
    Branch {
        cond: Operand,
        op: RelOp,
        value: i64,
        then_target: Label,
        else_target: Label,
    },
    Ret,
}

impl Terminator {
    pub fn targets(&self) -> Vec<&Label> {
        match self {
            Terminator::Jump { target } => vec![target],
            Terminator::Branch {
                then_target,
                else_target,
                ..
            } => vec![then_target, else_target],
            Terminator::Ret => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: Label,
    pub phis: Vec<Phi>,
    pub body: Vec<Instruction>,
    pub sigmas: Vec<Sigma>,
    pub terminator: Terminator,
    /// Parallel copies attached to the terminator.
    pub term_copies: Vec<CopyPair>,
}

impl Block {
    pub fn new(label: impl Into<String>, terminator: Terminator) -> Block {
        Block {
            label: label.into(),
            phis: Vec::new(),
            body: Vec::new(),
            sigmas: Vec::new(),
            terminator,
            term_copies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    /// `blocks[0]` is the entry block.
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn entry(&self) -> &Block {
        &self.blocks[0]
    }

    /// Base names in first-occurrence order, scanning blocks top to bottom.
    pub fn base_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut record = |op: Option<&Var>| {
            if let Some(v) = op {
                if seen.insert(v.base.clone()) {
                    order.push(v.base.clone());
                }
            }
        };
        for block in &self.blocks {
            for phi in &block.phis {
                record(phi.dest.as_var());
                for (_, a) in &phi.args {
                    record(a.as_var());
                }
            }
            for inst in &block.body {
                record(inst.host_dest());
                for u in inst.host_uses() {
                    record(u.as_var());
                }
                for c in &inst.copies {
                    record(c.src.as_var());
                    record(c.dest.as_var());
                }
            }
            for sigma in &block.sigmas {
                record(sigma.src.as_var());
                for (_, d) in &sigma.dests {
                    record(d.as_var());
                }
            }
            if let Terminator::Branch { cond, .. } = &block.terminator {
                record(cond.as_var());
            }
            for c in &block.term_copies {
                record(c.src.as_var());
                record(c.dest.as_var());
            }
        }
        order
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

/// A control flow node: interior instruction slots, plus the `In`/`Out`
/// boundary nodes of each block. The slot `body.len()` names the terminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    In(usize),
    Inst(usize, usize),
    Out(usize),
}

impl Node {
    pub fn block(&self) -> usize {
        match *self {
            Node::In(b) | Node::Out(b) | Node::Inst(b, _) => b,
        }
    }

    fn sort_key(&self) -> (usize, u8, usize) {
        match *self {
            Node::In(b) => (b, 0, 0),
            Node::Inst(b, i) => (b, 1, i),
            Node::Out(b) => (b, 2, 0),
        }
    }

    pub fn render(&self, func: &Function) -> String {
        match *self {
            Node::In(b) => format!("In({})", func.blocks[b].label),
            Node::Out(b) => format!("Out({})", func.blocks[b].label),
            Node::Inst(b, i) => {
                if i == func.blocks[b].body.len() {
                    format!("{}:term", func.blocks[b].label)
                } else {
                    format!("{}:{}", func.blocks[b].label, i)
                }
            }
        }
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

/// Structural error raised by CFG construction or validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralError {
    pub message: String,
}

impl fmt::Display for StructuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for StructuralError {}

fn err(message: impl Into<String>) -> StructuralError {
    StructuralError {
        message: message.into(),
    }
}

/// Predecessor/successor maps and node-kind classification for one function.
#[derive(Debug, Clone)]
pub struct CfgIndex {
    pub block_index: HashMap<Label, usize>,
    /// Predecessors in block-declaration order of the predecessor.
    pub preds: Vec<Vec<usize>>,
    /// Successors in terminator order (then before else).
    pub succs: Vec<Vec<usize>>,
}

impl CfgIndex {
    pub fn build(func: &Function) -> Result<CfgIndex, StructuralError> {
        if func.blocks.is_empty() {
            return Err(err(format!("function {}: entry block required", func.name)));
        }
        let mut block_index = HashMap::new();
        for (i, b) in func.blocks.iter().enumerate() {
            if block_index.insert(b.label.clone(), i).is_some() {
                return Err(err(format!("duplicate label {}", b.label)));
            }
        }
        let n = func.blocks.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, b) in func.blocks.iter().enumerate() {
            let targets = b.terminator.targets();
            if targets.len() == 2 && targets[0] == targets[1] {
                return Err(err(format!(
                    "block {}: branch targets must be distinct",
                    b.label
                )));
            }
            for t in targets {
                let j = *block_index
                    .get(t)
                    .ok_or_else(|| err(format!("unresolved label {t} in block {}", b.label)))?;
                succs[i].push(j);
            }
        }
        for (i, outs) in succs.iter().enumerate() {
            for &j in outs {
                preds[j].push(i);
            }
        }
        if !preds[0].is_empty() {
            return Err(err(format!(
                "entry block {} must have no predecessors",
                func.blocks[0].label
            )));
        }
        Ok(CfgIndex {
            block_index,
            preds,
            succs,
        })
    }

    pub fn is_join(&self, b: usize) -> bool {
        self.preds[b].len() >= 2
    }

    pub fn is_fork(&self, b: usize) -> bool {
        self.succs[b].len() >= 2
    }

    pub fn n_blocks(&self) -> usize {
        self.preds.len()
    }
}

/// Reachability from the entry block over the successor map.
pub fn reachable_blocks(cfg: &CfgIndex) -> Vec<bool> {
    let mut seen = vec![false; cfg.n_blocks()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(b) = stack.pop() {
        for &s in &cfg.succs[b] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

/// Full invariant check: labels resolve, entry has no predecessors, all
/// blocks are reachable, phi/sigma keying matches the edge sets, and
/// parallel groups have disjoint destinations.
pub fn validate(program: &Program) -> Result<(), StructuralError> {
    if program.functions.is_empty() {
        return Err(err("program has no functions"));
    }
    let mut names = BTreeSet::new();
    for func in &program.functions {
        if !names.insert(&func.name) {
            return Err(err(format!("duplicate function {}", func.name)));
        }
        validate_function(func)?;
    }
    Ok(())
}

pub fn validate_function(func: &Function) -> Result<(), StructuralError> {
    let cfg = CfgIndex::build(func)?;
    let reach = reachable_blocks(&cfg);
    for (i, b) in func.blocks.iter().enumerate() {
        if !reach[i] {
            return Err(err(format!("unreachable block {}", b.label)));
        }
        let pred_labels: BTreeSet<&str> = cfg.preds[i]
            .iter()
            .map(|&p| func.blocks[p].label.as_str())
            .collect();
        let succ_labels: BTreeSet<&str> = cfg.succs[i]
            .iter()
            .map(|&s| func.blocks[s].label.as_str())
            .collect();
        if !b.phis.is_empty() && cfg.preds[i].len() < 2 {
            return Err(err(format!(
                "block {}: phi-functions require at least two predecessors",
                b.label
            )));
        }
        if !b.sigmas.is_empty() && cfg.succs[i].len() < 2 {
            return Err(err(format!(
                "block {}: sigma-functions require at least two successors",
                b.label
            )));
        }
        for phi in &b.phis {
            let keys: BTreeSet<&str> = phi.args.iter().map(|(l, _)| l.as_str()).collect();
            if keys.len() != phi.args.len() || keys != pred_labels {
                return Err(err(format!(
                    "block {}: phi operands must be keyed exactly by the predecessors",
                    b.label
                )));
            }
        }
        for sigma in &b.sigmas {
            let keys: BTreeSet<&str> = sigma.dests.iter().map(|(l, _)| l.as_str()).collect();
            if keys.len() != sigma.dests.len() || keys != succ_labels {
                return Err(err(format!(
                    "block {}: sigma destinations must be keyed exactly by the successors",
                    b.label
                )));
            }
        }
        for inst in &b.body {
            check_copy_dests(&b.label, inst.host_dest(), &inst.copies)?;
        }
        check_copy_dests(&b.label, None, &b.term_copies)?;
        let phi_dests: Vec<&Operand> = b.phis.iter().map(|p| &p.dest).collect();
        check_disjoint(&b.label, &phi_dests, "phi group")?;
        let sigma_dests: Vec<&Operand> = b
            .sigmas
            .iter()
            .flat_map(|s| s.dests.iter().map(|(_, d)| d))
            .collect();
        check_disjoint(&b.label, &sigma_dests, "sigma group")?;
    }
    Ok(())
}

fn check_copy_dests(
    label: &str,
    host: Option<&Var>,
    copies: &[CopyPair],
) -> Result<(), StructuralError> {
    let mut dests: Vec<&Operand> = copies.iter().map(|c| &c.dest).collect();
    let host_op;
    if let Some(h) = host {
        host_op = Operand::Var(h.clone());
        dests.push(&host_op);
    }
    check_disjoint(label, &dests, "parallel group")
}

fn check_disjoint(label: &str, dests: &[&Operand], what: &str) -> Result<(), StructuralError> {
    let mut seen = BTreeSet::new();
    for d in dests {
        if let Operand::Var(v) = d {
            if !seen.insert(v.clone()) {
                return Err(err(format!("block {label}: {what} writes {v} twice")));
            }
        }
    }
    Ok(())
}

/// The four occurrence sets of the strategy vocabulary, as control flow
/// nodes: definitions, uses, conditional tests, and uses after which the
/// variable is dead.
#[derive(Debug, Clone, Default)]
pub struct DefsUses {
    pub defs: BTreeSet<Node>,
    pub uses: BTreeSet<Node>,
    pub conds: BTreeSet<Node>,
    pub last_uses: BTreeSet<Node>,
}

fn base_matches(op: &Operand, base: &str) -> bool {
    op.as_var().is_some_and(|v| v.base == base)
}

/// Syntactic scan for definitions, uses and conditional tests of a base
/// variable. Phi definitions sit at `In(l)`, sigma definitions at `Out(l)`;
/// the terminator occupies instruction slot `body.len()`.
pub fn scan_occurrences(func: &Function, base: &str) -> DefsUses {
    let mut out = DefsUses::default();
    for (bi, block) in func.blocks.iter().enumerate() {
        for phi in &block.phis {
            if base_matches(&phi.dest, base) {
                out.defs.insert(Node::In(bi));
            }
            if phi.args.iter().any(|(_, a)| base_matches(a, base)) {
                out.uses.insert(Node::In(bi));
            }
        }
        for (ii, inst) in block.body.iter().enumerate() {
            let node = Node::Inst(bi, ii);
            if inst.host_dest().is_some_and(|d| d.base == base)
                || inst.copies.iter().any(|c| base_matches(&c.dest, base))
            {
                out.defs.insert(node);
            }
            if inst.host_uses().iter().any(|u| base_matches(u, base))
                || inst.copies.iter().any(|c| base_matches(&c.src, base))
                || inst.pseudo_uses.iter().any(|u| base_matches(u, base))
            {
                out.uses.insert(node);
            }
        }
        for sigma in &block.sigmas {
            if base_matches(&sigma.src, base) {
                out.uses.insert(Node::Out(bi));
            }
            if sigma.dests.iter().any(|(_, d)| base_matches(d, base)) {
                out.defs.insert(Node::Out(bi));
            }
        }
        // The inline branch test is tracked as a Conds occurrence, kept
        // apart from Uses the way the strategy table needs them.
        let term_node = Node::Inst(bi, block.body.len());
        if let Terminator::Branch { cond, .. } = &block.terminator {
            if base_matches(cond, base) {
                out.conds.insert(term_node);
            }
        }
        if block.term_copies.iter().any(|c| base_matches(&c.src, base)) {
            out.uses.insert(term_node);
        }
        if block
            .term_copies
            .iter()
            .any(|c| base_matches(&c.dest, base))
        {
            out.defs.insert(term_node);
        }
    }
    out
}

/// All distinct variables occurring in a function, defs and uses alike,
/// in deterministic order.
pub fn all_vars(func: &Function) -> Vec<Var> {
    let mut set = BTreeSet::new();
    fn push(set: &mut BTreeSet<Var>, op: &Operand) {
        if let Operand::Var(v) = op {
            set.insert(v.clone());
        }
    }
    for block in &func.blocks {
        for phi in &block.phis {
            push(&mut set, &phi.dest);
            for (_, a) in &phi.args {
                push(&mut set, a);
            }
        }
        for inst in &block.body {
            if let Some(d) = inst.host_dest() {
                set.insert(d.clone());
            }
            for u in inst.host_uses() {
                push(&mut set, u);
            }
            for c in &inst.copies {
                push(&mut set, &c.src);
                push(&mut set, &c.dest);
            }
            for u in &inst.pseudo_uses {
                push(&mut set, u);
            }
        }
        for sigma in &block.sigmas {
            push(&mut set, &sigma.src);
            for (_, d) in &sigma.dests {
                push(&mut set, d);
            }
        }
        if let Terminator::Branch { cond, .. } = &block.terminator {
            push(&mut set, cond);
        }
        for c in &block.term_copies {
            push(&mut set, &c.src);
            push(&mut set, &c.dest);
        }
    }
    set.into_iter().collect()
}

/// Versions of `base` present in a function, with their definition counts.
pub fn versions_of(func: &Function, base: &str) -> BTreeMap<Var, usize> {
    let mut defs: BTreeMap<Var, usize> = BTreeMap::new();
    fn add_def(defs: &mut BTreeMap<Var, usize>, base: &str, op: &Operand) {
        if let Operand::Var(v) = op {
            if v.base == base {
                *defs.entry(v.clone()).or_insert(0) += 1;
            }
        }
    }
    for block in &func.blocks {
        for phi in &block.phis {
            add_def(&mut defs, base, &phi.dest);
        }
        for inst in &block.body {
            if let Some(d) = inst.host_dest() {
                if d.base == base {
                    *defs.entry(d.clone()).or_insert(0) += 1;
                }
            }
            for c in &inst.copies {
                add_def(&mut defs, base, &c.dest);
            }
        }
        for sigma in &block.sigmas {
            for (_, d) in &sigma.dests {
                add_def(&mut defs, base, d);
            }
        }
        for c in &block.term_copies {
            add_def(&mut defs, base, &c.dest);
        }
    }
    for v in all_vars(func) {
        if v.base == base {
            defs.entry(v).or_insert(0);
        }
    }
    defs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    #[test]
    fn diamond_cfg_classification() {
        let program = parse(DIAMOND).unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let at = |l: &str| cfg.block_index[l];
        assert_eq!(cfg.succs[at("entry")], vec![at("L1"), at("L2")]);
        assert_eq!(cfg.preds[at("L3")], vec![at("L1"), at("L2")]);
        assert!(cfg.is_fork(at("entry")));
        assert!(cfg.is_join(at("L3")));
        assert!(!cfg.is_join(at("L1")));
        assert!(!cfg.is_fork(at("L3")));
    }

    #[test]
    fn straight_line_has_no_forks_or_joins() {
        let program = parse("func main {\nentry:\n  v = const 1\n  use v\n  ret\n}\n").unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        assert!(!cfg.is_fork(0));
        assert!(!cfg.is_join(0));
    }

    #[test]
    fn self_loop_is_join_and_fork() {
        let text = "func main {\nentry:\n  v = input\n  jump L\nL:\n  v = add v v\n  branch v < 10, L, X\nX:\n  ret\n}\n";
        let program = parse(text).unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let l = cfg.block_index["L"];
        assert_eq!(cfg.preds[l].len(), 2);
        assert!(cfg.is_join(l));
        assert!(cfg.is_fork(l));
    }

    #[test]
    fn unresolved_target_is_an_error() {
        let program = parse("func main {\nentry:\n  jump gone\n}\n");
        // The parser resolves labels itself, so build the function by hand.
        assert!(program.is_err());
        let func = Function {
            name: "main".into(),
            blocks: vec![Block::new(
                "entry",
                Terminator::Jump {
                    target: "gone".into(),
                },
            )],
        };
        let e = CfgIndex::build(&func).unwrap_err();
        assert!(e.message.contains("gone"));
    }

    #[test]
    fn diamond_defs_uses_conds() {
        let program = parse(DIAMOND).unwrap();
        let func = &program.functions[0];
        let occ = scan_occurrences(func, "v");
        assert_eq!(
            occ.defs,
            [Node::Inst(0, 0), Node::Inst(1, 0)].into_iter().collect()
        );
        assert_eq!(
            occ.uses,
            [Node::Inst(2, 0), Node::Inst(3, 0)].into_iter().collect()
        );
        assert_eq!(occ.conds, [Node::Inst(0, 1)].into_iter().collect());
    }

    #[test]
    fn unmentioned_variable_has_empty_sets() {
        let program = parse(DIAMOND).unwrap();
        let occ = scan_occurrences(&program.functions[0], "zz");
        assert!(occ.defs.is_empty());
        assert!(occ.uses.is_empty());
        assert!(occ.conds.is_empty());
    }
}
