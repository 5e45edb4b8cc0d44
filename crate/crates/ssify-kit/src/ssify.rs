//! The three-phase live range splitting transformation: `split` inserts
//! phi-functions, sigma-functions and parallel copies at every node where
//! information may originate or collide; `rename` versions the variable over
//! a dominator-tree walk; `clean` deletes pseudo-instructions that reach no
//! actual definition or use.
//!
//! Splitting places new definitions at the iterated post-dominance frontier
//! of backward-information origins, then at the iterated dominance frontier
//! of definitions and forward origins; frontier queries on forks and joins
//! are taken per edge. The phases run per variable, in declaration order,
//! and strategies are always evaluated against the input program.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{
    dominance_frontier, dominance_frontiers, dominator_tree, DomTree, FrontierTarget, GraphView,
};
use crate::ir::*;
use crate::points::{liveness, Points, VarFilter};
use crate::strategy::{PerVarStrategy, SplittingStrategy};

/// Node and edge frontiers for one function, both directions, computed once
/// and shared by every per-variable `split`. Edge frontiers are filled in
/// lazily since only fork and join edges ever get queried.
pub struct FrontierCache {
    g_fwd: GraphView,
    df_fwd: Vec<BTreeSet<usize>>,
    g_rev: GraphView,
    df_rev: Vec<BTreeSet<usize>>,
    edge_fwd: BTreeMap<(usize, usize), BTreeSet<usize>>,
    edge_rev: BTreeMap<(usize, usize), BTreeSet<usize>>,
}

impl FrontierCache {
    pub fn new(func: &Function, cfg: &CfgIndex) -> FrontierCache {
        let g_fwd = GraphView::forward(cfg);
        let dt_fwd = dominator_tree(&g_fwd);
        let df_fwd = dominance_frontiers(&g_fwd, &dt_fwd);
        let g_rev = GraphView::reverse_with_virtual_exit(cfg, func);
        let dt_rev = dominator_tree(&g_rev);
        let df_rev = dominance_frontiers(&g_rev, &dt_rev);
        FrontierCache {
            g_fwd,
            df_fwd,
            g_rev,
            df_rev,
            edge_fwd: BTreeMap::new(),
            edge_rev: BTreeMap::new(),
        }
    }

    /// Close a starting frontier under repeated application of the node
    /// frontier table.
    fn close(df: &[BTreeSet<usize>], start: BTreeSet<usize>) -> BTreeSet<usize> {
        let mut result = start;
        let mut work: Vec<usize> = result.iter().copied().collect();
        while let Some(b) = work.pop() {
            for &z in &df[b] {
                if result.insert(z) {
                    work.push(z);
                }
            }
        }
        result
    }

    pub fn df_plus_block(&self, b: usize) -> BTreeSet<usize> {
        Self::close(&self.df_fwd, self.df_fwd[b].clone())
    }

    pub fn df_plus_edge(&mut self, u: usize, w: usize) -> BTreeSet<usize> {
        let base = self
            .edge_fwd
            .entry((u, w))
            .or_insert_with(|| dominance_frontier(&self.g_fwd, FrontierTarget::Edge(u, w)))
            .clone();
        Self::close(&self.df_fwd, base)
    }

    /// Post-dominance variants; `(u, w)` is a CFG edge, reversed internally.
    pub fn pdf_plus_block(&self, b: usize) -> BTreeSet<usize> {
        Self::close(&self.df_rev, self.df_rev[b].clone())
    }

    pub fn pdf_plus_edge(&mut self, u: usize, w: usize) -> BTreeSet<usize> {
        let base = self
            .edge_rev
            .entry((w, u))
            .or_insert_with(|| dominance_frontier(&self.g_rev, FrontierTarget::Edge(w, u)))
            .clone();
        Self::close(&self.df_rev, base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PseudoKind {
    Phi,
    Sigma,
    Copy,
}

impl PseudoKind {
    pub fn name(self) -> &'static str {
        match self {
            PseudoKind::Phi => "phi",
            PseudoKind::Sigma => "sigma",
            PseudoKind::Copy => "copy",
        }
    }
}

/// What one `ssify` run did to one function: pseudo-instructions inserted by
/// `split`, those deleted again by `clean`, and versions created per base.
#[derive(Debug, Clone, Default)]
pub struct FunctionReport {
    pub function: String,
    pub inserted: Vec<(String, String, PseudoKind)>,
    pub removed_by_clean: Vec<(String, String, PseudoKind)>,
    pub version_count: BTreeMap<String, u32>,
}

impl FunctionReport {
    pub fn inserted_count(&self) -> usize {
        self.inserted.len()
    }

    pub fn net_count(&self) -> usize {
        self.inserted.len() - self.removed_by_clean.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SplitReport {
    pub functions: Vec<FunctionReport>,
}

impl SplitReport {
    pub fn inserted_count(&self) -> usize {
        self.functions.iter().map(|f| f.inserted_count()).sum()
    }

    pub fn net_count(&self) -> usize {
        self.functions.iter().map(|f| f.net_count()).sum()
    }

    /// Line-oriented rendering for the CLI.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.functions {
            for (var, node, kind) in &f.inserted {
                out.push_str(&format!(
                    "inserted func={} var={} node={} kind={}\n",
                    f.function,
                    var,
                    node,
                    kind.name()
                ));
            }
            for (var, node, kind) in &f.removed_by_clean {
                out.push_str(&format!(
                    "removed func={} var={} node={} kind={}\n",
                    f.function,
                    var,
                    node,
                    kind.name()
                ));
            }
            for (base, n) in &f.version_count {
                out.push_str(&format!(
                    "versions func={} var={} count={}\n",
                    f.function, base, n
                ));
            }
        }
        out.push_str(&format!(
            "total inserted={} removed={} net={}\n",
            self.inserted_count(),
            self.inserted_count() - self.net_count(),
            self.net_count()
        ));
        out
    }
}

/// A body-index shift caused by inserting or deleting a standalone copy
/// group; pending strategy nodes for later variables are rebased with it.
#[derive(Debug, Clone, Copy)]
pub struct Shift {
    block: usize,
    at: usize,
    delta: isize,
}

fn apply_shifts(node: Node, shifts: &[Shift]) -> Node {
    let mut node = node;
    for s in shifts {
        if let Node::Inst(b, i) = node {
            if b == s.block && i >= s.at {
                node = Node::Inst(b, (i as isize + s.delta) as usize);
            }
        }
    }
    node
}

fn render_node(func: &Function, node: Node) -> String {
    node.render(func)
}

/// Pseudo-instructions recorded by node description, plus any body-index
/// shifts from standalone copy groups.
pub type SplitOutcome = (Vec<(String, PseudoKind)>, Vec<Shift>);

/// Phase one: compute the split set and insert unversioned `v = phi(v, ...)`,
/// `(v, ...) = sigma(v)` and `v = v` pseudo-instructions.
pub fn split(
    func: &mut Function,
    cfg: &CfgIndex,
    cache: &mut FrontierCache,
    base: &str,
    strategy: &PerVarStrategy,
) -> Result<SplitOutcome, StructuralError> {
    check_strategy_nodes(func, strategy)?;

    // Backward collisions: split points above information that flows up.
    let mut s_up: BTreeSet<usize> = BTreeSet::new();
    for &node in &strategy.i_up {
        match node {
            Node::In(b) if cfg.is_join(b) => {
                for pi in 0..cfg.preds[b].len() {
                    let p = cfg.preds[b][pi];
                    s_up.extend(cache.pdf_plus_edge(p, b));
                }
            }
            other => {
                s_up.extend(cache.pdf_plus_block(other.block()));
            }
        }
    }

    // Forward collisions: defs, forward origins, and the new backward
    // splits. When the variable carries backward information, the phis
    // this pass schedules introduce per-edge uses of their own, which can
    // collide at forks invisible to the post-dominance frontier of the
    // original use set (a redefinition past the fork hides them), so the
    // two passes run to a joint fixpoint.
    let occ = scan_occurrences(func, base);
    let mut s_down: BTreeSet<usize>;
    loop {
        let mut forward_sources: BTreeSet<Node> = occ.defs.clone();
        forward_sources.extend(strategy.i_down.iter().copied());
        forward_sources.extend(s_up.iter().map(|&b| Node::Out(b)));
        s_down = BTreeSet::new();
        for &node in &forward_sources {
            match node {
                Node::Out(b) if cfg.is_fork(b) => {
                    for si in 0..cfg.succs[b].len() {
                        let s = cfg.succs[b][si];
                        s_down.extend(cache.df_plus_edge(b, s));
                    }
                }
                other => {
                    s_down.extend(cache.df_plus_block(other.block()));
                }
            }
        }
        if strategy.i_up.is_empty() {
            break;
        }
        let mut grew = false;
        for &b in &s_down {
            for pi in 0..cfg.preds[b].len() {
                let p = cfg.preds[b][pi];
                for z in cache.pdf_plus_edge(p, b) {
                    grew |= s_up.insert(z);
                }
            }
        }
        if !grew {
            break;
        }
    }

    let mut split_set: BTreeSet<Node> = BTreeSet::new();
    split_set.extend(strategy.i_down.iter().copied());
    split_set.extend(strategy.i_up.iter().copied());
    split_set.extend(s_up.iter().map(|&b| Node::Out(b)));
    split_set.extend(s_down.iter().map(|&b| Node::In(b)));

    let mut inserted = Vec::new();
    let mut attach_plan: Vec<Node> = Vec::new();
    let mut standalone_plan: Vec<(usize, usize)> = Vec::new();
    for &node in &split_set {
        if contains_def(func, node, base) {
            continue;
        }
        match node {
            Node::In(b) if cfg.is_join(b) => {
                let args = cfg.preds[b]
                    .iter()
                    .map(|&p| (func.blocks[p].label.clone(), Operand::var(base)))
                    .collect();
                func.blocks[b].phis.push(Phi {
                    dest: Operand::var(base),
                    args,
                    synthetic: true,
                });
                inserted.push((render_node(func, node), PseudoKind::Phi));
            }
            Node::Out(b) if cfg.is_fork(b) => {
                let dests = cfg.succs[b]
                    .iter()
                    .map(|&s| (func.blocks[s].label.clone(), Operand::var(base)))
                    .collect();
                func.blocks[b].sigmas.push(Sigma {
                    src: Operand::var(base),
                    dests,
                    synthetic: true,
                });
                inserted.push((render_node(func, node), PseudoKind::Sigma));
            }
            Node::Inst(_, _) => {
                attach_plan.push(node);
                inserted.push((render_node(func, node), PseudoKind::Copy));
            }
            Node::In(b) => {
                standalone_plan.push((b, 0));
                inserted.push((render_node(func, node), PseudoKind::Copy));
            }
            Node::Out(b) => {
                standalone_plan.push((b, func.blocks[b].body.len()));
                inserted.push((render_node(func, node), PseudoKind::Copy));
            }
        }
    }
    // Attach copies at their original indices, then insert standalone groups
    // from the back of each block so earlier indices stay valid.
    for node in attach_plan {
        let Node::Inst(b, i) = node else {
            unreachable!()
        };
        let pair = CopyPair {
            dest: Operand::var(base),
            src: Operand::var(base),
            synthetic: true,
        };
        if i == func.blocks[b].body.len() {
            func.blocks[b].term_copies.push(pair);
        } else {
            func.blocks[b].body[i].copies.push(pair);
        }
    }
    standalone_plan.sort_by(|a, b| b.cmp(a));
    let mut shifts = Vec::new();
    for (b, at) in standalone_plan {
        let mut inst = Instruction::new(InstKind::ParallelCopy);
        inst.copies.push(CopyPair {
            dest: Operand::var(base),
            src: Operand::var(base),
            synthetic: true,
        });
        func.blocks[b].body.insert(at, inst);
        shifts.push(Shift {
            block: b,
            at,
            delta: 1,
        });
    }
    Ok((inserted, shifts))
}

fn check_strategy_nodes(func: &Function, strategy: &PerVarStrategy) -> Result<(), StructuralError> {
    for node in strategy.i_down.iter().chain(strategy.i_up.iter()) {
        let b = node.block();
        if b >= func.blocks.len() {
            return Err(StructuralError {
                message: format!("strategy node in unknown block {b}"),
            });
        }
        if let Node::Inst(_, i) = node {
            if *i > func.blocks[b].body.len() {
                return Err(StructuralError {
                    message: format!(
                        "strategy node {}:{} is past the end of the block",
                        func.blocks[b].label, i
                    ),
                });
            }
        }
    }
    Ok(())
}

fn contains_def(func: &Function, node: Node, base: &str) -> bool {
    let matches = |op: &Operand| op.as_var().is_some_and(|v| v.base == base);
    match node {
        Node::In(b) => func.blocks[b].phis.iter().any(|p| matches(&p.dest)),
        Node::Out(b) => func.blocks[b]
            .sigmas
            .iter()
            .any(|s| s.dests.iter().any(|(_, d)| matches(d))),
        Node::Inst(b, i) => {
            let block = &func.blocks[b];
            if i == block.body.len() {
                block.term_copies.iter().any(|c| matches(&c.dest))
            } else {
                let inst = &block.body[i];
                inst.host_dest().is_some_and(|d| d.base == base)
                    || inst.copies.iter().any(|c| matches(&c.dest))
            }
        }
    }
}

/// A definition or use location for dominance tests: an intra-block slot
/// (phi definitions at slot 0, instruction `j` at slot `j + 1`, the exit
/// group at `body.len() + 1`) or a CFG edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loc {
    Slot { block: usize, slot: usize },
    Edge { from: usize, to: usize },
}

/// Does a definition at `def` reach and dominate a use at `use_`? A
/// definition on an edge dominates the edge's own phi operands, and the
/// whole successor subtree when the edge is the successor's only first
/// entry — every other predecessor being a back edge below the successor.
pub fn loc_dominates(dt: &DomTree, cfg: &CfgIndex, def: Loc, use_: Loc) -> bool {
    match (def, use_) {
        (
            Loc::Slot {
                block: db,
                slot: ds,
            },
            Loc::Slot {
                block: ub,
                slot: us,
            },
        ) => {
            if db == ub {
                ds < us
            } else {
                dt.dominates(db, ub)
            }
        }
        (Loc::Slot { block: db, .. }, Loc::Edge { from, .. }) => dt.dominates(db, from),
        (Loc::Edge { from: m, to: c }, Loc::Slot { block: ub, .. }) => {
            edge_dominates_target(dt, cfg, m, c) && dt.dominates(c, ub)
        }
        (Loc::Edge { from: m, to: c }, Loc::Edge { from, to }) => {
            (m == from && c == to)
                || (edge_dominates_target(dt, cfg, m, c) && dt.dominates(c, from))
        }
    }
}

/// Every path into `c` crosses the edge `(m, c)` first: all other
/// predecessors of `c` lie below `c` itself.
fn edge_dominates_target(dt: &DomTree, cfg: &CfgIndex, m: usize, c: usize) -> bool {
    cfg.preds[c].contains(&m) && cfg.preds[c].iter().all(|&p| p == m || dt.dominates(c, p))
}

/// The predecessor carrying `b`'s only first entry, when there is one.
fn first_entry_pred(dt: &DomTree, cfg: &CfgIndex, b: usize) -> Option<usize> {
    let mut outside = cfg.preds[b]
        .iter()
        .copied()
        .filter(|&p| !dt.dominates(b, p));
    match (outside.next(), outside.next()) {
        (Some(m), None) => Some(m),
        _ => None,
    }
}

struct RenameState<'a> {
    base: &'a str,
    next_version: u32,
    stack: Vec<(u32, Loc)>,
}

impl RenameState<'_> {
    fn set_use(&mut self, dt: &DomTree, cfg: &CfgIndex, op: &mut Operand, loc: Loc) {
        if !op.as_var().is_some_and(|v| v.base == self.base) {
            return;
        }
        while let Some(&(_, def_loc)) = self.stack.last() {
            if loc_dominates(dt, cfg, def_loc, loc) {
                break;
            }
            self.stack.pop();
        }
        match self.stack.last() {
            Some(&(version, _)) => {
                *op = Operand::Var(Var::versioned(self.base, version));
            }
            None => *op = Operand::Undef,
        }
    }

    fn fresh(&mut self, loc: Loc) -> u32 {
        let v = self.next_version;
        self.next_version += 1;
        self.stack.push((v, loc));
        v
    }

    fn set_def_var(&mut self, var: &mut Var, loc: Loc) {
        if var.base == self.base {
            var.version = Some(self.fresh(loc));
        }
    }

    fn set_def_op(&mut self, op: &mut Operand, loc: Loc) {
        if let Operand::Var(v) = op {
            if v.base == self.base {
                v.version = Some(self.fresh(loc));
            }
        }
    }
}

/// Phase two: dominator-tree renaming with a version stack. Each definition
/// pushes a fresh version; each use takes the closest definition that
/// dominates it, popping stale entries; an empty stack rewrites the operand
/// to `undef`. Sigma destinations define on their edge and phi operands use
/// on theirs, both handled while finishing the predecessor block. Fresh
/// versions are numbered from 1 in traversal order.
pub fn rename(func: &mut Function, cfg: &CfgIndex, base: &str) -> u32 {
    let dt = dominator_tree(&GraphView::forward(cfg));
    let children = dt.children();
    let mut state = RenameState {
        base,
        next_version: 1,
        stack: Vec::new(),
    };
    rename_block(func, cfg, &dt, &children, &mut state, 0);
    state.next_version - 1
}

fn rename_block(
    func: &mut Function,
    cfg: &CfgIndex,
    dt: &DomTree,
    children: &[Vec<usize>],
    state: &mut RenameState<'_>,
    b: usize,
) {
    let mark = state.stack.len();

    // A sigma destination on the only first-entry edge was versioned while
    // the predecessor ran; its definition covers this whole subtree.
    if let Some(m) = first_entry_pred(dt, cfg, b) {
        let label = func.blocks[b].label.clone();
        for sigma in &func.blocks[m].sigmas {
            if let Some(Operand::Var(v)) = sigma.dest_for(&label) {
                if v.base == state.base {
                    if let Some(version) = v.version {
                        state.stack.push((version, Loc::Edge { from: m, to: b }));
                    }
                }
            }
        }
    }

    let k = func.blocks[b].body.len();
    for phi in &mut func.blocks[b].phis {
        state.set_def_op(&mut phi.dest, Loc::Slot { block: b, slot: 0 });
    }
    for j in 0..k {
        let loc = Loc::Slot {
            block: b,
            slot: j + 1,
        };
        let inst = &mut func.blocks[b].body[j];
        match &mut inst.kind {
            InstKind::BinOp { lhs, rhs, .. } => {
                state.set_use(dt, cfg, lhs, loc);
                state.set_use(dt, cfg, rhs, loc);
            }
            InstKind::Sanitize { src, .. } => state.set_use(dt, cfg, src, loc),
            InstKind::Use { arg } => state.set_use(dt, cfg, arg, loc),
            InstKind::Invoke { recv, .. } => state.set_use(dt, cfg, recv, loc),
            InstKind::Const { .. } | InstKind::Input { .. } | InstKind::ParallelCopy => {}
        }
        for c in &mut inst.copies {
            state.set_use(dt, cfg, &mut c.src, loc);
        }
        for u in &mut inst.pseudo_uses {
            state.set_use(dt, cfg, u, loc);
        }
        if let Some(dest) = match &mut inst.kind {
            InstKind::Const { dest, .. }
            | InstKind::Input { dest }
            | InstKind::BinOp { dest, .. }
            | InstKind::Sanitize { dest, .. } => Some(dest),
            _ => None,
        } {
            state.set_def_var(dest, loc);
        }
        for c in &mut inst.copies {
            state.set_def_op(&mut c.dest, loc);
        }
    }
    let out_loc = Loc::Slot {
        block: b,
        slot: k + 1,
    };
    for sigma in &mut func.blocks[b].sigmas {
        state.set_use(dt, cfg, &mut sigma.src, out_loc);
    }
    if let Terminator::Branch { cond, .. } = &mut func.blocks[b].terminator {
        state.set_use(dt, cfg, cond, out_loc);
    }
    for c in &mut func.blocks[b].term_copies {
        state.set_use(dt, cfg, &mut c.src, out_loc);
    }
    for c in &mut func.blocks[b].term_copies {
        state.set_def_op(&mut c.dest, out_loc);
    }

    for idx in 0..cfg.succs[b].len() {
        let w = cfg.succs[b][idx];
        let edge_mark = state.stack.len();
        let edge = Loc::Edge { from: b, to: w };
        let w_label = func.blocks[w].label.clone();
        for sigma in &mut func.blocks[b].sigmas {
            if let Some(pos) = sigma.dests.iter().position(|(l, _)| *l == w_label) {
                state.set_def_op(&mut sigma.dests[pos].1, edge);
            }
        }
        let b_label = func.blocks[b].label.clone();
        let n_phis = func.blocks[w].phis.len();
        for pi in 0..n_phis {
            let pos = func.blocks[w].phis[pi]
                .args
                .iter()
                .position(|(l, _)| *l == b_label);
            if let Some(pos) = pos {
                let mut arg = func.blocks[w].phis[pi].args[pos].1.clone();
                state.set_use(dt, cfg, &mut arg, edge);
                func.blocks[w].phis[pi].args[pos].1 = arg;
            }
        }
        state.stack.truncate(edge_mark);
    }

    for &c in &children[b] {
        rename_block(func, cfg, dt, children, state, c);
    }
    if state.stack.len() > mark {
        state.stack.truncate(mark);
    }
}

/// Where each version is defined and used; the chains that drive `clean`
/// and the sparse propagation engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChainRef {
    Phi {
        block: usize,
        index: usize,
    },
    Sigma {
        block: usize,
        index: usize,
    },
    BodyInst {
        block: usize,
        index: usize,
    },
    BodyCopy {
        block: usize,
        index: usize,
        pair: usize,
    },
    TermCopy {
        block: usize,
        pair: usize,
    },
    Terminator {
        block: usize,
    },
}

impl ChainRef {
    pub fn node(self, func: &Function) -> Node {
        match self {
            ChainRef::Phi { block, .. } => Node::In(block),
            ChainRef::Sigma { block, .. } => Node::Out(block),
            ChainRef::BodyInst { block, index } | ChainRef::BodyCopy { block, index, .. } => {
                Node::Inst(block, index)
            }
            ChainRef::TermCopy { block, .. } | ChainRef::Terminator { block } => {
                Node::Inst(block, func.blocks[block].body.len())
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chains {
    pub def_of: BTreeMap<Var, ChainRef>,
    pub uses_of: BTreeMap<Var, BTreeSet<ChainRef>>,
}

/// Def-use and use-def chains for all versions of `base`.
pub fn chains(func: &Function, base: &str) -> Chains {
    let mut chains = Chains::default();
    fn def(base: &str, op: Option<&Var>, r: ChainRef, chains: &mut Chains) {
        if let Some(v) = op {
            if v.base == base {
                chains.def_of.insert(v.clone(), r);
            }
        }
    }
    fn use_(base: &str, op: &Operand, r: ChainRef, chains: &mut Chains) {
        if let Some(v) = op.as_var() {
            if v.base == base {
                chains.uses_of.entry(v.clone()).or_default().insert(r);
            }
        }
    }
    for (b, block) in func.blocks.iter().enumerate() {
        for (pi, phi) in block.phis.iter().enumerate() {
            let r = ChainRef::Phi {
                block: b,
                index: pi,
            };
            def(base, phi.dest.as_var(), r, &mut chains);
            for (_, a) in &phi.args {
                use_(base, a, r, &mut chains);
            }
        }
        for (j, inst) in block.body.iter().enumerate() {
            let r = ChainRef::BodyInst { block: b, index: j };
            def(base, inst.host_dest(), r, &mut chains);
            for u in inst.host_uses() {
                use_(base, u, r, &mut chains);
            }
            for u in &inst.pseudo_uses {
                use_(base, u, r, &mut chains);
            }
            for (ci, c) in inst.copies.iter().enumerate() {
                let r = ChainRef::BodyCopy {
                    block: b,
                    index: j,
                    pair: ci,
                };
                def(base, c.dest.as_var(), r, &mut chains);
                use_(base, &c.src, r, &mut chains);
            }
        }
        for (si, sigma) in block.sigmas.iter().enumerate() {
            let r = ChainRef::Sigma {
                block: b,
                index: si,
            };
            use_(base, &sigma.src, r, &mut chains);
            for (_, d) in &sigma.dests {
                def(base, d.as_var(), r, &mut chains);
            }
        }
        if let Terminator::Branch { cond, .. } = &block.terminator {
            use_(base, cond, ChainRef::Terminator { block: b }, &mut chains);
        }
        for (ci, c) in block.term_copies.iter().enumerate() {
            let r = ChainRef::TermCopy { block: b, pair: ci };
            def(base, c.dest.as_var(), r, &mut chains);
            use_(base, &c.src, r, &mut chains);
        }
    }
    chains
}

fn ref_is_actual(func: &Function, r: ChainRef) -> bool {
    match r {
        ChainRef::Phi { block, index } => !func.blocks[block].phis[index].synthetic,
        ChainRef::Sigma { block, index } => !func.blocks[block].sigmas[index].synthetic,
        ChainRef::BodyCopy { block, index, pair } => {
            !func.blocks[block].body[index].copies[pair].synthetic
        }
        ChainRef::TermCopy { block, pair } => !func.blocks[block].term_copies[pair].synthetic,
        ChainRef::BodyInst { .. } | ChainRef::Terminator { .. } => true,
    }
}

fn ref_defs(func: &Function, r: ChainRef, base: &str) -> Vec<Var> {
    let mut out = Vec::new();
    let mut push = |v: Option<&Var>| {
        if let Some(v) = v {
            if v.base == base {
                out.push(v.clone());
            }
        }
    };
    match r {
        ChainRef::Phi { block, index } => push(func.blocks[block].phis[index].dest.as_var()),
        ChainRef::Sigma { block, index } => {
            for (_, d) in &func.blocks[block].sigmas[index].dests {
                push(d.as_var());
            }
        }
        ChainRef::BodyInst { block, index } => push(func.blocks[block].body[index].host_dest()),
        ChainRef::BodyCopy { block, index, pair } => {
            push(func.blocks[block].body[index].copies[pair].dest.as_var())
        }
        ChainRef::TermCopy { block, pair } => {
            push(func.blocks[block].term_copies[pair].dest.as_var())
        }
        ChainRef::Terminator { .. } => {}
    }
    out
}

fn ref_uses(func: &Function, r: ChainRef, base: &str) -> Vec<Var> {
    let mut out = Vec::new();
    let mut push = |op: &Operand| {
        if let Some(v) = op.as_var() {
            if v.base == base {
                out.push(v.clone());
            }
        }
    };
    match r {
        ChainRef::Phi { block, index } => {
            for (_, a) in &func.blocks[block].phis[index].args {
                push(a);
            }
        }
        ChainRef::Sigma { block, index } => push(&func.blocks[block].sigmas[index].src),
        ChainRef::BodyInst { block, index } => {
            let inst = &func.blocks[block].body[index];
            for u in inst.host_uses() {
                push(u);
            }
            for u in &inst.pseudo_uses {
                push(u);
            }
        }
        ChainRef::BodyCopy { block, index, pair } => {
            push(&func.blocks[block].body[index].copies[pair].src)
        }
        ChainRef::TermCopy { block, pair } => push(&func.blocks[block].term_copies[pair].src),
        ChainRef::Terminator { block } => {
            if let Terminator::Branch { cond, .. } = &func.blocks[block].terminator {
                push(cond);
            }
        }
    }
    out
}

/// Phase three: undefined and dead code elimination over the version web.
/// A version is `defined` when reachable from an actual definition through
/// the pseudo chains, `used` when it reaches an actual use; everything else
/// is rewritten to `undef` inside pseudo-instructions, and pseudo
/// instructions left with no real definitions or uses are deleted. Actual
/// instructions are never touched.
pub fn clean(func: &mut Function, base: &str) -> SplitOutcome {
    let ch = chains(func, base);
    let web: BTreeSet<Var> = versions_of(func, base).into_keys().collect();

    let mut defined: BTreeSet<Var> = BTreeSet::new();
    let mut active: BTreeSet<ChainRef> = BTreeSet::new();
    let mut queue: Vec<ChainRef> = Vec::new();
    for &r in ch.def_of.values() {
        if ref_is_actual(func, r) && active.insert(r) {
            queue.push(r);
        }
    }
    while let Some(r) = queue.pop() {
        for v in ref_defs(func, r, base) {
            if web.contains(&v) && defined.insert(v.clone()) {
                if let Some(users) = ch.uses_of.get(&v) {
                    for &u in users {
                        if active.insert(u) {
                            queue.push(u);
                        }
                    }
                }
            }
        }
    }

    let mut used: BTreeSet<Var> = BTreeSet::new();
    let mut active: BTreeSet<ChainRef> = BTreeSet::new();
    let mut queue: Vec<ChainRef> = Vec::new();
    for refs in ch.uses_of.values() {
        for &r in refs {
            if ref_is_actual(func, r) && active.insert(r) {
                queue.push(r);
            }
        }
    }
    while let Some(r) = queue.pop() {
        for v in ref_uses(func, r, base) {
            if web.contains(&v) && used.insert(v.clone()) {
                if let Some(&d) = ch.def_of.get(&v) {
                    if active.insert(d) {
                        queue.push(d);
                    }
                }
            }
        }
    }

    let live: BTreeSet<Var> = defined.intersection(&used).cloned().collect();
    let base_owned = base.to_string();
    let is_dead = move |op: &Operand| match op.as_var() {
        Some(v) => v.base == base_owned && !live.contains(v),
        None => false,
    };

    let mut removed: Vec<(String, PseudoKind)> = Vec::new();
    let mut shifts: Vec<Shift> = Vec::new();
    for b in 0..func.blocks.len() {
        let label = func.blocks[b].label.clone();
        let body_len = func.blocks[b].body.len();
        let block = &mut func.blocks[b];
        let mut kept_phis = Vec::new();
        for mut phi in std::mem::take(&mut block.phis) {
            if phi.synthetic {
                if is_dead(&phi.dest) {
                    phi.dest = Operand::Undef;
                }
                for (_, a) in phi.args.iter_mut() {
                    if is_dead(a) {
                        *a = Operand::Undef;
                    }
                }
                if phi.dest.is_undef() || phi.args.iter().all(|(_, a)| a.is_undef()) {
                    removed.push((format!("In({label})"), PseudoKind::Phi));
                    continue;
                }
            }
            kept_phis.push(phi);
        }
        block.phis = kept_phis;

        let mut kept_sigmas = Vec::new();
        for mut sigma in std::mem::take(&mut block.sigmas) {
            if sigma.synthetic {
                if is_dead(&sigma.src) {
                    sigma.src = Operand::Undef;
                }
                for (_, d) in sigma.dests.iter_mut() {
                    if is_dead(d) {
                        *d = Operand::Undef;
                    }
                }
                if sigma.src.is_undef() || sigma.dests.iter().all(|(_, d)| d.is_undef()) {
                    removed.push((format!("Out({label})"), PseudoKind::Sigma));
                    continue;
                }
            }
            kept_sigmas.push(sigma);
        }
        block.sigmas = kept_sigmas;

        for j in 0..body_len {
            prune_copies(
                &mut block.body[j].copies,
                &is_dead,
                format!("{label}:{j}"),
                &mut removed,
            );
        }
        prune_copies(
            &mut block.term_copies,
            &is_dead,
            format!("{label}:term"),
            &mut removed,
        );

        // Standalone groups whose pairs all died disappear entirely.
        let mut j = 0;
        while j < block.body.len() {
            if matches!(block.body[j].kind, InstKind::ParallelCopy)
                && block.body[j].copies.is_empty()
            {
                block.body.remove(j);
                shifts.push(Shift {
                    block: b,
                    at: j,
                    delta: -1,
                });
            } else {
                j += 1;
            }
        }
    }
    (removed, shifts)
}

fn prune_copies(
    copies: &mut Vec<CopyPair>,
    is_dead: &dyn Fn(&Operand) -> bool,
    node_desc: String,
    removed: &mut Vec<(String, PseudoKind)>,
) {
    copies.retain_mut(|c| {
        if !c.synthetic {
            return true;
        }
        if is_dead(&c.dest) {
            c.dest = Operand::Undef;
        }
        if is_dead(&c.src) {
            c.src = Operand::Undef;
        }
        if c.dest.is_undef() || c.src.is_undef() {
            removed.push((node_desc.clone(), PseudoKind::Copy));
            false
        } else {
            true
        }
    });
}

fn clear_synthetic_flags(func: &mut Function) {
    for block in &mut func.blocks {
        for phi in &mut block.phis {
            phi.synthetic = false;
        }
        for sigma in &mut block.sigmas {
            sigma.synthetic = false;
        }
        for inst in &mut block.body {
            for c in &mut inst.copies {
                c.synthetic = false;
            }
        }
        for c in &mut block.term_copies {
            c.synthetic = false;
        }
    }
}

/// Split, rename and clean one function, variable by variable in declaration
/// order. Strategies are evaluated against the input program; body indices
/// in pending strategies are rebased when standalone copy groups come and go.
pub fn ssify_function(
    func: &mut Function,
    strategies: &SplittingStrategy,
) -> Result<FunctionReport, StructuralError> {
    let cfg = CfgIndex::build(func)?;
    let mut cache = FrontierCache::new(func, &cfg);
    let mut report = FunctionReport {
        function: func.name.clone(),
        ..Default::default()
    };
    let mut all_shifts: Vec<Shift> = Vec::new();
    for base in func.base_names() {
        let mut strategy = strategies.get(&base).cloned().unwrap_or_default();
        strategy.i_down = strategy
            .i_down
            .into_iter()
            .map(|n| apply_shifts(n, &all_shifts))
            .collect();
        strategy.i_up = strategy
            .i_up
            .into_iter()
            .map(|n| apply_shifts(n, &all_shifts))
            .collect();
        let (inserted, split_shifts) = split(func, &cfg, &mut cache, &base, &strategy)?;
        for (node, kind) in inserted {
            report.inserted.push((base.clone(), node, kind));
        }
        all_shifts.extend(split_shifts);
        let count = rename(func, &cfg, &base);
        report.version_count.insert(base.clone(), count);
        let (removed, clean_shifts) = clean(func, &base);
        for (node, kind) in removed {
            report.removed_by_clean.push((base.clone(), node, kind));
        }
        all_shifts.extend(clean_shifts);
        clear_synthetic_flags(func);
    }
    Ok(report)
}

/// Split every function of the program per its strategy map.
pub fn ssify(
    program: &Program,
    strategies: &BTreeMap<String, SplittingStrategy>,
) -> Result<(Program, SplitReport), StructuralError> {
    let mut out = program.clone();
    let mut report = SplitReport::default();
    for func in &mut out.functions {
        let empty = SplittingStrategy::new();
        let per_func = strategies.get(&func.name).unwrap_or(&empty);
        report.functions.push(ssify_function(func, per_func)?);
    }
    Ok((out, report))
}

/// Static single assignment discipline plus live range separation: every
/// version has exactly one definition, that definition dominates each use,
/// and no two versions of one base are simultaneously live.
pub fn check_ssa(func: &Function, cfg: &CfgIndex, points: &Points) -> Vec<String> {
    let mut violations = Vec::new();
    let dt = dominator_tree(&GraphView::forward(cfg));
    let mut bases: BTreeSet<String> = BTreeSet::new();
    for v in all_vars(func) {
        if v.version.is_some() {
            bases.insert(v.base.clone());
        }
    }
    for base in &bases {
        let versions = versions_of(func, base);
        let ch = chains(func, base);
        for (v, def_count) in &versions {
            if *def_count != 1 {
                violations.push(format!("{v} has {def_count} definitions"));
                continue;
            }
            let def_ref = ch.def_of[v];
            let def_loc = def_loc(func, def_ref, v);
            for use_ref in ch.uses_of.get(v).into_iter().flatten() {
                for use_loc in use_locs(func, *use_ref, v) {
                    if !loc_dominates(&dt, cfg, def_loc, use_loc) {
                        violations.push(format!(
                            "definition of {v} at {} does not dominate its use at {}",
                            def_ref.node(func).render(func),
                            use_ref.node(func).render(func)
                        ));
                    }
                }
            }
        }
        // No two versions of one base may overlap at a program point.
        let ranges: Vec<(Var, crate::points::LiveRange)> = versions
            .keys()
            .map(|v| (v.clone(), liveness(func, points, VarFilter::Exact(v))))
            .collect();
        for p in 0..points.len() {
            let here: Vec<&Var> = ranges
                .iter()
                .filter(|(_, r)| r.at(p))
                .map(|(v, _)| v)
                .collect();
            if here.len() > 1 {
                violations.push(format!(
                    "versions {} and {} of {base} are both live at {}",
                    here[0],
                    here[1],
                    points.render(func, p)
                ));
            }
        }
    }
    violations
}

fn def_loc(func: &Function, r: ChainRef, v: &Var) -> Loc {
    match r {
        ChainRef::Phi { block, .. } => Loc::Slot { block, slot: 0 },
        ChainRef::BodyInst { block, index } | ChainRef::BodyCopy { block, index, .. } => {
            Loc::Slot {
                block,
                slot: index + 1,
            }
        }
        ChainRef::TermCopy { block, .. } | ChainRef::Terminator { block } => Loc::Slot {
            block,
            slot: func.blocks[block].body.len() + 1,
        },
        ChainRef::Sigma { block, index } => {
            let sigma = &func.blocks[block].sigmas[index];
            let edge_label = sigma
                .dests
                .iter()
                .find(|(_, d)| d.as_var() == Some(v))
                .map(|(l, _)| l.clone())
                .expect("definition matches one destination");
            let to = func
                .blocks
                .iter()
                .position(|b| b.label == edge_label)
                .unwrap();
            Loc::Edge { from: block, to }
        }
    }
}

fn use_locs(func: &Function, r: ChainRef, v: &Var) -> Vec<Loc> {
    match r {
        ChainRef::Phi { block, index } => {
            let phi = &func.blocks[block].phis[index];
            phi.args
                .iter()
                .filter(|(_, a)| a.as_var() == Some(v))
                .map(|(l, _)| {
                    let from = func.blocks.iter().position(|b| b.label == *l).unwrap();
                    Loc::Edge { from, to: block }
                })
                .collect()
        }
        ChainRef::BodyInst { block, index } | ChainRef::BodyCopy { block, index, .. } => {
            vec![Loc::Slot {
                block,
                slot: index + 1,
            }]
        }
        ChainRef::Sigma { block, .. }
        | ChainRef::TermCopy { block, .. }
        | ChainRef::Terminator { block } => {
            vec![Loc::Slot {
                block,
                slot: func.blocks[block].body.len() + 1,
            }]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{eval_strategy, StrategyExpr};
    use crate::text::{parse, print};

    pub const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn ssify_text(text: &str, strategy: &str) -> (Program, SplitReport) {
        let program = parse(text).unwrap();
        let expr = StrategyExpr::parse(strategy).unwrap();
        let mut map = BTreeMap::new();
        for func in &program.functions {
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            map.insert(func.name.clone(), eval_strategy(&expr, func, &cfg, &points));
        }
        ssify(&program, &map).unwrap()
    }

    #[test]
    fn constprop_split_inserts_one_phi_on_diamond() {
        let (out, report) = ssify_text(DIAMOND, "constprop");
        let text = print(&out);
        let expected = "func main {\nentry:\n  v1 = input\n  branch v1 == 0, L1, L2\nL1:\n  v2 = const 1\n  jump L3\nL2:\n  use v1\n  jump L3\nL3:\n  v3 = phi(L1: v2, L2: v1)\n  use v3\n  ret\n}\n";
        assert_eq!(text, expected);
        assert_eq!(report.inserted_count(), 1);
        assert_eq!(report.net_count(), 1);
    }

    #[test]
    fn abcd_split_inserts_sigma_and_phi_on_diamond() {
        // Rename yields sigma destinations (L1: v2, L2: v3); v2 is dead on
        // the L1 edge (the constant redefines v) so clean undefines it.
        let (out, report) = ssify_text(DIAMOND, "abcd");
        let text = print(&out);
        let expected = "func main {\nentry:\n  v1 = input\n  (L1: undef, L2: v3) = sigma(v1)\n  branch v1 == 0, L1, L2\nL1:\n  v4 = const 1\n  jump L3\nL2:\n  use v3\n  jump L3\nL3:\n  v5 = phi(L1: v4, L2: v3)\n  use v5\n  ret\n}\n";
        assert_eq!(text, expected);
        assert_eq!(report.inserted_count(), 2);
        assert_eq!(report.net_count(), 2);
    }

    #[test]
    fn ccp_equals_abcd_on_diamond() {
        let (a, _) = ssify_text(DIAMOND, "abcd");
        let (b, _) = ssify_text(DIAMOND, "ccp");
        assert_eq!(a, b);
    }

    #[test]
    fn class_inference_strategy_on_diamond() {
        // Uses↑ on the diamond: sigma at Out(entry), phi at In(L3), and
        // parallel copies at both use sites; the copy after the last use is
        // dead and cleaned away, the one at L2 feeds the phi and stays.
        let (out, report) = ssify_text(DIAMOND, "uses-up");
        let kinds: Vec<PseudoKind> = report.functions[0]
            .inserted
            .iter()
            .map(|(_, _, k)| *k)
            .collect();
        assert_eq!(
            kinds,
            vec![
                PseudoKind::Sigma,
                PseudoKind::Copy,
                PseudoKind::Phi,
                PseudoKind::Copy
            ]
        );
        let removed: Vec<&str> = report.functions[0]
            .removed_by_clean
            .iter()
            .map(|(_, n, _)| n.as_str())
            .collect();
        assert_eq!(removed, vec!["L3:0"]);
        let text = print(&out);
        let expected = "func main {\nentry:\n  v1 = input\n  (L1: undef, L2: v3) = sigma(v1)\n  branch v1 == 0, L1, L2\nL1:\n  v4 = const 1\n  jump L3\nL2:\n  use v3 || v5 = v3\n  jump L3\nL3:\n  v6 = phi(L1: v4, L2: v5)\n  use v6\n  ret\n}\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn undefined_use_becomes_undef() {
        let text = "func main {\nentry:\n  use w\n  v = const 1\n  use v\n  ret\n}\n";
        let (out, _) = ssify_text(text, "constprop");
        let printed = print(&out);
        assert!(printed.contains("use undef"), "{printed}");
        assert!(printed.contains("use v1"), "{printed}");
    }

    #[test]
    fn ssify_is_idempotent_on_its_own_output() {
        let (once, _) = ssify_text(DIAMOND, "constprop");
        let text = print(&once);
        let (twice, report) = ssify_text(&text, "none");
        assert_eq!(print(&twice), text);
        assert_eq!(report.inserted_count(), 0);
    }

    #[test]
    fn dead_sigma_destination_is_undefined_but_sigma_survives() {
        // v is only used on the L2 side, so the L1 destination dies.
        let text = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  ret\nL2:\n  use v\n  ret\n}\n";
        let (out, _) = ssify_text(text, "abcd");
        let printed = print(&out);
        assert!(
            printed.contains("(L1: undef, L2: v3) = sigma(v1)"),
            "{printed}"
        );
    }

    #[test]
    fn fully_dead_phi_is_deleted() {
        // The phi merging the two arms is never used by an actual
        // instruction, so the pruned form drops it.
        let text = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  use v\n  jump L3\nL2:\n  v = const 2\n  use v\n  jump L3\nL3:\n  ret\n}\n";
        let (out, report) = ssify_text(text, "constprop");
        let printed = print(&out);
        assert!(!printed.contains("phi"), "{printed}");
        assert!(report.functions[0]
            .removed_by_clean
            .iter()
            .any(|(_, n, k)| n == "In(L3)" && *k == PseudoKind::Phi));
    }

    #[test]
    fn clean_is_identity_when_every_pseudo_is_live() {
        let (out, report) = ssify_text(DIAMOND, "constprop");
        assert!(report.functions[0].removed_by_clean.is_empty());
        // Running the pipeline again with no strategy changes nothing.
        let (again, _) = ssify_text(&print(&out), "none");
        assert_eq!(print(&again), print(&out));
    }

    #[test]
    fn split_strategy_with_unknown_node_errors() {
        let program = parse(DIAMOND).unwrap();
        let mut func = program.functions[0].clone();
        let cfg = CfgIndex::build(&func).unwrap();
        let mut strategy = PerVarStrategy::default();
        strategy.i_down.insert(Node::Inst(0, 99));
        let mut cache = FrontierCache::new(&func, &cfg);
        let e = split(&mut func, &cfg, &mut cache, "v", &strategy).unwrap_err();
        assert!(e.message.contains("past the end"), "{e}");
    }

    #[test]
    fn ssa_discipline_holds_after_every_bundled_strategy() {
        for strategy in [
            "constprop",
            "abcd",
            "ccp",
            "uses-up",
            "defs-uses-down",
            "ssi",
        ] {
            let (out, _) = ssify_text(DIAMOND, strategy);
            let func = &out.functions[0];
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            let violations = check_ssa(func, &cfg, &points);
            assert!(violations.is_empty(), "{strategy}: {violations:?}");
        }
    }

    #[test]
    fn traces_are_preserved_under_the_remaining_table_rows() {
        use crate::interp::{fuzz_equivalence, generate_program, GenBounds};
        for seed in 0..12u64 {
            let program = generate_program(seed, GenBounds::default());
            for strategy in ["hochstadt", "bitwidth-stephenson", "bitwidth-mahlke"] {
                let expr = StrategyExpr::parse(strategy).unwrap();
                let mut map = BTreeMap::new();
                for func in &program.functions {
                    let cfg = CfgIndex::build(func).unwrap();
                    let points = Points::build(func, &cfg);
                    map.insert(func.name.clone(), eval_strategy(&expr, func, &cfg, &points));
                }
                let (out, _) = ssify(&program, &map).unwrap();
                validate(&out).unwrap_or_else(|e| panic!("seed {seed} {strategy}: {e}"));
                let func = &out.functions[0];
                let cfg = CfgIndex::build(func).unwrap();
                let points = Points::build(func, &cfg);
                let violations = check_ssa(func, &cfg, &points);
                assert!(
                    violations.is_empty(),
                    "seed {seed} {strategy}: {violations:?}"
                );
                let report = fuzz_equivalence(&program, &out, 4, seed, 1024);
                assert!(
                    report.equivalent(),
                    "seed {seed} {strategy}: {:?}",
                    report.divergence
                );
            }
        }
    }

    #[test]
    fn traces_are_preserved_on_random_programs() {
        use crate::interp::{fuzz_equivalence, generate_program, GenBounds};
        for seed in 0..40u64 {
            let program = generate_program(seed, GenBounds::default());
            for strategy in [
                "constprop",
                "abcd",
                "ccp",
                "uses-up",
                "defs-uses-down",
                "ssi",
            ] {
                let expr = StrategyExpr::parse(strategy).unwrap();
                let mut map = BTreeMap::new();
                for func in &program.functions {
                    let cfg = CfgIndex::build(func).unwrap();
                    let points = Points::build(func, &cfg);
                    map.insert(func.name.clone(), eval_strategy(&expr, func, &cfg, &points));
                }
                let (out, _) = ssify(&program, &map).unwrap();
                validate(&out).unwrap_or_else(|e| {
                    panic!(
                        "seed {seed} {strategy}: invalid output: {e}\n{}",
                        print(&out)
                    )
                });
                let report = fuzz_equivalence(&program, &out, 5, seed, 2048);
                assert!(
                    report.equivalent(),
                    "seed {seed} {strategy}: {:?}\noriginal:\n{}\ntransformed:\n{}",
                    report.divergence,
                    print(&program),
                    print(&out)
                );
            }
        }
    }

    #[test]
    fn split_and_rename_phases_preserve_traces() {
        use crate::interp::{fuzz_equivalence, generate_program, GenBounds};
        for seed in [3u64, 9, 21, 34] {
            let program = generate_program(seed, GenBounds::default());
            let func = &program.functions[0];
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            let expr = StrategyExpr::parse("ssi").unwrap();
            let strategies = eval_strategy(&expr, func, &cfg, &points);

            // Phase by phase over every variable: split only, then renamed,
            // then cleaned; each stage must keep the observable traces.
            let mut split_only = func.clone();
            let mut cache = FrontierCache::new(&split_only, &cfg);
            for base in split_only.base_names() {
                let strategy = strategies.get(&base).cloned().unwrap_or_default();
                split(&mut split_only, &cfg, &mut cache, &base, &strategy).unwrap();
            }
            let mut renamed = split_only.clone();
            for base in renamed.base_names() {
                rename(&mut renamed, &cfg, &base);
            }
            let mut cleaned = renamed.clone();
            for base in cleaned.base_names() {
                clean(&mut cleaned, &base);
            }
            for stage in [&split_only, &renamed, &cleaned] {
                let transformed = Program {
                    functions: vec![stage.clone()],
                };
                let report = fuzz_equivalence(&program, &transformed, 5, seed, 1024);
                assert!(report.equivalent(), "seed {seed}: {:?}", report.divergence);
            }
        }
    }

    #[test]
    fn nodewise_contained_strategies_insert_contained_counts() {
        use crate::interp::{generate_program, GenBounds};
        let pairs = [
            ("constprop", "abcd"),
            ("ccp", "abcd"),
            ("constprop", "ssi"),
            ("constprop", "defs-uses-down"),
        ];
        for seed in 0..25u64 {
            let program = generate_program(seed, GenBounds::default());
            for (small, large) in pairs {
                let (_, a) = ssify_text(&print(&program), small);
                let (_, b) = ssify_text(&print(&program), large);
                assert!(
                    a.inserted_count() <= b.inserted_count(),
                    "seed {seed}: {small}={} > {large}={}",
                    a.inserted_count(),
                    b.inserted_count()
                );
            }
        }
    }

    #[test]
    fn monotone_strategies_insert_monotone_counts() {
        let text = "func main {\nentry:\n  v = input\n  w = input\n  branch v < 3, A, B\nA:\n  w = add w v\n  jump C\nB:\n  use w\n  jump C\nC:\n  use v\n  use w\n  ret\n}\n";
        let (_, ccp) = ssify_text(text, "ccp");
        let (_, abcd) = ssify_text(text, "abcd");
        assert!(ccp.inserted_count() <= abcd.inserted_count());
    }
}
