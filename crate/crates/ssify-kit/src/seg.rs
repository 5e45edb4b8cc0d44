//! Sparse evaluation graphs for partitioned-variable problems, and the
//! isomorphism between a variable's SEG and the program produced by
//! splitting its live range at the transfer nodes.
//!
//! The graph has one node for the entry, one per control flow node carrying
//! a non-identity transfer function, and one meet node per block in the
//! iterated dominance frontier of those; edges follow immediate dominance
//! among this node set, and the mapping `M` sends each CFG edge to the
//! nearest such node at or above its source. The check augments the program
//! with a pseudo-definition at the entry and pseudo-uses at the exit and at
//! every definition, splits forward at the transfer nodes, and verifies the
//! three bijections: nodes to versions, `M` to the live-range partition,
//! and graph edges to def-use chains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::graph::{dominance_frontiers, dominator_tree, GraphView};
use crate::ir::*;
use crate::points::{liveness, Points, VarFilter};
use crate::ssify::ssify_function;
use crate::strategy::{PerVarStrategy, SplittingStrategy};

/// A problem whose per-variable analysis is independent of all other
/// variables, declared by its transfer-node set.
#[derive(Debug, Clone)]
pub enum PvpAnalysis {
    /// Non-identity transfers at every definition.
    ReachingDefs,
    /// Non-identity transfers at definitions (kill) and uses (gen).
    ReachingUses,
    /// An explicit transfer-node set.
    Custom { name: String, nodes: BTreeSet<Node> },
}

impl PvpAnalysis {
    pub fn name(&self) -> &str {
        match self {
            PvpAnalysis::ReachingDefs => "reaching-defs",
            PvpAnalysis::ReachingUses => "reaching-uses",
            PvpAnalysis::Custom { name, .. } => name,
        }
    }

    /// Instruction-level transfer nodes for `base`.
    pub fn transfer_nodes(&self, func: &Function, base: &str) -> BTreeSet<Node> {
        let keep_inst = |n: &Node| matches!(n, Node::Inst(_, _));
        match self {
            PvpAnalysis::ReachingDefs => scan_occurrences(func, base)
                .defs
                .into_iter()
                .filter(keep_inst)
                .collect(),
            PvpAnalysis::ReachingUses => {
                let occ = scan_occurrences(func, base);
                occ.defs
                    .into_iter()
                    .chain(occ.uses)
                    .filter(keep_inst)
                    .collect()
            }
            PvpAnalysis::Custom { nodes, .. } => nodes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegError {
    /// The client couples variables, so one graph per variable cannot
    /// carry its analysis sparsely.
    NotPartitioned { client: String },
}

impl fmt::Display for SegError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegError::NotPartitioned { client } => write!(
                f,
                "{client} is not a partitioned-variable problem: the abstract state of one \
                 variable depends on others, so a per-variable evaluation graph cannot hold it"
            ),
        }
    }
}

impl std::error::Error for SegError {}

/// Reject clients that are not partitioned-variable problems.
pub fn require_pvp<C: crate::dataflow::ClientAnalysis>(client: &C) -> Result<(), SegError> {
    if client.is_pvp() {
        Ok(())
    } else {
        Err(SegError::NotPartitioned {
            client: client.name().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SegNode {
    Entry,
    Transfer(Node),
    Meet(usize),
}

#[derive(Debug, Clone)]
pub struct Seg {
    pub nodes: Vec<SegNode>,
    pub edges: BTreeSet<(usize, usize)>,
    /// CFG edge to the graph node whose value reaches it.
    pub edge_map: BTreeMap<(usize, usize), usize>,
}

impl Seg {
    pub fn render(&self, func: &Function) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let desc = match n {
                SegNode::Entry => "entry".to_string(),
                SegNode::Transfer(node) => format!("transfer {}", node.render(func)),
                SegNode::Meet(b) => format!("meet In({})", func.blocks[*b].label),
            };
            out.push_str(&format!("node={i} {desc}\n"));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("edge={a}->{b}\n"));
        }
        for ((u, w), n) in &self.edge_map {
            out.push_str(&format!(
                "map={}->{} node={n}\n",
                func.blocks[*u].label, func.blocks[*w].label
            ));
        }
        out
    }
}

/// Positions of S-nodes inside one block, lowest first: the entry marker,
/// then the meet at `In`, then transfers in instruction order.
fn node_rank(n: &SegNode) -> (u8, usize) {
    match n {
        SegNode::Entry => (0, 0),
        SegNode::Meet(_) => (1, 0),
        SegNode::Transfer(node) => match node {
            Node::Inst(_, i) => (2, *i),
            _ => (2, usize::MAX),
        },
    }
}

struct Placement {
    /// Per block: S-node ids sorted by ascending rank.
    per_block: Vec<Vec<usize>>,
    idom: Vec<Option<usize>>,
}

impl Placement {
    /// The nearest S-node at or above the end of `block`.
    fn at_block_end(&self, block: usize) -> usize {
        let mut b = block;
        loop {
            if let Some(&last) = self.per_block[b].last() {
                return last;
            }
            b = self.idom[b].expect("the entry node covers the root");
        }
    }

    /// The nearest S-node strictly above the given rank in `block`.
    fn strictly_above(&self, nodes: &[SegNode], block: usize, rank: (u8, usize)) -> usize {
        for &id in self.per_block[block].iter().rev() {
            if node_rank(&nodes[id]) < rank {
                return id;
            }
        }
        let mut b = self.idom[block].expect("the entry node covers the root");
        loop {
            if let Some(&last) = self.per_block[b].last() {
                return last;
            }
            b = self.idom[b].expect("the entry node covers the root");
        }
    }
}

/// Build the sparse evaluation graph of `base` for a forward
/// partitioned-variable problem with the given transfer nodes.
pub fn build_seg(func: &Function, cfg: &CfgIndex, base: &str, analysis: &PvpAnalysis) -> Seg {
    let transfer: BTreeSet<Node> = analysis.transfer_nodes(func, base);
    let g = GraphView::forward(cfg);
    let dt = dominator_tree(&g);
    let df = dominance_frontiers(&g, &dt);

    let mut nodes: Vec<SegNode> = vec![SegNode::Entry];
    for &t in &transfer {
        nodes.push(SegNode::Transfer(t));
    }
    // Meet nodes: iterated frontier of the entry and transfer blocks.
    let mut meet_blocks: BTreeSet<usize> = BTreeSet::new();
    let mut work: Vec<usize> = transfer.iter().map(|n| n.block()).chain([0]).collect();
    let mut seen: BTreeSet<usize> = work.iter().copied().collect();
    while let Some(b) = work.pop() {
        for &m in &df[b] {
            meet_blocks.insert(m);
            if seen.insert(m) {
                work.push(m);
            }
        }
    }
    for &m in &meet_blocks {
        nodes.push(SegNode::Meet(m));
    }

    let mut per_block: Vec<Vec<usize>> = vec![Vec::new(); func.blocks.len()];
    for (i, n) in nodes.iter().enumerate() {
        let b = match n {
            SegNode::Entry => 0,
            SegNode::Transfer(node) => node.block(),
            SegNode::Meet(b) => *b,
        };
        per_block[b].push(i);
    }
    for list in &mut per_block {
        list.sort_by_key(|&i| node_rank(&nodes[i]));
    }
    let placement = Placement {
        per_block,
        idom: dt.idom.clone(),
    };

    let mut edges = BTreeSet::new();
    for (i, n) in nodes.iter().enumerate() {
        match n {
            SegNode::Entry => {}
            SegNode::Transfer(node) => {
                let q = placement.strictly_above(&nodes, node.block(), node_rank(n));
                edges.insert((q, i));
            }
            SegNode::Meet(m) => {
                for &u in &cfg.preds[*m] {
                    let q = placement.at_block_end(u);
                    edges.insert((q, i));
                }
            }
        }
    }

    let mut edge_map = BTreeMap::new();
    for (u, _) in func.blocks.iter().enumerate() {
        for &w in &cfg.succs[u] {
            edge_map.insert((u, w), placement.at_block_end(u));
        }
    }

    Seg {
        nodes,
        edges,
        edge_map,
    }
}

/// The program augmented per the covering construction: a pseudo-definition
/// of `base` at the entry, a parallel pseudo-use at every definition, and a
/// pseudo-use before every exit. Returns the function and the rebasing of
/// original instruction nodes.
pub fn augment_for_seg(func: &Function, base: &str) -> Function {
    let mut out = func.clone();
    for block in &mut out.blocks {
        for inst in &mut block.body {
            let defines = inst.host_dest().is_some_and(|d| d.base == base)
                || inst
                    .copies
                    .iter()
                    .any(|c| c.dest.as_var().is_some_and(|v| v.base == base));
            if defines {
                inst.pseudo_uses.push(Operand::var(base));
            }
        }
        if matches!(block.terminator, Terminator::Ret) {
            let mut use_inst = Instruction::new(InstKind::Use {
                arg: Operand::var(base),
            });
            use_inst.pseudo = true;
            block.body.push(use_inst);
        }
    }
    let mut def = Instruction::new(InstKind::Const {
        dest: Var::new(base),
        value: 0,
    });
    def.pseudo = true;
    out.blocks[0].body.insert(0, def);
    out
}

/// Rebase an instruction node from original coordinates into the augmented
/// function (the entry grew one leading instruction).
pub fn rebase_node(node: Node) -> Node {
    match node {
        Node::Inst(0, i) => Node::Inst(0, i + 1),
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct IsoReport {
    pub versions: usize,
    pub seg_nodes: usize,
    pub mismatches: Vec<String>,
}

impl IsoReport {
    pub fn isomorphic(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Split the augmented program at the transfer nodes and check the three
/// bijections against the graph.
pub fn check_isomorphism(
    seg: &Seg,
    func: &Function,
    cfg: &CfgIndex,
    augmented_split: &Function,
    base: &str,
) -> IsoReport {
    let mut mismatches = Vec::new();
    let split_cfg = CfgIndex::build(augmented_split).expect("valid transformed function");
    let points = Points::build(augmented_split, &split_cfg);

    // Bijection 1: one version per graph node.
    let mut version_of: Vec<Option<Var>> = Vec::with_capacity(seg.nodes.len());
    for n in &seg.nodes {
        let v = match n {
            SegNode::Entry => def_at(augmented_split, Node::Inst(0, 0), base),
            SegNode::Transfer(node) => def_at(augmented_split, rebase_node(*node), base),
            SegNode::Meet(m) => augmented_split.blocks[*m]
                .phis
                .iter()
                .find_map(|p| p.dest.as_var().filter(|v| v.base == base).cloned()),
        };
        if v.is_none() {
            mismatches.push(format!("graph node {n:?} has no matching definition"));
        }
        version_of.push(v);
    }
    let versions = versions_of(augmented_split, base);
    let mapped: BTreeSet<&Var> = version_of.iter().flatten().collect();
    if mapped.len() != version_of.len() || mapped.len() != versions.len() {
        mismatches.push(format!(
            "{} graph nodes map onto {} of {} versions",
            seg.nodes.len(),
            mapped.len(),
            versions.len()
        ));
    }

    // Bijection 2: the live-range partition agrees with the edge mapping.
    let ranges: BTreeMap<Var, crate::points::LiveRange> = versions
        .keys()
        .map(|v| {
            (
                v.clone(),
                liveness(augmented_split, &points, VarFilter::Exact(v)),
            )
        })
        .collect();
    for (&(u, w), &seg_node) in &seg.edge_map {
        let edge_point = points.edge_points[&(u, w)];
        let here: Vec<&Var> = ranges
            .iter()
            .filter(|(_, r)| r.at(edge_point))
            .map(|(v, _)| v)
            .collect();
        if here.len() != 1 {
            mismatches.push(format!(
                "edge {}->{} carries {} live versions, not exactly one",
                func.blocks[u].label,
                func.blocks[w].label,
                here.len()
            ));
            continue;
        }
        if Some(here[0]) != version_of[seg_node].as_ref() {
            mismatches.push(format!(
                "edge {}->{}: live version {} but the graph maps it to {:?}",
                func.blocks[u].label, func.blocks[w].label, here[0], version_of[seg_node]
            ));
        }
    }
    let _ = cfg;

    // Bijection 3: graph edges are exactly the def-use chains between
    // graph nodes.
    for (q, x) in &seg.edges {
        let (Some(vq), Some(_)) = (&version_of[*q], &version_of[*x]) else {
            continue;
        };
        if !uses_at(augmented_split, &seg.nodes[*x], base).contains(vq) {
            mismatches.push(format!(
                "graph edge {q}->{x} has no matching def-use chain for {vq}"
            ));
        }
    }
    for (x_id, x) in seg.nodes.iter().enumerate() {
        for used in uses_at(augmented_split, x, base) {
            if let Some(q) = version_of.iter().position(|v| v.as_ref() == Some(&used)) {
                if !seg.edges.contains(&(q, x_id)) {
                    mismatches.push(format!(
                        "def-use chain {used} -> {x:?} has no matching graph edge"
                    ));
                }
            }
        }
    }

    IsoReport {
        versions: versions.len(),
        seg_nodes: seg.nodes.len(),
        mismatches,
    }
}

fn def_at(func: &Function, node: Node, base: &str) -> Option<Var> {
    let Node::Inst(b, i) = node else { return None };
    let inst = func.blocks[b].body.get(i)?;
    if let Some(d) = inst.host_dest() {
        if d.base == base {
            return Some(d.clone());
        }
    }
    inst.copies
        .iter()
        .find_map(|c| c.dest.as_var().filter(|v| v.base == base).cloned())
}

fn uses_at(func: &Function, node: &SegNode, base: &str) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    match node {
        SegNode::Entry => {}
        SegNode::Meet(m) => {
            for phi in &func.blocks[*m].phis {
                if phi.dest.as_var().is_some_and(|v| v.base == base) {
                    for (_, a) in &phi.args {
                        if let Some(v) = a.as_var() {
                            if v.base == base {
                                out.insert(v.clone());
                            }
                        }
                    }
                }
            }
        }
        SegNode::Transfer(n) => {
            let Node::Inst(b, i) = rebase_node(*n) else {
                return out;
            };
            if let Some(inst) = func.blocks[b].body.get(i) {
                for u in inst.host_uses() {
                    if let Some(v) = u.as_var() {
                        if v.base == base {
                            out.insert(v.clone());
                        }
                    }
                }
                for u in &inst.pseudo_uses {
                    if let Some(v) = u.as_var() {
                        if v.base == base {
                            out.insert(v.clone());
                        }
                    }
                }
                for c in &inst.copies {
                    if let Some(v) = c.src.as_var() {
                        if v.base == base {
                            out.insert(v.clone());
                        }
                    }
                }
            }
        }
    }
    out
}

/// Run the whole construction: build the graph on the original function,
/// apply the covering split to the augmented program, and compare.
pub fn seg_isomorphism(
    func: &Function,
    base: &str,
    analysis: &PvpAnalysis,
) -> Result<IsoReport, StructuralError> {
    let cfg = CfgIndex::build(func)?;
    let seg = build_seg(func, &cfg, base, analysis);
    let mut augmented = augment_for_seg(func, base);
    let transfer = analysis.transfer_nodes(func, base);
    let mut strategy = PerVarStrategy::default();
    strategy.i_down.insert(Node::Inst(0, 0));
    for t in transfer {
        strategy.i_down.insert(rebase_node(t));
    }
    let mut strategies = SplittingStrategy::new();
    strategies.insert(base.to_string(), strategy);
    ssify_function(&mut augmented, &strategies)?;
    Ok(check_isomorphism(&seg, func, &cfg, &augmented, base))
}

/// Strip the pseudo definitions and uses introduced for the construction.
pub fn strip_pseudo(func: &mut Function) {
    for block in &mut func.blocks {
        block.body.retain(|inst| !inst.pseudo);
        for inst in &mut block.body {
            inst.pseudo_uses.clear();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::TaintAnalysis;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    #[test]
    fn diamond_reaching_defs_seg_shape() {
        let program = parse(DIAMOND).unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let seg = build_seg(func, &cfg, "v", &PvpAnalysis::ReachingDefs);
        // Entry marker, transfers at the two defs, meet at L3.
        assert_eq!(seg.nodes.len(), 4);
        let entry_def = seg
            .nodes
            .iter()
            .position(|n| matches!(n, SegNode::Transfer(Node::Inst(0, 0))))
            .unwrap();
        let l1_def = seg
            .nodes
            .iter()
            .position(|n| matches!(n, SegNode::Transfer(Node::Inst(1, 0))))
            .unwrap();
        let meet = seg
            .nodes
            .iter()
            .position(|n| matches!(n, SegNode::Meet(3)))
            .unwrap();
        // The meet hears from the L1 def and, via L2, from the entry def.
        assert!(seg.edges.contains(&(l1_def, meet)));
        assert!(seg.edges.contains(&(entry_def, meet)));
        // The def in L1 is chained below the entry def.
        assert!(seg.edges.contains(&(entry_def, l1_def)));
        // Edge mapping: entry->L2 still carries the entry def.
        assert_eq!(seg.edge_map[&(0, 2)], entry_def);
        assert_eq!(seg.edge_map[&(1, 3)], l1_def);
    }

    #[test]
    fn single_block_seg_is_entry_plus_one_transfer() {
        let program = parse("func main {\nentry:\n  v = input\n  use v\n  ret\n}\n").unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let seg = build_seg(func, &cfg, "v", &PvpAnalysis::ReachingDefs);
        assert_eq!(
            seg.nodes,
            vec![SegNode::Entry, SegNode::Transfer(Node::Inst(0, 0))]
        );
        assert_eq!(seg.edges.len(), 1);
    }

    #[test]
    fn no_transfer_nodes_maps_everything_to_entry() {
        let program = parse(
            "func main {\nentry:\n  w = input\n  branch w == 0, A, B\nA:\n  jump B\nB:\n  ret\n}\n",
        )
        .unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let seg = build_seg(func, &cfg, "v", &PvpAnalysis::ReachingDefs);
        assert_eq!(seg.nodes, vec![SegNode::Entry]);
        assert!(seg.edge_map.values().all(|&n| n == 0));
    }

    #[test]
    fn diamond_isomorphism_holds() {
        let program = parse(DIAMOND).unwrap();
        let report =
            seg_isomorphism(&program.functions[0], "v", &PvpAnalysis::ReachingDefs).unwrap();
        assert!(report.isomorphic(), "{:?}", report.mismatches);
        assert_eq!(report.versions, report.seg_nodes);
        let uses = seg_isomorphism(&program.functions[0], "v", &PvpAnalysis::ReachingUses).unwrap();
        assert!(uses.isomorphic(), "{:?}", uses.mismatches);
    }

    #[test]
    fn plv_clients_are_rejected() {
        let e = require_pvp(&TaintAnalysis).unwrap_err();
        assert!(e.to_string().contains("not a partitioned-variable problem"));
    }

    #[test]
    fn strip_pseudo_restores_the_original() {
        let program = parse(DIAMOND).unwrap();
        let func = &program.functions[0];
        let mut augmented = augment_for_seg(func, "v");
        strip_pseudo(&mut augmented);
        assert_eq!(&augmented, func);
    }
}
