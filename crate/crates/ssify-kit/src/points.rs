//! Program points and the hops between them.
//!
//! A program point sits between two consecutive control flow nodes. Block
//! `b` with `k` body instructions contributes points `(b, 0)` (after the
//! phi group) through `(b, k)` (before the terminator), and each CFG edge
//! contributes one point. Phi groups act on the hops from edge points into
//! `(b, 0)`; terminators and sigma groups act on the hops from `(b, k)` out
//! to the edge points, one hop per successor.

use std::collections::BTreeMap;

use crate::ir::*;

pub type PointId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointKind {
    /// Slot `s` of block `b`: before `body[s]`, or before the terminator
    /// when `s == body.len()`, or past a `ret` when `s == body.len() + 1`.
    Slot { block: usize, slot: usize },
    /// The point on the CFG edge `(from, to)`.
    Edge { from: usize, to: usize },
}

/// The control-flow site a hop passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Site {
    /// Body instruction `index` of `block`.
    Inst { block: usize, index: usize },
    /// Terminator plus the sigma destinations for edge `(block, succ)`.
    SigmaEdge { block: usize, succ: usize },
    /// Phi operand selection for edge `(pred, block)`.
    PhiEdge { pred: usize, block: usize },
    /// A `ret`, with any attached copies.
    Ret { block: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Hop {
    pub from: PointId,
    pub to: PointId,
    pub site: Site,
}

#[derive(Debug, Clone)]
pub struct Points {
    pub kinds: Vec<PointKind>,
    pub hops: Vec<Hop>,
    pub slot_points: Vec<Vec<PointId>>,
    pub edge_points: BTreeMap<(usize, usize), PointId>,
    pub hops_out: Vec<Vec<usize>>,
    pub hops_in: Vec<Vec<usize>>,
}

impl Points {
    pub fn build(func: &Function, cfg: &CfgIndex) -> Points {
        let n = func.blocks.len();
        let mut kinds = Vec::new();
        let mut slot_points: Vec<Vec<PointId>> = vec![Vec::new(); n];
        for (b, block) in func.blocks.iter().enumerate() {
            let extra = if matches!(block.terminator, Terminator::Ret) {
                2
            } else {
                1
            };
            for s in 0..block.body.len() + extra {
                slot_points[b].push(kinds.len());
                kinds.push(PointKind::Slot { block: b, slot: s });
            }
        }
        let mut edge_points = BTreeMap::new();
        for b in 0..n {
            for &s in &cfg.succs[b] {
                edge_points.insert((b, s), kinds.len());
                kinds.push(PointKind::Edge { from: b, to: s });
            }
        }
        let mut hops = Vec::new();
        for (b, block) in func.blocks.iter().enumerate() {
            let k = block.body.len();
            for j in 0..k {
                hops.push(Hop {
                    from: slot_points[b][j],
                    to: slot_points[b][j + 1],
                    site: Site::Inst { block: b, index: j },
                });
            }
            if matches!(block.terminator, Terminator::Ret) {
                hops.push(Hop {
                    from: slot_points[b][k],
                    to: slot_points[b][k + 1],
                    site: Site::Ret { block: b },
                });
            }
            for &s in &cfg.succs[b] {
                hops.push(Hop {
                    from: slot_points[b][k],
                    to: edge_points[&(b, s)],
                    site: Site::SigmaEdge { block: b, succ: s },
                });
            }
        }
        for (b, _) in func.blocks.iter().enumerate() {
            for &p in &cfg.preds[b] {
                hops.push(Hop {
                    from: edge_points[&(p, b)],
                    to: slot_points[b][0],
                    site: Site::PhiEdge { pred: p, block: b },
                });
            }
        }
        let mut hops_out = vec![Vec::new(); kinds.len()];
        let mut hops_in = vec![Vec::new(); kinds.len()];
        for (i, h) in hops.iter().enumerate() {
            hops_out[h.from].push(i);
            hops_in[h.to].push(i);
        }
        Points {
            kinds,
            hops,
            slot_points,
            edge_points,
            hops_out,
            hops_in,
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn render(&self, func: &Function, p: PointId) -> String {
        match self.kinds[p] {
            PointKind::Slot { block, slot } => {
                format!("{}:{}", func.blocks[block].label, slot)
            }
            PointKind::Edge { from, to } => {
                format!("{}->{}", func.blocks[from].label, func.blocks[to].label)
            }
        }
    }
}

/// Which variable occurrences a liveness query tracks.
#[derive(Debug, Clone, Copy)]
pub enum VarFilter<'a> {
    Exact(&'a Var),
    Base(&'a str),
}

impl VarFilter<'_> {
    pub fn matches(&self, v: &Var) -> bool {
        match self {
            VarFilter::Exact(x) => *x == v,
            VarFilter::Base(b) => v.base == *b,
        }
    }

    fn matches_op(&self, op: &Operand) -> bool {
        op.as_var().is_some_and(|v| self.matches(v))
    }
}

/// Variables read and written on one hop, as filtered occurrence counts.
pub fn hop_reads_writes(func: &Function, site: Site, filter: VarFilter<'_>) -> (bool, bool) {
    let mut reads = false;
    let mut writes = false;
    match site {
        Site::Inst { block, index } => {
            let inst = &func.blocks[block].body[index];
            reads |= inst.host_uses().iter().any(|u| filter.matches_op(u));
            reads |= inst.copies.iter().any(|c| filter.matches_op(&c.src));
            reads |= inst.pseudo_uses.iter().any(|u| filter.matches_op(u));
            writes |= inst.host_dest().is_some_and(|d| filter.matches(d));
            writes |= inst.copies.iter().any(|c| filter.matches_op(&c.dest));
        }
        Site::SigmaEdge { block, succ } => {
            let b = &func.blocks[block];
            if let Terminator::Branch { cond, .. } = &b.terminator {
                reads |= filter.matches_op(cond);
            }
            reads |= b.term_copies.iter().any(|c| filter.matches_op(&c.src));
            writes |= b.term_copies.iter().any(|c| filter.matches_op(&c.dest));
            let succ_label = &func.blocks[succ].label;
            for sigma in &b.sigmas {
                reads |= filter.matches_op(&sigma.src);
                if let Some(d) = sigma.dest_for(succ_label) {
                    writes |= filter.matches_op(d);
                }
            }
        }
        Site::PhiEdge { pred, block } => {
            let pred_label = &func.blocks[pred].label;
            for phi in &func.blocks[block].phis {
                if let Some(a) = phi.arg_for(pred_label) {
                    reads |= filter.matches_op(a);
                }
                writes |= filter.matches_op(&phi.dest);
            }
        }
        Site::Ret { block } => {
            let b = &func.blocks[block];
            reads |= b.term_copies.iter().any(|c| filter.matches_op(&c.src));
            writes |= b.term_copies.iter().any(|c| filter.matches_op(&c.dest));
        }
    }
    (reads, writes)
}

/// The set of program points where the filtered variable is alive.
#[derive(Debug, Clone)]
pub struct LiveRange {
    pub live: Vec<bool>,
}

impl LiveRange {
    pub fn at(&self, p: PointId) -> bool {
        self.live[p]
    }

    pub fn count(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }

    pub fn is_empty(&self) -> bool {
        self.live.iter().all(|&l| !l)
    }

    /// True when the live points form one connected piece of the point
    /// graph (edges taken as undirected).
    pub fn is_connected(&self, points: &Points) -> bool {
        let Some(start) = self.live.iter().position(|&l| l) else {
            return true;
        };
        let mut seen = vec![false; points.len()];
        seen[start] = true;
        let mut stack = vec![start];
        let mut reached = 1usize;
        while let Some(p) = stack.pop() {
            let neighbours = points.hops_out[p]
                .iter()
                .map(|&h| points.hops[h].to)
                .chain(points.hops_in[p].iter().map(|&h| points.hops[h].from));
            for q in neighbours {
                if self.live[q] && !seen[q] {
                    seen[q] = true;
                    reached += 1;
                    stack.push(q);
                }
            }
        }
        reached == self.count()
    }
}

/// Standard backward may-liveness over program points. Phi operands count
/// as uses on their incoming edge; sigma destinations as definitions on
/// their outgoing edge.
pub fn liveness(func: &Function, points: &Points, filter: VarFilter<'_>) -> LiveRange {
    let mut live = vec![false; points.len()];
    // Precompute per-hop read/write flags once.
    let rw: Vec<(bool, bool)> = points
        .hops
        .iter()
        .map(|h| hop_reads_writes(func, h.site, filter))
        .collect();
    let mut work: Vec<PointId> = Vec::new();
    for (i, h) in points.hops.iter().enumerate() {
        if rw[i].0 && !live[h.from] {
            live[h.from] = true;
            work.push(h.from);
        }
    }
    while let Some(p) = work.pop() {
        for &hi in &points.hops_in[p] {
            let h = &points.hops[hi];
            // Going backward across the hop: the variable is live before it
            // if it is live after and the hop does not define it. Reads were
            // seeded above.
            if !rw[hi].1 && !live[h.from] {
                live[h.from] = true;
                work.push(h.from);
            }
        }
    }
    LiveRange { live }
}

/// The four occurrence sets for a base variable, including the liveness
/// driven `last_uses` ("used, and after which it is no longer live").
pub fn defs_uses(func: &Function, cfg: &CfgIndex, points: &Points, base: &str) -> DefsUses {
    let mut occ = scan_occurrences(func, base);
    let range = liveness(func, points, VarFilter::Base(base));
    for &node in occ.uses.iter() {
        let after: Vec<PointId> = match node {
            Node::In(b) => vec![points.slot_points[b][0]],
            Node::Inst(b, i) => {
                let body_len = func.blocks[b].body.len();
                if i < body_len {
                    vec![points.slot_points[b][i + 1]]
                } else {
                    after_out_points(func, cfg, points, b)
                }
            }
            Node::Out(b) => after_out_points(func, cfg, points, b),
        };
        if after.iter().all(|&p| !range.at(p)) {
            occ.last_uses.insert(node);
        }
    }
    occ
}

fn after_out_points(func: &Function, cfg: &CfgIndex, points: &Points, b: usize) -> Vec<PointId> {
    if matches!(func.blocks[b].terminator, Terminator::Ret) {
        let k = func.blocks[b].body.len();
        vec![points.slot_points[b][k + 1]]
    } else {
        cfg.succs[b]
            .iter()
            .map(|&s| points.edge_points[&(b, s)])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn setup(text: &str) -> (Program, CfgIndex, Points) {
        let program = parse(text).unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        let points = Points::build(&program.functions[0], &cfg);
        (program, cfg, points)
    }

    #[test]
    fn diamond_liveness_of_v() {
        let (program, cfg, points) = setup(DIAMOND);
        let func = &program.functions[0];
        let range = liveness(func, &points, VarFilter::Base("v"));
        let at = |l: &str| cfg.block_index[l];
        // Live into L2 and L3, and at the branch point of entry.
        assert!(range.at(points.slot_points[at("L2")][0]));
        assert!(range.at(points.slot_points[at("L3")][0]));
        assert!(range.at(points.slot_points[at("entry")][1]));
        // Live on the edge to L2; dead on the edge to L1, where the first
        // action is a redefinition.
        assert!(range.at(points.edge_points[&(at("entry"), at("L2"))]));
        assert!(!range.at(points.edge_points[&(at("entry"), at("L1"))]));
        // Dead before its first definition.
        assert!(!range.at(points.slot_points[at("entry")][0]));
    }

    #[test]
    fn dead_def_is_live_nowhere() {
        let (program, _, points) = setup("func main {\nentry:\n  v = const 1\n  ret\n}\n");
        let range = liveness(&program.functions[0], &points, VarFilter::Base("v"));
        assert!(range.is_empty());
    }

    #[test]
    fn last_use_is_the_second_use_only() {
        let (program, cfg, points) =
            setup("func main {\nentry:\n  v = input\n  use v\n  use v\n  ret\n}\n");
        let occ = defs_uses(&program.functions[0], &cfg, &points, "v");
        assert_eq!(occ.last_uses, [Node::Inst(0, 2)].into_iter().collect());
        assert_eq!(
            occ.uses,
            [Node::Inst(0, 1), Node::Inst(0, 2)].into_iter().collect()
        );
    }

    #[test]
    fn diamond_last_uses() {
        let (program, cfg, points) = setup(DIAMOND);
        let occ = defs_uses(&program.functions[0], &cfg, &points, "v");
        // The use in L3 is last; the use in L2 is not (v flows on to L3),
        // and neither is the branch test.
        assert_eq!(occ.last_uses, [Node::Inst(3, 0)].into_iter().collect());
    }

    #[test]
    fn phi_operand_counts_as_edge_use() {
        let text = "func main {\nentry:\n  v = input\n  w = input\n  branch w == 0, L1, L2\nL1:\n  jump L3\nL2:\n  jump L3\nL3:\n  x = phi(L1: v, L2: w)\n  use x\n  ret\n}\n";
        let (program, cfg, points) = setup(text);
        let func = &program.functions[0];
        let v_range = liveness(func, &points, VarFilter::Base("v"));
        let at = |l: &str| cfg.block_index[l];
        assert!(v_range.at(points.edge_points[&(at("L1"), at("L3"))]));
        assert!(!v_range.at(points.slot_points[at("L3")][0]));
        assert!(v_range.at(points.slot_points[at("L1")][0]));
    }
}
