//! Dominance machinery: forward and reverse dominator trees, dominance
//! frontiers of nodes and of edges, and iterated frontiers.
//!
//! The frontier of an edge `(u, w)` is the frontier of a fictitious node
//! spliced onto the edge, computed literally by splicing and recomputing
//! the dominator tree; programs here are small enough that this costs
//! nothing and keeps the code an exact transcription of the definition.

use std::collections::BTreeSet;

use crate::ir::{CfgIndex, Terminator};

/// A plain directed graph with a distinguished entry, the substrate for all
/// dominance computations. Forward graphs mirror the CFG; reverse graphs are
/// edge-flipped and rooted at a virtual exit.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub entry: usize,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
}

impl GraphView {
    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    pub fn forward(cfg: &CfgIndex) -> GraphView {
        GraphView {
            entry: 0,
            succs: cfg.succs.clone(),
            preds: cfg.preds.clone(),
        }
    }

    /// Reverse graph over `n + 1` nodes; node `n` is the virtual exit and the
    /// entry of the reverse graph. Every `ret` block feeds the virtual exit.
    /// Blocks that cannot reach an exit get a synthetic edge from the lowest
    /// reverse-postorder node of their strongly connected component, so the
    /// reverse tree is total.
    pub fn reverse_with_virtual_exit(cfg: &CfgIndex, func: &crate::ir::Function) -> GraphView {
        let n = cfg.n_blocks();
        let mut exit_edges: Vec<usize> = Vec::new();
        for (i, b) in func.blocks.iter().enumerate() {
            if matches!(b.terminator, Terminator::Ret) {
                exit_edges.push(i);
            }
        }
        // Blocks with a path to some exit.
        let mut reaches_exit = vec![false; n];
        let mut stack = exit_edges.clone();
        for &e in &exit_edges {
            reaches_exit[e] = true;
        }
        while let Some(b) = stack.pop() {
            for &p in &cfg.preds[b] {
                if !reaches_exit[p] {
                    reaches_exit[p] = true;
                    stack.push(p);
                }
            }
        }
        if reaches_exit.iter().any(|r| !r) {
            let rpo = rpo_order(&GraphView::forward(cfg));
            let mut rpo_index = vec![usize::MAX; n];
            for (i, &b) in rpo.iter().enumerate() {
                rpo_index[b] = i;
            }
            for scc in sccs(&cfg.succs) {
                if scc.iter().all(|&b| !reaches_exit[b]) {
                    let pick = *scc
                        .iter()
                        .min_by_key(|&&b| rpo_index[b])
                        .expect("scc is nonempty");
                    exit_edges.push(pick);
                    let mut stack = vec![pick];
                    reaches_exit[pick] = true;
                    while let Some(b) = stack.pop() {
                        for &p in &cfg.preds[b] {
                            if !reaches_exit[p] {
                                reaches_exit[p] = true;
                                stack.push(p);
                            }
                        }
                    }
                }
            }
        }
        let vexit = n;
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (b, outs) in cfg.succs.iter().enumerate() {
            for &s in outs {
                // CFG edge (b, s) becomes reverse edge (s, b).
                succs[s].push(b);
                preds[b].push(s);
            }
        }
        for &e in &exit_edges {
            succs[vexit].push(e);
            preds[e].push(vexit);
        }
        GraphView {
            entry: vexit,
            succs,
            preds,
        }
    }

    /// Splice a fresh node onto the edge `(u, w)`, returning the new graph
    /// and the spliced node's id.
    pub fn splice_edge(&self, u: usize, w: usize) -> (GraphView, usize) {
        let mut g = self.clone();
        let fresh = g.succs.len();
        g.succs.push(vec![w]);
        g.preds.push(vec![u]);
        let slot = g.succs[u]
            .iter()
            .position(|&s| s == w)
            .expect("edge must exist");
        g.succs[u][slot] = fresh;
        let slot = g.preds[w]
            .iter()
            .position(|&p| p == u)
            .expect("edge must exist");
        g.preds[w][slot] = fresh;
        (g, fresh)
    }
}

/// Reverse postorder from the entry; unreachable nodes are absent.
pub fn rpo_order(g: &GraphView) -> Vec<usize> {
    let mut visited = vec![false; g.len()];
    let mut post = Vec::new();
    // Iterative DFS with an explicit continuation index per frame.
    let mut stack: Vec<(usize, usize)> = vec![(g.entry, 0)];
    visited[g.entry] = true;
    while let Some((node, next)) = stack.pop() {
        if next < g.succs[node].len() {
            stack.push((node, next + 1));
            let s = g.succs[node][next];
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(node);
        }
    }
    post.reverse();
    post
}

/// Dominator tree as an immediate-dominator map, computed by the iterative
/// two-finger algorithm over reverse postorder.
#[derive(Debug, Clone)]
pub struct DomTree {
    /// `idom[n]` is `None` for the root and for unreachable nodes.
    pub idom: Vec<Option<usize>>,
    pub root: usize,
    /// Reverse postorder; also the iteration order used.
    pub rpo: Vec<usize>,
    reachable: Vec<bool>,
}

pub fn dominator_tree(g: &GraphView) -> DomTree {
    let n = g.len();
    let rpo = rpo_order(g);
    let mut rpo_index = vec![usize::MAX; n];
    for (i, &b) in rpo.iter().enumerate() {
        rpo_index[b] = i;
    }
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[g.entry] = Some(g.entry);
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom = None;
            for &p in &g.preds[b] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, &rpo_index, p, cur),
                });
            }
            if let Some(ni) = new_idom {
                if idom[b] != Some(ni) {
                    idom[b] = Some(ni);
                    changed = true;
                }
            }
        }
    }
    let reachable: Vec<bool> = (0..n).map(|b| idom[b].is_some()).collect();
    idom[g.entry] = None;
    DomTree {
        idom,
        root: g.entry,
        rpo,
        reachable,
    }
}

fn intersect(idom: &[Option<usize>], rpo_index: &[usize], a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while a != b {
        while rpo_index[a] > rpo_index[b] {
            a = idom[a].expect("processed node has an idom");
        }
        while rpo_index[b] > rpo_index[a] {
            b = idom[b].expect("processed node has an idom");
        }
    }
    a
}

impl DomTree {
    pub fn is_reachable(&self, b: usize) -> bool {
        self.reachable[b]
    }

    /// Does `a` dominate `b`? Unreachable nodes dominate nothing and are
    /// dominated by nothing.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.reachable[a] || !self.reachable[b] {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(up) => cur = up,
                None => return false,
            }
        }
    }

    pub fn strictly_dominates(&self, a: usize, b: usize) -> bool {
        a != b && self.dominates(a, b)
    }

    /// Children grouped by parent, each child list in ascending node order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.idom.len()];
        for b in 0..self.idom.len() {
            if let Some(p) = self.idom[b] {
                children[p].push(b);
            }
        }
        children
    }
}

/// Dominance frontiers of every node, from the classic two-finger walk over
/// join points.
pub fn dominance_frontiers(g: &GraphView, dt: &DomTree) -> Vec<BTreeSet<usize>> {
    let mut df: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.len()];
    for b in 0..g.len() {
        if !dt.is_reachable(b) || g.preds[b].len() < 2 {
            continue;
        }
        let Some(idom_b) = dt.idom[b] else { continue };
        for &p in &g.preds[b] {
            if !dt.is_reachable(p) {
                continue;
            }
            let mut runner = p;
            while runner != idom_b {
                df[runner].insert(b);
                runner = match dt.idom[runner] {
                    Some(up) => up,
                    None => break,
                };
            }
        }
    }
    df
}

/// A frontier query target: a node, or an edge treated as a fictitious node
/// spliced at its middle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FrontierTarget {
    Block(usize),
    Edge(usize, usize),
}

/// `DF(target)` on graph `g`. The edge case recomputes dominators on the
/// spliced graph; results never include the fictitious node.
pub fn dominance_frontier(g: &GraphView, target: FrontierTarget) -> BTreeSet<usize> {
    match target {
        FrontierTarget::Block(b) => {
            let dt = dominator_tree(g);
            dominance_frontiers(g, &dt)[b].clone()
        }
        FrontierTarget::Edge(u, w) => {
            let (spliced, fresh) = g.splice_edge(u, w);
            let dt = dominator_tree(&spliced);
            let df = dominance_frontiers(&spliced, &dt);
            df[fresh].iter().copied().filter(|&n| n != fresh).collect()
        }
    }
}

/// Iterated dominance frontier: the limit of `DF_{i+1} = DF_i ∪ DF(DF_i)`,
/// seeded with the union of the seeds' frontiers.
pub fn iterated_frontier(g: &GraphView, seeds: &[FrontierTarget]) -> BTreeSet<usize> {
    let dt = dominator_tree(g);
    let node_df = dominance_frontiers(g, &dt);
    let mut result: BTreeSet<usize> = BTreeSet::new();
    let mut work: Vec<usize> = Vec::new();
    for &seed in seeds {
        let df = match seed {
            FrontierTarget::Block(b) => node_df[b].clone(),
            FrontierTarget::Edge(u, w) => dominance_frontier(g, FrontierTarget::Edge(u, w)),
        };
        for b in df {
            if result.insert(b) {
                work.push(b);
            }
        }
    }
    while let Some(b) = work.pop() {
        for &z in &node_df[b] {
            if result.insert(z) {
                work.push(z);
            }
        }
    }
    result
}

/// Tarjan strongly connected components over a successor map.
pub fn sccs(succs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        succs: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(s: &mut State, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for i in 0..s.succs[v].len() {
            let w = s.succs[v][i];
            if s.index[w].is_none() {
                visit(s, w);
                s.low[v] = s.low[v].min(s.low[w]);
            } else if s.on_stack[w] {
                s.low[v] = s.low[v].min(s.index[w].unwrap());
            }
        }
        if s.low[v] == s.index[v].unwrap() {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().unwrap();
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            s.out.push(comp);
        }
    }
    let n = succs.len();
    let mut state = State {
        succs,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if state.index[v].is_none() {
            visit(&mut state, v);
        }
    }
    state.out
}

/// Brute-force dominance oracles used by the verification suites: `a`
/// dominates `b` exactly when removing `a` disconnects `b` from the entry.
pub mod oracle {
    use super::GraphView;

    pub fn dominates(g: &GraphView, a: usize, b: usize) -> bool {
        if !reachable_from_entry(g, b, None) {
            return false;
        }
        a == b || !reachable_from_entry(g, b, Some(a))
    }

    fn reachable_from_entry(g: &GraphView, target: usize, removed: Option<usize>) -> bool {
        if Some(g.entry) == removed {
            return false;
        }
        let mut seen = vec![false; g.len()];
        let mut stack = vec![g.entry];
        seen[g.entry] = true;
        while let Some(v) = stack.pop() {
            if v == target {
                return true;
            }
            for &s in &g.succs[v] {
                if Some(s) != removed && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        false
    }

    /// Immediate dominators by enumeration: the strict dominator of `b`
    /// dominated by every other strict dominator of `b`.
    pub fn idoms(g: &GraphView) -> Vec<Option<usize>> {
        let n = g.len();
        let mut result = vec![None; n];
        for (b, slot) in result.iter_mut().enumerate() {
            if b == g.entry || !reachable_from_entry(g, b, None) {
                continue;
            }
            let sdoms: Vec<usize> = (0..n).filter(|&a| a != b && dominates(g, a, b)).collect();
            *slot = sdoms
                .iter()
                .copied()
                .find(|&c| sdoms.iter().all(|&d| dominates(g, d, c)));
        }
        result
    }

    /// Frontier by definition: `n'` is in `DF(n)` iff `n` dominates some
    /// predecessor of `n'` without strictly dominating `n'`.
    pub fn frontier(g: &GraphView, n: usize) -> std::collections::BTreeSet<usize> {
        let mut out = std::collections::BTreeSet::new();
        for cand in 0..g.len() {
            if !reachable_from_entry(g, cand, None) {
                continue;
            }
            let strictly = cand != n && dominates(g, n, cand);
            if strictly {
                continue;
            }
            if g.preds[cand].iter().any(|&p| dominates(g, n, p)) {
                out.insert(cand);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::CfgIndex;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn diamond() -> (crate::ir::Program, CfgIndex) {
        let program = parse(DIAMOND).unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        (program, cfg)
    }

    #[test]
    fn diamond_forward_idoms() {
        let (_, cfg) = diamond();
        let g = GraphView::forward(&cfg);
        let dt = dominator_tree(&g);
        // Frozen from the brute-force all-paths oracle.
        assert_eq!(dt.idom, vec![None, Some(0), Some(0), Some(0)]);
        assert_eq!(dt.idom, oracle::idoms(&g));
    }

    #[test]
    fn diamond_reverse_idoms() {
        let (program, cfg) = diamond();
        let g = GraphView::reverse_with_virtual_exit(&cfg, &program.functions[0]);
        let dt = dominator_tree(&g);
        // L3 (index 3) post-dominates entry, L1 and L2; vexit is the root.
        assert_eq!(dt.idom[0], Some(3));
        assert_eq!(dt.idom[1], Some(3));
        assert_eq!(dt.idom[2], Some(3));
        assert_eq!(dt.idom[3], Some(4));
        assert_eq!(dt.idom, oracle::idoms(&g));
    }

    #[test]
    fn single_block_domtree_is_root_only() {
        let program = parse("func main {\nentry:\n  ret\n}\n").unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        let dt = dominator_tree(&GraphView::forward(&cfg));
        assert_eq!(dt.idom, vec![None]);
    }

    #[test]
    fn diamond_frontiers() {
        let (_, cfg) = diamond();
        let g = GraphView::forward(&cfg);
        assert_eq!(dominance_frontier(&g, FrontierTarget::Block(1)), [3].into());
        assert_eq!(
            dominance_frontier(&g, FrontierTarget::Block(0)),
            BTreeSet::new()
        );
        assert_eq!(
            dominance_frontier(&g, FrontierTarget::Edge(0, 1)),
            [3].into()
        );
        // Against the definitional oracle, node case.
        let dt = dominator_tree(&g);
        let all = dominance_frontiers(&g, &dt);
        for (b, df) in all.iter().enumerate() {
            assert_eq!(*df, oracle::frontier(&g, b), "DF({b})");
        }
    }

    #[test]
    fn diamond_iterated_frontier_for_constprop_defs() {
        let (_, cfg) = diamond();
        let g = GraphView::forward(&cfg);
        let seeds = [FrontierTarget::Block(0), FrontierTarget::Block(1)];
        assert_eq!(iterated_frontier(&g, &seeds), [3].into());
        assert_eq!(iterated_frontier(&g, &[]), BTreeSet::new());
    }

    #[test]
    fn self_loop_is_in_its_own_iterated_frontier() {
        let text = "func main {\nentry:\n  v = input\n  jump L\nL:\n  v = add v v\n  branch v < 10, L, X\nX:\n  ret\n}\n";
        let program = parse(text).unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        let g = GraphView::forward(&cfg);
        let l = cfg.block_index["L"];
        let df_plus = iterated_frontier(&g, &[FrontierTarget::Block(l)]);
        assert!(df_plus.contains(&l));
    }

    #[test]
    fn iterated_frontier_matches_naive_reapplication() {
        use crate::interp::{generate_program, GenBounds};
        for seed in 0..40u64 {
            let program = generate_program(seed, GenBounds::default());
            let cfg = CfgIndex::build(&program.functions[0]).unwrap();
            let g = GraphView::forward(&cfg);
            let n = cfg.n_blocks();
            let seeds: Vec<FrontierTarget> = (0..n)
                .filter(|b| b % 3 == seed as usize % 3)
                .map(FrontierTarget::Block)
                .collect();
            let fast = iterated_frontier(&g, &seeds);
            // Naive limit: union the definitional frontiers until stable.
            let mut naive: BTreeSet<usize> = BTreeSet::new();
            for s in &seeds {
                if let FrontierTarget::Block(b) = s {
                    naive.extend(oracle::frontier(&g, *b));
                }
            }
            loop {
                let mut next = naive.clone();
                for &z in &naive {
                    next.extend(oracle::frontier(&g, z));
                }
                if next == naive {
                    break;
                }
                naive = next;
            }
            assert_eq!(fast, naive, "seed {seed}");
        }
    }

    #[test]
    fn infinite_loop_gets_synthetic_exit_edge() {
        let text = "func main {\nentry:\n  v = input\n  branch v == 0, spin, done\nspin:\n  jump spin2\nspin2:\n  jump spin\ndone:\n  ret\n}\n";
        let program = parse(text).unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        let g = GraphView::reverse_with_virtual_exit(&cfg, &program.functions[0]);
        let dt = dominator_tree(&g);
        for b in 0..cfg.n_blocks() {
            assert!(
                dt.is_reachable(b),
                "block {b} must be post-dominated by the virtual exit"
            );
        }
    }
}
