//! The partitioned-lattice-per-variable analysis framework.
//!
//! A client brings a lattice and per-instruction transfer kernels; the
//! framework runs them two independent ways. The dense solver iterates the
//! maximum-fixed-point equations over every program point and variable. The
//! sparse route extracts one constraint per definition point (per use point
//! for backward clients) — each the projection of the dense transfer onto
//! the variables live at the instruction — and solves them with a worklist
//! over def-use chains. On a program with the single-information property
//! the two solutions agree over every live range, which `check_equivalence`
//! verifies exactly.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::ir::*;
use crate::points::{liveness, PointKind, Points, Site, VarFilter};
use crate::strategy::StrategyExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A finite-height meet semilattice with a sampling hook for property tests.
pub trait Lattice {
    type Elem: Clone + Eq + fmt::Debug + fmt::Display;

    fn top(&self) -> Self::Elem;
    fn bottom(&self) -> Self::Elem;
    fn meet(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    /// Longest strictly descending chain the lattice allows.
    fn height(&self) -> usize;
    fn samples(&self) -> Vec<Self::Elem>;

    fn leq(&self, a: &Self::Elem, b: &Self::Elem) -> bool {
        self.meet(a, b) == *a
    }
}

pub type Elem<C> = <<C as ClientAnalysis>::L as Lattice>::Elem;

/// One data-flow client: direction, lattice, splitting strategy, and the
/// transfer kernels. The same kernels feed the dense transfer functions and
/// the sparse constraints, so the sparse system is the projection of the
/// dense one by construction.
pub trait ClientAnalysis {
    type L: Lattice;

    fn name(&self) -> &'static str;
    fn direction(&self) -> Direction;
    fn lattice(&self, func: &Function) -> Self::L;
    fn strategy(&self) -> StrategyExpr;
    /// Whether each variable's analysis is independent of all others.
    fn is_pvp(&self) -> bool {
        false
    }

    // Forward kernels; clients that never need one keep the default.
    fn const_def(&self, lat: &Self::L, value: i64) -> Elem<Self>;
    fn input_def(&self, lat: &Self::L) -> Elem<Self>;
    fn binop_def(&self, lat: &Self::L, op: BinOp, a: &Elem<Self>, b: &Elem<Self>) -> Elem<Self>;
    fn sanitize_def(&self, lat: &Self::L, src: &Elem<Self>) -> Elem<Self> {
        let _ = lat;
        src.clone()
    }

    /// Value of an invoke's receiver after the call returns.
    fn invoke_receiver_after(&self, lat: &Self::L, before: &Elem<Self>) -> Elem<Self> {
        let _ = lat;
        before.clone()
    }
    fn refines_invoke_receiver(&self) -> bool {
        false
    }

    /// Value of the tested variable along one branch edge.
    fn refine_on_edge(
        &self,
        lat: &Self::L,
        op: RelOp,
        value: i64,
        then_side: bool,
        val: &Elem<Self>,
    ) -> Elem<Self> {
        let _ = (lat, op, value, then_side);
        val.clone()
    }
    fn refines_on_edge(&self, op: RelOp, then_side: bool) -> bool {
        let _ = (op, then_side);
        false
    }

    /// Backward: what one use of a variable at this instruction demands.
    fn use_contribution(&self, lat: &Self::L, kind: &InstKind) -> Elem<Self> {
        let _ = kind;
        lat.top()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverError {
    /// The iteration guard tripped: some transfer function is not monotone
    /// or the declared height is wrong.
    MonotonicityViolation { detail: String },
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::MonotonicityViolation { detail } => {
                write!(f, "monotonicity violation: {detail}")
            }
        }
    }
}

impl std::error::Error for SolverError {}

/// Dense result: one lattice element per (program point, variable).
#[derive(Debug, Clone)]
pub struct DenseResult<E> {
    pub vars: Vec<Var>,
    pub values: Vec<Vec<E>>,
    var_index: HashMap<Var, usize>,
}

impl<E> DenseResult<E> {
    pub fn var_index(&self, v: &Var) -> Option<usize> {
        self.var_index.get(v).copied()
    }

    pub fn at(&self, point: usize, v: &Var) -> Option<&E> {
        self.var_index(v).map(|i| &self.values[point][i])
    }
}

fn op_index(index: &HashMap<Var, usize>, op: &Operand) -> Option<usize> {
    op.as_var().and_then(|v| index.get(v).copied())
}

/// Forward dense transfer for one hop. The input state sits at the hop's
/// source point; the result is the value of `vars[vi]` at its target.
#[allow(clippy::too_many_arguments)]
pub(crate) fn hop_forward<C: ClientAnalysis>(
    client: &C,
    lat: &C::L,
    func: &Function,
    site: Site,
    vars: &[Var],
    index: &HashMap<Var, usize>,
    state: &[Elem<C>],
    vi: usize,
) -> Elem<C> {
    let read = |op: &Operand| -> Elem<C> {
        match op_index(index, op) {
            Some(i) => state[i].clone(),
            None => lat.top(),
        }
    };
    let v = &vars[vi];
    match site {
        Site::Inst { block, index: j } => {
            let inst = &func.blocks[block].body[j];
            if inst.host_dest() == Some(v) {
                return match &inst.kind {
                    InstKind::Const { value, .. } => client.const_def(lat, *value),
                    InstKind::Input { .. } => client.input_def(lat),
                    InstKind::BinOp { op, lhs, rhs, .. } => {
                        client.binop_def(lat, *op, &read(lhs), &read(rhs))
                    }
                    InstKind::Sanitize { src, .. } => client.sanitize_def(lat, &read(src)),
                    _ => unreachable!("kinds with destinations"),
                };
            }
            for c in &inst.copies {
                if c.dest.as_var() == Some(v) {
                    let src_val = read(&c.src);
                    let refined =
                        matches!(&inst.kind, InstKind::Invoke { recv, .. } if *recv == c.src);
                    return if refined {
                        client.invoke_receiver_after(lat, &src_val)
                    } else {
                        src_val
                    };
                }
            }
            if let InstKind::Invoke { recv, .. } = &inst.kind {
                if recv.as_var() == Some(v) {
                    return client.invoke_receiver_after(lat, &state[vi]);
                }
            }
            state[vi].clone()
        }
        Site::Ret { block } => {
            for c in &func.blocks[block].term_copies {
                if c.dest.as_var() == Some(v) {
                    return read(&c.src);
                }
            }
            state[vi].clone()
        }
        Site::SigmaEdge { block, succ } => {
            let b = &func.blocks[block];
            let branch = match &b.terminator {
                Terminator::Branch {
                    cond,
                    op,
                    value,
                    then_target,
                    ..
                } => {
                    let then_side = func.blocks[succ].label == *then_target;
                    Some((cond.clone(), *op, *value, then_side))
                }
                _ => None,
            };
            let succ_label = &func.blocks[succ].label;
            for sigma in &b.sigmas {
                if sigma.dest_for(succ_label).and_then(|d| d.as_var()) == Some(v) {
                    let src_val = read(&sigma.src);
                    if let Some((cond, op, value, then_side)) = &branch {
                        if *cond == sigma.src {
                            return client.refine_on_edge(lat, *op, *value, *then_side, &src_val);
                        }
                    }
                    return src_val;
                }
            }
            for c in &b.term_copies {
                if c.dest.as_var() == Some(v) {
                    return read(&c.src);
                }
            }
            if let Some((cond, op, value, then_side)) = &branch {
                if cond.as_var() == Some(v) {
                    return client.refine_on_edge(lat, *op, *value, *then_side, &state[vi]);
                }
            }
            state[vi].clone()
        }
        Site::PhiEdge { pred, block } => {
            let pred_label = &func.blocks[pred].label;
            for phi in &func.blocks[block].phis {
                if phi.dest.as_var() == Some(v) {
                    return read(phi.arg_for(pred_label).expect("phi keyed by predecessor"));
                }
            }
            state[vi].clone()
        }
    }
}

/// Backward dense transfer: the state at the hop's target point flows to
/// its source. Definitions kill; value flows run destination-to-source
/// through copies, sanitize, phis and sigmas; uses meet in their demands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn hop_backward<C: ClientAnalysis>(
    client: &C,
    lat: &C::L,
    func: &Function,
    site: Site,
    vars: &[Var],
    index: &HashMap<Var, usize>,
    state: &[Elem<C>],
    vi: usize,
) -> Elem<C> {
    let read = |op: &Operand| -> Option<Elem<C>> { op_index(index, op).map(|i| state[i].clone()) };
    let v = &vars[vi];
    let v_op = Operand::Var(v.clone());
    match site {
        Site::Inst { block, index: j } => {
            let inst = &func.blocks[block].body[j];
            let defined = inst.host_dest() == Some(v)
                || inst.copies.iter().any(|c| c.dest.as_var() == Some(v));
            let mut acc = if defined {
                lat.top()
            } else {
                state[vi].clone()
            };
            for c in &inst.copies {
                if c.src == v_op {
                    if let Some(d) = read(&c.dest) {
                        acc = lat.meet(&acc, &d);
                    }
                }
            }
            if let InstKind::Sanitize { dest, src } = &inst.kind {
                if *src == v_op {
                    acc = lat.meet(&acc, &state[index[dest]]);
                }
            }
            if inst.host_uses().iter().any(|u| **u == v_op) {
                acc = lat.meet(&acc, &client.use_contribution(lat, &inst.kind));
            }
            acc
        }
        Site::Ret { block } => {
            let copies = &func.blocks[block].term_copies;
            let defined = copies.iter().any(|c| c.dest.as_var() == Some(v));
            let mut acc = if defined {
                lat.top()
            } else {
                state[vi].clone()
            };
            for c in copies {
                if c.src == v_op {
                    if let Some(d) = read(&c.dest) {
                        acc = lat.meet(&acc, &d);
                    }
                }
            }
            acc
        }
        Site::SigmaEdge { block, succ } => {
            let b = &func.blocks[block];
            let succ_label = &func.blocks[succ].label;
            let defined = b
                .sigmas
                .iter()
                .any(|s| s.dest_for(succ_label).and_then(|d| d.as_var()) == Some(v))
                || b.term_copies.iter().any(|c| c.dest.as_var() == Some(v));
            let mut acc = if defined {
                lat.top()
            } else {
                state[vi].clone()
            };
            for sigma in &b.sigmas {
                if sigma.src == v_op {
                    if let Some(d) = sigma.dest_for(succ_label).and_then(read) {
                        acc = lat.meet(&acc, &d);
                    }
                }
            }
            for c in &b.term_copies {
                if c.src == v_op {
                    if let Some(d) = read(&c.dest) {
                        acc = lat.meet(&acc, &d);
                    }
                }
            }
            acc
        }
        Site::PhiEdge { pred, block } => {
            let pred_label = &func.blocks[pred].label;
            let defined = func.blocks[block]
                .phis
                .iter()
                .any(|p| p.dest.as_var() == Some(v));
            let mut acc = if defined {
                lat.top()
            } else {
                state[vi].clone()
            };
            for phi in &func.blocks[block].phis {
                if phi.arg_for(pred_label) == Some(&v_op) {
                    if let Some(d) = read(&phi.dest) {
                        acc = lat.meet(&acc, &d);
                    }
                }
            }
            acc
        }
    }
}

/// Maximum fixed point over every program point: initialize to top and
/// iterate `x_to := x_to ∧ F(x_from)` (or the reverse for backward clients)
/// until stable. Lowerings beyond `height × points × variables` abort with
/// a monotonicity diagnostic.
pub fn solve_dense<C: ClientAnalysis>(
    func: &Function,
    points: &Points,
    client: &C,
) -> Result<DenseResult<Elem<C>>, SolverError> {
    let lat = client.lattice(func);
    let vars = all_vars(func);
    let var_index: HashMap<Var, usize> = vars
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let n_points = points.len();
    let mut values: Vec<Vec<Elem<C>>> = vec![vec![lat.top(); vars.len()]; n_points];
    let budget = lat
        .height()
        .saturating_mul(n_points)
        .saturating_mul(vars.len().max(1));
    let mut lowerings = 0usize;

    let forward = client.direction() == Direction::Forward;
    let mut queue: VecDeque<usize> = (0..n_points).collect();
    let mut queued = vec![true; n_points];
    while let Some(p) = queue.pop_front() {
        queued[p] = false;
        let hop_ids = if forward {
            &points.hops_out[p]
        } else {
            &points.hops_in[p]
        };
        for &hi in hop_ids {
            let hop = points.hops[hi];
            let target = if forward { hop.to } else { hop.from };
            let mut changed = false;
            for vi in 0..vars.len() {
                let new = if forward {
                    hop_forward(
                        client, &lat, func, hop.site, &vars, &var_index, &values[p], vi,
                    )
                } else {
                    hop_backward(
                        client, &lat, func, hop.site, &vars, &var_index, &values[p], vi,
                    )
                };
                let met = lat.meet(&values[target][vi], &new);
                if met != values[target][vi] {
                    lowerings += 1;
                    if lowerings > budget {
                        return Err(SolverError::MonotonicityViolation {
                            detail: format!(
                                "{} lowered {} more than {} times over {} points",
                                client.name(),
                                vars[vi],
                                lat.height(),
                                n_points
                            ),
                        });
                    }
                    values[target][vi] = met;
                    changed = true;
                }
            }
            if changed && !queued[target] {
                queued[target] = true;
                queue.push_back(target);
            }
        }
    }
    Ok(DenseResult {
        vars,
        values,
        var_index,
    })
}

/// How a sparse constraint computes its right-hand side from the values of
/// its dependencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintKind<E> {
    ConstDef(i64),
    InputDef,
    BinOpDef(BinOp),
    SanitizeDef,
    /// Copy pair; `refined` marks the receiver copy attached to an invoke.
    CopyDef {
        refined: bool,
    },
    /// Meet of all (defined) phi operands.
    PhiMeet,
    /// Pass-through or branch refinement of the sigma source.
    SigmaDest {
        test: Option<(RelOp, i64)>,
        then_side: bool,
    },
    /// Backward: meet of the flow destinations and a fixed demand.
    BackwardUse {
        contribution: E,
    },
}

/// One inequality `[target] ⊑ G(deps)`. A `None` dependency is an `undef`
/// operand, read as top.
#[derive(Debug, Clone)]
pub struct Constraint<E> {
    pub target: usize,
    pub deps: Vec<Option<usize>>,
    pub kind: ConstraintKind<E>,
    pub site: String,
}

#[derive(Debug, Clone)]
pub struct SparseSystem<E> {
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint<E>>,
    var_index: HashMap<Var, usize>,
}

impl<E> SparseSystem<E> {
    pub fn new(vars: Vec<Var>) -> SparseSystem<E> {
        let var_index = vars
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        SparseSystem {
            vars,
            constraints: Vec::new(),
            var_index,
        }
    }

    pub fn var_index(&self, v: &Var) -> Option<usize> {
        self.var_index.get(v).copied()
    }
}

/// Sparse result: one lattice element per variable version.
#[derive(Debug, Clone)]
pub struct SparseResult<E> {
    pub vars: Vec<Var>,
    pub values: Vec<E>,
    var_index: HashMap<Var, usize>,
}

impl<E> SparseResult<E> {
    pub fn of(&self, v: &Var) -> Option<&E> {
        self.var_index.get(v).map(|&i| &self.values[i])
    }
}

/// Extract the sparse constraint system of a program in SSI form for this
/// client: one constraint per definition point for forward clients, one per
/// use point for backward clients, over exactly the variables occurring at
/// the instruction.
pub fn extract_sparse_system<C: ClientAnalysis>(
    func: &Function,
    client: &C,
) -> SparseSystem<Elem<C>> {
    let lat = client.lattice(func);
    let vars = all_vars(func);
    let mut sys = SparseSystem::new(vars);
    match client.direction() {
        Direction::Forward => extract_forward(func, client, &mut sys),
        Direction::Backward => extract_backward(func, client, &lat, &mut sys),
    }
    sys
}

fn extract_forward<C: ClientAnalysis>(
    func: &Function,
    client: &C,
    sys: &mut SparseSystem<Elem<C>>,
) {
    let _ = client;
    for (b, block) in func.blocks.iter().enumerate() {
        let label = &block.label;
        for phi in &block.phis {
            if let Some(t) = phi.dest.as_var().and_then(|v| sys.var_index(v)) {
                let deps = phi
                    .args
                    .iter()
                    .filter_map(|(_, a)| a.as_var())
                    .map(|v| sys.var_index(v))
                    .collect();
                sys.constraints.push(Constraint {
                    target: t,
                    deps,
                    kind: ConstraintKind::PhiMeet,
                    site: format!("In({label})"),
                });
            }
        }
        for (j, inst) in block.body.iter().enumerate() {
            let site = format!("{label}:{j}");
            if let Some(dest) = inst.host_dest() {
                let t = sys.var_index(dest).expect("all vars indexed");
                let (deps, kind) = match &inst.kind {
                    InstKind::Const { value, .. } => (vec![], ConstraintKind::ConstDef(*value)),
                    InstKind::Input { .. } => (vec![], ConstraintKind::InputDef),
                    InstKind::BinOp { op, lhs, rhs, .. } => (
                        vec![op_dep(sys, lhs), op_dep(sys, rhs)],
                        ConstraintKind::BinOpDef(*op),
                    ),
                    InstKind::Sanitize { src, .. } => {
                        (vec![op_dep(sys, src)], ConstraintKind::SanitizeDef)
                    }
                    _ => unreachable!("kinds with destinations"),
                };
                sys.constraints.push(Constraint {
                    target: t,
                    deps,
                    kind,
                    site: site.clone(),
                });
            }
            for c in &inst.copies {
                if let Some(t) = c.dest.as_var().and_then(|v| sys.var_index(v)) {
                    let refined =
                        matches!(&inst.kind, InstKind::Invoke { recv, .. } if *recv == c.src);
                    sys.constraints.push(Constraint {
                        target: t,
                        deps: vec![op_dep(sys, &c.src)],
                        kind: ConstraintKind::CopyDef { refined },
                        site: site.clone(),
                    });
                }
            }
        }
        for c in &block.term_copies {
            if let Some(t) = c.dest.as_var().and_then(|v| sys.var_index(v)) {
                sys.constraints.push(Constraint {
                    target: t,
                    deps: vec![op_dep(sys, &c.src)],
                    kind: ConstraintKind::CopyDef { refined: false },
                    site: format!("{label}:term"),
                });
            }
        }
        for sigma in &block.sigmas {
            for (succ_label, dest) in &sigma.dests {
                let Some(t) = dest.as_var().and_then(|v| sys.var_index(v)) else {
                    continue;
                };
                let test = match &block.terminator {
                    Terminator::Branch {
                        cond, op, value, ..
                    } if *cond == sigma.src => Some((*op, *value)),
                    _ => None,
                };
                let then_side = matches!(
                    &block.terminator,
                    Terminator::Branch { then_target, .. } if then_target == succ_label
                );
                sys.constraints.push(Constraint {
                    target: t,
                    deps: vec![op_dep(sys, &sigma.src)],
                    kind: ConstraintKind::SigmaDest { test, then_side },
                    site: format!("Out({})->{succ_label}", block.label),
                });
            }
        }
        let _ = b;
    }
}

fn extract_backward<C: ClientAnalysis>(
    func: &Function,
    client: &C,
    lat: &C::L,
    sys: &mut SparseSystem<Elem<C>>,
) {
    for block in &func.blocks {
        let label = &block.label;
        for phi in &block.phis {
            // Each keyed operand is a use point; the demand on it is the
            // demand on the phi's destination.
            for (pred, a) in &phi.args {
                if let Some(t) = a.as_var().and_then(|v| sys.var_index(v)) {
                    sys.constraints.push(Constraint {
                        target: t,
                        deps: vec![op_dep(sys, &phi.dest)],
                        kind: ConstraintKind::BackwardUse {
                            contribution: lat.top(),
                        },
                        site: format!("In({label})<-{pred}"),
                    });
                }
            }
        }
        for (j, inst) in block.body.iter().enumerate() {
            let site = format!("{label}:{j}");
            for used in inst.host_uses() {
                let Some(t) = used.as_var().and_then(|v| sys.var_index(v)) else {
                    continue;
                };
                let mut deps: Vec<Option<usize>> = Vec::new();
                if let InstKind::Sanitize { dest, .. } = &inst.kind {
                    deps.push(sys.var_index(dest));
                }
                for c in &inst.copies {
                    if c.src == *used {
                        deps.push(op_dep(sys, &c.dest));
                    }
                }
                sys.constraints.push(Constraint {
                    target: t,
                    deps,
                    kind: ConstraintKind::BackwardUse {
                        contribution: client.use_contribution(lat, &inst.kind),
                    },
                    site: site.clone(),
                });
            }
            for c in &inst.copies {
                if let Some(t) = c.src.as_var().and_then(|v| sys.var_index(v)) {
                    if inst.host_uses().iter().any(|u| **u == c.src) {
                        continue; // folded into the host use constraint
                    }
                    sys.constraints.push(Constraint {
                        target: t,
                        deps: vec![op_dep(sys, &c.dest)],
                        kind: ConstraintKind::BackwardUse {
                            contribution: lat.top(),
                        },
                        site: site.clone(),
                    });
                }
            }
        }
        for c in &block.term_copies {
            if let Some(t) = c.src.as_var().and_then(|v| sys.var_index(v)) {
                sys.constraints.push(Constraint {
                    target: t,
                    deps: vec![op_dep(sys, &c.dest)],
                    kind: ConstraintKind::BackwardUse {
                        contribution: lat.top(),
                    },
                    site: format!("{label}:term"),
                });
            }
        }
        for sigma in &block.sigmas {
            if let Some(t) = sigma.src.as_var().and_then(|v| sys.var_index(v)) {
                let deps = sigma
                    .dests
                    .iter()
                    .filter_map(|(_, d)| d.as_var())
                    .map(|v| sys.var_index(v))
                    .collect();
                sys.constraints.push(Constraint {
                    target: t,
                    deps,
                    kind: ConstraintKind::BackwardUse {
                        contribution: lat.top(),
                    },
                    site: format!("Out({label})"),
                });
            }
        }
        if let Terminator::Branch { cond, .. } = &block.terminator {
            if let Some(t) = cond.as_var().and_then(|v| sys.var_index(v)) {
                sys.constraints.push(Constraint {
                    target: t,
                    deps: vec![],
                    kind: ConstraintKind::BackwardUse {
                        contribution: lat.top(),
                    },
                    site: format!("{label}:term"),
                });
            }
        }
    }
}

fn op_dep<E>(sys: &SparseSystem<E>, op: &Operand) -> Option<usize> {
    op.as_var().and_then(|v| sys.var_index(v))
}

fn eval_constraint<C: ClientAnalysis>(
    client: &C,
    lat: &C::L,
    c: &Constraint<Elem<C>>,
    values: &[Elem<C>],
) -> Elem<C> {
    let dep = |i: usize| -> Elem<C> {
        match c.deps[i] {
            Some(idx) => values[idx].clone(),
            None => lat.top(),
        }
    };
    match &c.kind {
        ConstraintKind::ConstDef(k) => client.const_def(lat, *k),
        ConstraintKind::InputDef => client.input_def(lat),
        ConstraintKind::BinOpDef(op) => client.binop_def(lat, *op, &dep(0), &dep(1)),
        ConstraintKind::SanitizeDef => client.sanitize_def(lat, &dep(0)),
        ConstraintKind::CopyDef { refined } => {
            let src = dep(0);
            if *refined {
                client.invoke_receiver_after(lat, &src)
            } else {
                src
            }
        }
        ConstraintKind::PhiMeet => {
            let mut acc = lat.top();
            for i in 0..c.deps.len() {
                acc = lat.meet(&acc, &dep(i));
            }
            acc
        }
        ConstraintKind::SigmaDest { test, then_side } => {
            let src = dep(0);
            match test {
                Some((op, value)) => client.refine_on_edge(lat, *op, *value, *then_side, &src),
                None => src,
            }
        }
        ConstraintKind::BackwardUse { contribution } => {
            let mut acc = contribution.clone();
            for i in 0..c.deps.len() {
                acc = lat.meet(&acc, &dep(i));
            }
            acc
        }
    }
}

/// The worklist propagation engine: initialize every variable to top, seed
/// the worklist with every constraint site, and on each change to `[v]`
/// requeue the constraints that read `v`. FIFO order with duplicate
/// suppression keeps runs reproducible.
pub fn solve_sparse<C: ClientAnalysis>(
    func: &Function,
    client: &C,
    sys: &SparseSystem<Elem<C>>,
) -> Result<SparseResult<Elem<C>>, SolverError> {
    let lat = client.lattice(func);
    let n = sys.vars.len();
    let mut values: Vec<Elem<C>> = vec![lat.top(); n];
    let mut affected: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ci, c) in sys.constraints.iter().enumerate() {
        for d in c.deps.iter().flatten() {
            affected[*d].push(ci);
        }
    }
    let mut queue: VecDeque<usize> = (0..sys.constraints.len()).collect();
    let mut queued = vec![true; sys.constraints.len()];
    let budget = (lat.height() + 2)
        .saturating_mul(sys.constraints.len() + 1)
        .saturating_mul(n + 1);
    let mut pops = 0usize;
    while let Some(ci) = queue.pop_front() {
        queued[ci] = false;
        pops += 1;
        if pops > budget {
            return Err(SolverError::MonotonicityViolation {
                detail: format!(
                    "{}: sparse worklist exceeded {budget} visits",
                    client.name()
                ),
            });
        }
        let c = &sys.constraints[ci];
        let new = eval_constraint(client, &lat, c, &values);
        let met = lat.meet(&values[c.target], &new);
        if met != values[c.target] {
            values[c.target] = met;
            for &dep_ci in &affected[c.target] {
                if !queued[dep_ci] {
                    queued[dep_ci] = true;
                    queue.push_back(dep_ci);
                }
            }
        }
    }
    let var_index = sys
        .vars
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    Ok(SparseResult {
        vars: sys.vars.clone(),
        values,
        var_index,
    })
}

/// Result of comparing the dense and sparse solutions over live ranges.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub checked: usize,
    pub first_divergence: Option<String>,
}

impl EquivalenceReport {
    pub fn equivalent(&self) -> bool {
        self.first_divergence.is_none()
    }
}

/// Verify `X_v^p = Y_v` for every variable and every point in its live
/// range, with exact lattice equality.
pub fn check_equivalence<E: Clone + Eq + fmt::Display>(
    func: &Function,
    points: &Points,
    dense: &DenseResult<E>,
    sparse: &SparseResult<E>,
) -> EquivalenceReport {
    let mut checked = 0usize;
    for (vi, v) in sparse.vars.iter().enumerate() {
        let range = liveness(func, points, VarFilter::Exact(v));
        let Some(di) = dense.var_index(v) else {
            continue;
        };
        for p in 0..points.len() {
            if !range.at(p) {
                continue;
            }
            checked += 1;
            if dense.values[p][di] != sparse.values[vi] {
                return EquivalenceReport {
                    checked,
                    first_divergence: Some(format!(
                        "{} at {}: dense={} sparse={}",
                        v,
                        points.render(func, p),
                        dense.values[p][di],
                        sparse.values[vi]
                    )),
                };
            }
        }
    }
    EquivalenceReport {
        checked,
        first_divergence: None,
    }
}

/// Render a dense result as stable key=value lines.
pub fn render_dense<E: fmt::Display>(
    func: &Function,
    points: &Points,
    dense: &DenseResult<E>,
) -> String {
    let mut out = String::new();
    for p in 0..points.len() {
        if matches!(
            points.kinds[p],
            PointKind::Slot { .. } | PointKind::Edge { .. }
        ) {
            for (vi, v) in dense.vars.iter().enumerate() {
                out.push_str(&format!(
                    "point={} var={} value={}\n",
                    points.render(func, p),
                    v,
                    dense.values[p][vi]
                ));
            }
        }
    }
    out
}

/// Render a sparse result as stable key=value lines.
pub fn render_sparse<E: fmt::Display>(sparse: &SparseResult<E>) -> String {
    let mut out = String::new();
    for (vi, v) in sparse.vars.iter().enumerate() {
        out.push_str(&format!("var={} value={}\n", v, sparse.values[vi]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::*;
    use crate::ir::CfgIndex;
    use crate::points::hop_reads_writes;
    use crate::ssify::ssify;
    use crate::strategy::eval_strategy;
    use crate::text::parse;
    use std::collections::BTreeMap;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn setup(text: &str) -> (Program, CfgIndex, Points) {
        let program = parse(text).unwrap();
        let cfg = CfgIndex::build(&program.functions[0]).unwrap();
        let points = Points::build(&program.functions[0], &cfg);
        (program, cfg, points)
    }

    fn ssify_for<C: ClientAnalysis>(text: &str, client: &C) -> Program {
        let program = parse(text).unwrap();
        let mut map = BTreeMap::new();
        for func in &program.functions {
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            map.insert(
                func.name.clone(),
                eval_strategy(&client.strategy(), func, &cfg, &points),
            );
        }
        ssify(&program, &map).unwrap().0
    }

    #[test]
    fn dense_constprop_meets_to_nac_at_the_join() {
        let (program, cfg, points) = setup(DIAMOND);
        let func = &program.functions[0];
        let client = ConstProp { conditional: false };
        let dense = solve_dense(func, &points, &client).unwrap();
        let at_join = points.slot_points[cfg.block_index["L3"]][0];
        let v = Var::new("v");
        assert_eq!(dense.at(at_join, &v), Some(&ConstVal::Nac));
        // On the L1 edge the constant is visible.
        let edge = points.edge_points[&(cfg.block_index["L1"], cfg.block_index["L3"])];
        assert_eq!(dense.at(edge, &v), Some(&ConstVal::Const(1)));
    }

    #[test]
    fn dense_straight_line_constant_reaches_the_use() {
        let (program, _, points) = setup("func main {\nentry:\n  v = const 7\n  use v\n  ret\n}\n");
        let func = &program.functions[0];
        let dense = solve_dense(func, &points, &ConstProp { conditional: false }).unwrap();
        let before_use = points.slot_points[0][1];
        assert_eq!(
            dense.at(before_use, &Var::new("v")),
            Some(&ConstVal::Const(7))
        );
    }

    #[test]
    fn dense_taint_reaches_the_join_tainted() {
        let (program, cfg, points) = setup(DIAMOND);
        let func = &program.functions[0];
        let dense = solve_dense(func, &points, &TaintAnalysis).unwrap();
        let at_join = points.slot_points[cfg.block_index["L3"]][0];
        assert_eq!(dense.at(at_join, &Var::new("v")), Some(&Taint::Tainted));
    }

    #[test]
    fn sparse_on_empty_constraint_set_is_all_top() {
        let text = "func main {\nentry:\n  ret\n}\n";
        let program = parse(text).unwrap();
        let func = &program.functions[0];
        let client = ConstProp { conditional: false };
        let sys = extract_sparse_system(func, &client);
        assert!(sys.constraints.is_empty());
        let result = solve_sparse(func, &client, &sys).unwrap();
        assert!(result.values.is_empty());
    }

    #[test]
    fn dense_and_sparse_agree_on_diamond_for_all_clients() {
        fn check<C: ClientAnalysis>(client: &C) {
            let program = ssify_for(DIAMOND, client);
            let func = &program.functions[0];
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            let dense = solve_dense(func, &points, client).unwrap();
            let sys = extract_sparse_system(func, client);
            let sparse = solve_sparse(func, client, &sys).unwrap();
            let report = check_equivalence(func, &points, &dense, &sparse);
            assert!(
                report.equivalent(),
                "{}: {:?}",
                client.name(),
                report.first_divergence
            );
            assert!(report.checked > 0);
        }
        check(&ConstProp { conditional: false });
        check(&ConstProp { conditional: true });
        check(&TaintAnalysis);
        check(&NullAnalysis);
        check(&ClassInference);
    }

    #[test]
    fn dense_solutions_correspond_across_the_transformation() {
        // Splitting renames but never reroutes values: at every original
        // use site, the dense value of the used variable equals the dense
        // value of its renamed version at the same point afterwards.
        fn check<C: ClientAnalysis>(client: &C, seed: u64) {
            let program =
                crate::interp::generate_program(seed, crate::interp::GenBounds::default());
            let func = &program.functions[0];
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            let before = solve_dense(func, &points, client).unwrap();

            let transformed = {
                let expr = client.strategy();
                let mut map = BTreeMap::new();
                let strategies = crate::strategy::eval_strategy(&expr, func, &cfg, &points);
                map.insert(func.name.clone(), strategies);
                ssify(&program, &map).unwrap().0
            };
            let tfunc = &transformed.functions[0];
            let tcfg = CfgIndex::build(tfunc).unwrap();
            let tpoints = Points::build(tfunc, &tcfg);
            let after = solve_dense(tfunc, &tpoints, client).unwrap();

            for (b, block) in func.blocks.iter().enumerate() {
                let tblock = &tfunc.blocks[b];
                assert_eq!(block.body.len(), tblock.body.len(), "bodies correspond");
                for (j, inst) in block.body.iter().enumerate() {
                    let p = points.slot_points[b][j];
                    let tp = tpoints.slot_points[b][j];
                    let old_uses = inst.host_uses();
                    let new_uses = tblock.body[j].host_uses();
                    for (old, new) in old_uses.iter().zip(new_uses.iter()) {
                        let (Some(ov), Some(nv)) = (old.as_var(), new.as_var()) else {
                            continue;
                        };
                        assert_eq!(
                            before.at(p, ov),
                            after.at(tp, nv),
                            "{} seed {seed}: {ov} vs {nv} at {}:{j}",
                            client.name(),
                            block.label
                        );
                    }
                }
            }
        }
        for seed in 0..15u64 {
            check(&ConstProp { conditional: false }, seed);
            check(&ConstProp { conditional: true }, seed);
            check(&TaintAnalysis, seed);
            check(&NullAnalysis, seed);
            check(&ClassInference, seed);
        }
    }

    #[test]
    fn corrupted_sparse_result_reports_divergence() {
        let client = ConstProp { conditional: false };
        let program = ssify_for(DIAMOND, &client);
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let points = Points::build(func, &cfg);
        let dense = solve_dense(func, &points, &client).unwrap();
        let sys = extract_sparse_system(func, &client);
        let mut sparse = solve_sparse(func, &client, &sys).unwrap();
        let idx = sparse
            .vars
            .iter()
            .position(|v| v == &Var::versioned("v", 2))
            .unwrap();
        sparse.values[idx] = ConstVal::Top;
        let report = check_equivalence(func, &points, &dense, &sparse);
        let divergence = report.first_divergence.expect("fault must be found");
        assert!(divergence.contains("v2"), "{divergence}");
    }

    #[test]
    fn non_monotone_client_trips_the_guard() {
        // A deliberately broken client: "meet" raises tainted back to top,
        // so iteration oscillates and the lowering budget trips.
        struct Flip;
        struct FlipLattice;
        impl Lattice for FlipLattice {
            type Elem = Taint;
            fn top(&self) -> Taint {
                Taint::Top
            }
            fn bottom(&self) -> Taint {
                Taint::Tainted
            }
            fn meet(&self, a: &Taint, _b: &Taint) -> Taint {
                // Deliberately broken: every meet changes the value, so
                // iteration never settles.
                match a {
                    Taint::Top => Taint::Clean,
                    Taint::Clean => Taint::Tainted,
                    Taint::Tainted => Taint::Top,
                }
            }
            fn height(&self) -> usize {
                2
            }
            fn samples(&self) -> Vec<Taint> {
                vec![Taint::Top, Taint::Clean, Taint::Tainted]
            }
        }
        impl ClientAnalysis for Flip {
            type L = FlipLattice;
            fn name(&self) -> &'static str {
                "flip"
            }
            fn direction(&self) -> Direction {
                Direction::Forward
            }
            fn lattice(&self, _f: &Function) -> FlipLattice {
                FlipLattice
            }
            fn strategy(&self) -> StrategyExpr {
                StrategyExpr::empty()
            }
            fn const_def(&self, _l: &FlipLattice, _v: i64) -> Taint {
                Taint::Tainted
            }
            fn input_def(&self, _l: &FlipLattice) -> Taint {
                Taint::Tainted
            }
            fn binop_def(&self, l: &FlipLattice, _op: BinOp, a: &Taint, b: &Taint) -> Taint {
                l.meet(a, b)
            }
        }
        let text = "func main {\nentry:\n  v = const 1\n  jump L\nL:\n  v = add v v\n  branch v == 0, L, X\nX:\n  use v\n  ret\n}\n";
        let (program, _, points) = setup(text);
        let err = solve_dense(&program.functions[0], &points, &Flip).unwrap_err();
        assert!(matches!(err, SolverError::MonotonicityViolation { .. }));
    }

    #[test]
    fn coalescing_preserves_the_maximum_solution() {
        // Variables known equal in the maximum solution collapse into one
        // without changing it. System over the constant lattice:
        //   x0 ⊑ 5    x1 ⊑ x0    x2 ⊑ x1 ∧ x0    x3 ⊑ x2 + x2
        let client = ConstProp { conditional: false };
        let program = parse("func main {\nentry:\n  ret\n}\n").unwrap();
        let func = &program.functions[0];
        let vars: Vec<Var> = (0..4).map(|i| Var::versioned("x", i)).collect();
        let mut sys = SparseSystem::new(vars.clone());
        sys.constraints.push(Constraint {
            target: 0,
            deps: vec![],
            kind: ConstraintKind::ConstDef(5),
            site: "s0".into(),
        });
        sys.constraints.push(Constraint {
            target: 1,
            deps: vec![Some(0)],
            kind: ConstraintKind::CopyDef { refined: false },
            site: "s1".into(),
        });
        sys.constraints.push(Constraint {
            target: 2,
            deps: vec![Some(1), Some(0)],
            kind: ConstraintKind::PhiMeet,
            site: "s2".into(),
        });
        sys.constraints.push(Constraint {
            target: 3,
            deps: vec![Some(2), Some(2)],
            kind: ConstraintKind::BinOpDef(BinOp::Add),
            site: "s3".into(),
        });
        let full = solve_sparse(func, &client, &sys).unwrap();
        assert_eq!(
            full.values,
            vec![
                ConstVal::Const(5),
                ConstVal::Const(5),
                ConstVal::Const(5),
                ConstVal::Const(10)
            ]
        );
        // Coalesce x0 and x1 (equal in the maximum solution) into index 0.
        let mut coalesced = SparseSystem::new(vec![
            Var::versioned("y", 0),
            Var::versioned("y", 2),
            Var::versioned("y", 3),
        ]);
        let remap = |i: usize| match i {
            0 | 1 => 0,
            2 => 1,
            _ => 2,
        };
        for c in &sys.constraints {
            coalesced.constraints.push(Constraint {
                target: remap(c.target),
                deps: c.deps.iter().map(|d| d.map(remap)).collect(),
                kind: c.kind.clone(),
                site: c.site.clone(),
            });
        }
        let small = solve_sparse(func, &client, &coalesced).unwrap();
        assert_eq!(
            small.values,
            vec![ConstVal::Const(5), ConstVal::Const(5), ConstVal::Const(10)]
        );
    }

    #[test]
    fn projection_identity_and_link_discipline_on_random_states() {
        // The sparse constraint value must equal the dense transfer output
        // whenever both read the same operand values, and the dense
        // transfer may not depend on variables without an occurrence.
        let client = TaintAnalysis;
        let program = ssify_for(DIAMOND, &client);
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let points = Points::build(func, &cfg);
        let lat = client.lattice(func);
        let vars = all_vars(func);
        let index: HashMap<Var, usize> = vars
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        let sys = extract_sparse_system(func, &client);
        let samples = lat.samples();
        let mut rng = crate::interp::Rng::new(99);
        for _ in 0..50 {
            let state: Vec<Taint> = (0..vars.len())
                .map(|_| samples[rng.below(samples.len())])
                .collect();
            for c in &sys.constraints {
                let g = eval_constraint(&client, &lat, c, &state);
                // The constraint folds every hop that defines its target,
                // one per incoming edge for a phi; the meet of the dense
                // transfer outputs over those hops is the projection.
                let mut dense_out: Option<Taint> = None;
                for hop in &points.hops {
                    let (_, writes) =
                        hop_reads_writes(func, hop.site, VarFilter::Exact(&vars[c.target]));
                    if writes {
                        let out = hop_forward(
                            &client, &lat, func, hop.site, &vars, &index, &state, c.target,
                        );
                        dense_out = Some(dense_out.map_or(out, |acc| lat.meet(&acc, &out)));
                    }
                }
                assert_eq!(Some(g), dense_out, "projection mismatch at {}", c.site);
            }
        }
    }
}
