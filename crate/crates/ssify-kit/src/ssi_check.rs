//! The single-information property checker: a transformed program, paired
//! with the client it was split for, must place a definition wherever the
//! client generates information (SPLIT-DEF), merge colliding values at meet
//! nodes (SPLIT-MEET), confine information to live ranges (INFO), read only
//! operands that appear at the instruction (LINK), and keep every live
//! range connected (VERSION).

use std::fmt;

use crate::dataflow::{
    hop_backward, hop_forward, solve_dense, ClientAnalysis, Direction, Elem, Lattice, SolverError,
};
use crate::interp::Rng;
use crate::ir::*;
use crate::points::{hop_reads_writes, liveness, Points, Site, VarFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsiProperty {
    SplitDef,
    SplitMeet,
    Info,
    Link,
    Version,
}

impl SsiProperty {
    pub fn name(self) -> &'static str {
        match self {
            SsiProperty::SplitDef => "SPLIT-DEF",
            SsiProperty::SplitMeet => "SPLIT-MEET",
            SsiProperty::Info => "INFO",
            SsiProperty::Link => "LINK",
            SsiProperty::Version => "VERSION",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsiViolation {
    pub property: SsiProperty,
    pub var: String,
    pub detail: String,
}

impl fmt::Display for SsiViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated for {}: {}",
            self.property.name(),
            self.var,
            self.detail
        )
    }
}

/// Check all five properties of the single-information form for `client`.
pub fn check_ssi<C: ClientAnalysis>(
    func: &Function,
    cfg: &CfgIndex,
    points: &Points,
    client: &C,
) -> Result<Vec<SsiViolation>, SolverError> {
    let mut violations = Vec::new();
    let lat = client.lattice(func);
    let vars = all_vars(func);
    let ranges: Vec<crate::points::LiveRange> = vars
        .iter()
        .map(|v| liveness(func, points, VarFilter::Exact(v)))
        .collect();

    // VERSION: each live range is one connected piece of the point graph.
    for (vi, v) in vars.iter().enumerate() {
        if !ranges[vi].is_connected(points) {
            violations.push(SsiViolation {
                property: SsiProperty::Version,
                var: v.to_string(),
                detail: "live range is not connected".to_string(),
            });
        }
    }

    check_split_def(func, points, client, &vars, &ranges, &mut violations);

    let dense = solve_dense(func, points, client)?;
    check_split_meet(
        func,
        cfg,
        points,
        client,
        &dense,
        &vars,
        &ranges,
        &mut violations,
    );

    check_info(func, &vars, &ranges, &mut violations);
    check_link(func, points, client, &lat, &vars, &mut violations);

    Ok(violations)
}

/// SPLIT-DEF: a non-trivial, non-undefined transfer inside a live range
/// must coincide with a definition (forward) or a last use (backward) of
/// the variable it informs.
fn check_split_def<C: ClientAnalysis>(
    func: &Function,
    points: &Points,
    client: &C,
    vars: &[Var],
    ranges: &[crate::points::LiveRange],
    violations: &mut Vec<SsiViolation>,
) {
    for hop in &points.hops {
        match client.direction() {
            Direction::Forward => {
                // Information sources beyond plain definitions: the invoke
                // receiver refinement and branch-edge refinements.
                match hop.site {
                    Site::Inst { block, index } => {
                        let inst = &func.blocks[block].body[index];
                        if !client.refines_invoke_receiver() {
                            continue;
                        }
                        let InstKind::Invoke { recv, .. } = &inst.kind else {
                            continue;
                        };
                        let Some(v) = recv.as_var() else { continue };
                        let vi = vars.iter().position(|x| x == v).unwrap();
                        if ranges[vi].at(hop.to) {
                            violations.push(SsiViolation {
                                property: SsiProperty::SplitDef,
                                var: v.to_string(),
                                detail: format!(
                                    "receiver refined at {}:{index} but still live after it",
                                    func.blocks[block].label
                                ),
                            });
                        }
                    }
                    Site::SigmaEdge { block, succ } => {
                        let b = &func.blocks[block];
                        let Terminator::Branch {
                            cond,
                            op,
                            value: _,
                            then_target,
                            ..
                        } = &b.terminator
                        else {
                            continue;
                        };
                        let then_side = func.blocks[succ].label == *then_target;
                        if !client.refines_on_edge(*op, then_side) {
                            continue;
                        }
                        let Some(v) = cond.as_var() else { continue };
                        let vi = vars.iter().position(|x| x == v).unwrap();
                        if ranges[vi].at(hop.to) {
                            violations.push(SsiViolation {
                                property: SsiProperty::SplitDef,
                                var: v.to_string(),
                                detail: format!(
                                    "tested value refined on edge {}->{} but not split there",
                                    b.label, func.blocks[succ].label
                                ),
                            });
                        }
                    }
                    _ => {}
                }
            }
            Direction::Backward => {
                let Site::Inst { block, index } = hop.site else {
                    continue;
                };
                let inst = &func.blocks[block].body[index];
                let lat = client.lattice(func);
                if client.use_contribution(&lat, &inst.kind) == lat.top() {
                    continue;
                }
                for used in inst.host_uses() {
                    let Some(v) = used.as_var() else { continue };
                    let vi = vars.iter().position(|x| x == v).unwrap();
                    if ranges[vi].at(hop.to) {
                        violations.push(SsiViolation {
                            property: SsiProperty::SplitDef,
                            var: v.to_string(),
                            detail: format!(
                                "use at {}:{index} generates information but is not last",
                                func.blocks[block].label
                            ),
                        });
                    }
                }
            }
        }
    }
}

/// SPLIT-MEET: wherever two or more live edges bring a variable differing
/// solved values into one point, the variable must not survive the meet
/// unmerged.
#[allow(clippy::too_many_arguments)]
fn check_split_meet<C: ClientAnalysis>(
    func: &Function,
    cfg: &CfgIndex,
    points: &Points,
    client: &C,
    dense: &crate::dataflow::DenseResult<Elem<C>>,
    vars: &[Var],
    ranges: &[crate::points::LiveRange],
    violations: &mut Vec<SsiViolation>,
) {
    let forward = client.direction() == Direction::Forward;
    for (b, _) in func.blocks.iter().enumerate() {
        let (edges, inner_point): (Vec<usize>, usize) = if forward {
            if cfg.preds[b].len() < 2 {
                continue;
            }
            (
                cfg.preds[b]
                    .iter()
                    .map(|&p| points.edge_points[&(p, b)])
                    .collect(),
                points.slot_points[b][0],
            )
        } else {
            if cfg.succs[b].len() < 2 {
                continue;
            }
            (
                cfg.succs[b]
                    .iter()
                    .map(|&s| points.edge_points[&(b, s)])
                    .collect(),
                points.slot_points[b][func.blocks[b].body.len()],
            )
        };
        for (vi, v) in vars.iter().enumerate() {
            let live_edges: Vec<usize> = edges
                .iter()
                .copied()
                .filter(|&e| ranges[vi].at(e))
                .collect();
            if live_edges.len() < 2 || !ranges[vi].at(inner_point) {
                continue;
            }
            let di = dense.var_index(v).unwrap();
            let first = &dense.values[live_edges[0]][di];
            if live_edges.iter().any(|&e| dense.values[e][di] != *first) {
                violations.push(SsiViolation {
                    property: SsiProperty::SplitMeet,
                    var: v.to_string(),
                    detail: format!("differing values meet unmerged at {}", func.blocks[b].label),
                });
            }
        }
    }
}

/// INFO: phi- and sigma-functions route client information, so a named
/// destination whose live range is empty means the cleaning pass failed to
/// mask an out-of-range value with `undef`. Dead definitions by ordinary
/// instructions and copies are exempt: the constraint construction binds
/// every out-of-range point regardless, and actual code is never removed.
fn check_info(
    func: &Function,
    vars: &[Var],
    ranges: &[crate::points::LiveRange],
    violations: &mut Vec<SsiViolation>,
) {
    let flag = |op: &Operand, what: &str, where_: String, violations: &mut Vec<SsiViolation>| {
        let Some(v) = op.as_var() else { return };
        let vi = vars.iter().position(|x| x == v).unwrap();
        if ranges[vi].is_empty() {
            violations.push(SsiViolation {
                property: SsiProperty::Info,
                var: v.to_string(),
                detail: format!("{what} at {where_} defines a value no live range carries"),
            });
        }
    };
    for block in &func.blocks {
        for phi in &block.phis {
            flag(&phi.dest, "phi", format!("In({})", block.label), violations);
        }
        for sigma in &block.sigmas {
            for (l, d) in &sigma.dests {
                flag(d, "sigma", format!("Out({})->{l}", block.label), violations);
            }
        }
    }
}

/// LINK: the transfer for a variable informed at a node may depend only on
/// the variables occurring there. Verified by perturbation: randomizing the
/// values of all other variables must not change the transfer's output.
fn check_link<C: ClientAnalysis>(
    func: &Function,
    points: &Points,
    client: &C,
    lat: &C::L,
    vars: &[Var],
    violations: &mut Vec<SsiViolation>,
) {
    let samples = lat.samples();
    if samples.is_empty() {
        return;
    }
    let mut rng = Rng::new(0x7a3d ^ vars.len() as u64);
    let var_index: std::collections::HashMap<Var, usize> = vars
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let forward = client.direction() == Direction::Forward;
    for hop in &points.hops {
        let occurring: Vec<bool> = vars
            .iter()
            .map(|v| {
                let (r, w) = hop_reads_writes(func, hop.site, VarFilter::Exact(v));
                r || w
            })
            .collect();
        let informed: Vec<usize> = (0..vars.len())
            .filter(|&vi| {
                let (r, w) = hop_reads_writes(func, hop.site, VarFilter::Exact(&vars[vi]));
                if forward {
                    w
                } else {
                    r
                }
            })
            .collect();
        if informed.is_empty() {
            continue;
        }
        for _trial in 0..3 {
            let state_a: Vec<Elem<C>> = (0..vars.len())
                .map(|_| samples[rng.below(samples.len())].clone())
                .collect();
            let mut state_b = state_a.clone();
            for vi in 0..vars.len() {
                if !occurring[vi] {
                    state_b[vi] = samples[rng.below(samples.len())].clone();
                }
            }
            for &vi in &informed {
                let (a, b) = if forward {
                    (
                        hop_forward(client, lat, func, hop.site, vars, &var_index, &state_a, vi),
                        hop_forward(client, lat, func, hop.site, vars, &var_index, &state_b, vi),
                    )
                } else {
                    (
                        hop_backward(client, lat, func, hop.site, vars, &var_index, &state_a, vi),
                        hop_backward(client, lat, func, hop.site, vars, &var_index, &state_b, vi),
                    )
                };
                if a != b {
                    violations.push(SsiViolation {
                        property: SsiProperty::Link,
                        var: vars[vi].to_string(),
                        detail: format!(
                            "transfer at {:?} reads a variable with no occurrence there",
                            hop.site
                        ),
                    });
                }
            }
        }
    }
}
