//! GraphViz export: record-shaped nodes listing each block's instructions,
//! optionally with edges labeled by the variable versions alive on them and
//! their solved values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ir::*;
use crate::points::{liveness, Points, VarFilter};

fn escape(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        match c {
            '{' | '}' | '|' | '<' | '>' | '"' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

/// Render the program as DOT. With annotations, every CFG edge is labeled
/// with the versions live on it, as `name:value` where the map knows the
/// value.
pub fn to_dot(program: &Program, annotations: Option<&BTreeMap<Var, String>>) -> String {
    let mut out =
        String::from("digraph program {\n  node [shape=record, fontname=\"monospace\"];\n");
    for func in &program.functions {
        let cfg = match CfgIndex::build(func) {
            Ok(cfg) => cfg,
            Err(_) => continue,
        };
        let points = Points::build(func, &cfg);
        let live_vars: Vec<(Var, crate::points::LiveRange)> = if annotations.is_some() {
            all_vars(func)
                .into_iter()
                .map(|v| {
                    let range = liveness(func, &points, VarFilter::Exact(&v));
                    (v, range)
                })
                .collect()
        } else {
            Vec::new()
        };
        for (b, block) in func.blocks.iter().enumerate() {
            let mut body = String::new();
            for phi in &block.phis {
                let args: Vec<String> = phi.args.iter().map(|(l, a)| format!("{l}: {a}")).collect();
                let _ = write!(
                    body,
                    "{} = phi({})\\l",
                    escape(&phi.dest.to_string()),
                    escape(&args.join(", "))
                );
            }
            for inst in &block.body {
                let text = render_inst_line(inst);
                let _ = write!(body, "{}\\l", escape(&text));
            }
            for sigma in &block.sigmas {
                let dests: Vec<String> = sigma
                    .dests
                    .iter()
                    .map(|(l, d)| format!("{l}: {d}"))
                    .collect();
                let _ = write!(
                    body,
                    "({}) = sigma({})\\l",
                    escape(&dests.join(", ")),
                    escape(&sigma.src.to_string())
                );
            }
            let term = match &block.terminator {
                Terminator::Jump { target } => format!("jump {target}"),
                Terminator::Branch {
                    cond,
                    op,
                    value,
                    then_target,
                    else_target,
                } => format!(
                    "branch {cond} {} {value}, {then_target}, {else_target}",
                    op.symbol()
                ),
                Terminator::Ret => "ret".to_string(),
            };
            let _ = write!(body, "{}\\l", escape(&term));
            let _ = writeln!(
                out,
                "  \"{}_{}\" [label=\"{{{}|{}}}\"];",
                func.name,
                block.label,
                escape(&block.label),
                body
            );
            for &s in &cfg.succs[b] {
                let mut label = String::new();
                if annotations.is_some() {
                    let edge_point = points.edge_points[&(b, s)];
                    let mut tags: Vec<String> = Vec::new();
                    for (v, range) in &live_vars {
                        if range.at(edge_point) {
                            match annotations.and_then(|m| m.get(v)) {
                                Some(value) => tags.push(format!("{v}:{value}")),
                                None => tags.push(v.to_string()),
                            }
                        }
                    }
                    label = tags.join(", ");
                }
                let _ = writeln!(
                    out,
                    "  \"{}_{}\" -> \"{}_{}\"{};",
                    func.name,
                    block.label,
                    func.name,
                    func.blocks[s].label,
                    if label.is_empty() {
                        String::new()
                    } else {
                        format!(" [label=\"{}\"]", escape(&label))
                    }
                );
            }
        }
    }
    out.push_str("}\n");
    out
}

fn render_inst_line(inst: &Instruction) -> String {
    let host = match &inst.kind {
        InstKind::Const { dest, value } => format!("{dest} = const {value}"),
        InstKind::Input { dest } => format!("{dest} = input"),
        InstKind::BinOp { dest, op, lhs, rhs } => format!("{dest} = {} {lhs} {rhs}", op.name()),
        InstKind::Sanitize { dest, src } => format!("{dest} = sanitize {src}"),
        InstKind::Use { arg } => format!("use {arg}"),
        InstKind::Invoke { recv, method } => format!("invoke {recv}.{method}"),
        InstKind::ParallelCopy => String::new(),
    };
    let mut parts: Vec<String> = Vec::new();
    if !host.is_empty() {
        parts.push(host);
    }
    for c in &inst.copies {
        parts.push(format!("{} = {}", c.dest, c.src));
    }
    parts.join(" || ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    #[test]
    fn diamond_has_four_nodes_and_four_edges() {
        let program = parse(DIAMOND).unwrap();
        let dot = to_dot(&program, None);
        assert_eq!(dot.matches("[label=\"{").count(), 4);
        assert_eq!(dot.matches(" -> ").count(), 4);
        assert!(!dot.contains(" [label=\"v"));
    }

    #[test]
    fn annotations_label_live_edges() {
        let program = parse(DIAMOND).unwrap();
        let mut notes = BTreeMap::new();
        notes.insert(Var::new("v"), "NAC".to_string());
        let dot = to_dot(&program, Some(&notes));
        assert!(
            dot.contains("\"main_entry\" -> \"main_L2\" [label=\"v:NAC\"]"),
            "{dot}"
        );
        // v is dead on the edge into L1, where it is immediately redefined.
        assert!(dot.contains("\"main_entry\" -> \"main_L1\";"), "{dot}");
    }
}
