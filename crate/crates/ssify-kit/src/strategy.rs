//! Live range splitting strategies, declared from the standard vocabulary:
//! definition sites, use sites, last uses, conditional tests and the fork
//! nodes that follow them — each pointing down (forward information) or up
//! (backward information). Unions of these atoms cover all the usual
//! clients: SSA-style reaching definitions, e-SSA for bounds checking and
//! taint, SSU for class inference, and full SSI.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::*;
use crate::points::{defs_uses, Points};

/// One set constructor from the strategy vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    DefsDown,
    UsesDown,
    UsesUp,
    LastUsesUp,
    CondsDown,
    CondsUp,
    OutCondsDown,
    OutCondsUp,
    OutCondsEqDown,
}

impl Atom {
    pub fn name(self) -> &'static str {
        match self {
            Atom::DefsDown => "defs_down",
            Atom::UsesDown => "uses_down",
            Atom::UsesUp => "uses_up",
            Atom::LastUsesUp => "last_uses_up",
            Atom::CondsDown => "conds_down",
            Atom::CondsUp => "conds_up",
            Atom::OutCondsDown => "out_conds_down",
            Atom::OutCondsUp => "out_conds_up",
            Atom::OutCondsEqDown => "out_conds_eq_down",
        }
    }

    fn from_name(name: &str) -> Option<Atom> {
        Some(match name {
            "defs_down" => Atom::DefsDown,
            "uses_down" => Atom::UsesDown,
            "uses_up" => Atom::UsesUp,
            "last_uses_up" => Atom::LastUsesUp,
            "conds_down" => Atom::CondsDown,
            "conds_up" => Atom::CondsUp,
            "out_conds_down" => Atom::OutCondsDown,
            "out_conds_up" => Atom::OutCondsUp,
            "out_conds_eq_down" => Atom::OutCondsEqDown,
            _ => return None,
        })
    }

    fn is_down(self) -> bool {
        matches!(
            self,
            Atom::DefsDown
                | Atom::UsesDown
                | Atom::CondsDown
                | Atom::OutCondsDown
                | Atom::OutCondsEqDown
        )
    }
}

/// A union of atoms, applied uniformly to every variable of a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyExpr {
    pub atoms: BTreeSet<Atom>,
}

impl fmt::Display for StrategyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.atoms.iter().map(|a| a.name()).collect();
        write!(f, "{}", names.join("+"))
    }
}

impl StrategyExpr {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> StrategyExpr {
        StrategyExpr {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn empty() -> StrategyExpr {
        StrategyExpr {
            atoms: BTreeSet::new(),
        }
    }

    /// Parse a named table row or a `+`-joined literal expression.
    pub fn parse(spec: &str) -> Result<StrategyExpr, String> {
        let named = match spec {
            "ssi" => Some(vec![Atom::DefsDown, Atom::LastUsesUp]),
            "abcd" | "taint" | "essa" => Some(vec![Atom::DefsDown, Atom::OutCondsDown]),
            "ccp" => Some(vec![Atom::DefsDown, Atom::OutCondsEqDown]),
            "defs-down" | "constprop" | "reaching-defs" | "ssa" => Some(vec![Atom::DefsDown]),
            "uses-up" | "ssu" | "classinf" => Some(vec![Atom::UsesUp]),
            "defs-uses-down" | "nullptr" => Some(vec![Atom::DefsDown, Atom::UsesDown]),
            "bitwidth-stephenson" => Some(vec![Atom::DefsDown, Atom::OutCondsDown, Atom::UsesUp]),
            "bitwidth-mahlke" => Some(vec![Atom::DefsDown, Atom::UsesUp]),
            "hochstadt" => Some(vec![Atom::UsesUp, Atom::OutCondsUp]),
            "none" => Some(vec![]),
            _ => None,
        };
        if let Some(atoms) = named {
            return Ok(StrategyExpr::new(atoms));
        }
        let mut atoms = BTreeSet::new();
        for part in spec.split('+') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match Atom::from_name(part) {
                Some(a) => {
                    atoms.insert(a);
                }
                None => return Err(format!("unknown strategy atom `{part}`")),
            }
        }
        Ok(StrategyExpr { atoms })
    }

    /// Nodewise containment, per variable, on every program: holds exactly
    /// when the atom set is contained.
    pub fn subsumed_by(&self, other: &StrategyExpr) -> bool {
        self.atoms.is_subset(&other.atoms)
    }
}

/// The per-variable node sets `I↓` and `I↑` a strategy denotes on one
/// function.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerVarStrategy {
    pub i_down: BTreeSet<Node>,
    pub i_up: BTreeSet<Node>,
}

impl PerVarStrategy {
    pub fn is_empty(&self) -> bool {
        self.i_down.is_empty() && self.i_up.is_empty()
    }
}

/// A splitting strategy for every base variable of one function.
pub type SplittingStrategy = BTreeMap<String, PerVarStrategy>;

/// Evaluate a strategy expression on a function: each atom contributes its
/// occurrence set, with `Out(Conds)` mapping test instructions to the fork
/// nodes of their blocks and the `eq` variant keeping only `==`/`!=` tests.
pub fn eval_strategy(
    expr: &StrategyExpr,
    func: &Function,
    cfg: &CfgIndex,
    points: &Points,
) -> SplittingStrategy {
    let mut result = SplittingStrategy::new();
    for base in func.base_names() {
        let occ = defs_uses(func, cfg, points, &base);
        let mut per = PerVarStrategy::default();
        for &atom in &expr.atoms {
            let nodes: BTreeSet<Node> = match atom {
                Atom::DefsDown => occ.defs.clone(),
                Atom::UsesDown | Atom::UsesUp => occ.uses.clone(),
                Atom::LastUsesUp => occ.last_uses.clone(),
                Atom::CondsDown | Atom::CondsUp => occ.conds.clone(),
                Atom::OutCondsDown | Atom::OutCondsUp => {
                    occ.conds.iter().map(|n| Node::Out(n.block())).collect()
                }
                Atom::OutCondsEqDown => occ
                    .conds
                    .iter()
                    .filter(|n| cond_is_equality(func, **n))
                    .map(|n| Node::Out(n.block()))
                    .collect(),
            };
            if atom.is_down() {
                per.i_down.extend(nodes);
            } else {
                per.i_up.extend(nodes);
            }
        }
        result.insert(base, per);
    }
    result
}

fn cond_is_equality(func: &Function, node: Node) -> bool {
    let b = node.block();
    match &func.blocks[b].terminator {
        Terminator::Branch { op, .. } => op.is_equality(),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse;

    const DIAMOND: &str = "func main {\nentry:\n  v = input\n  branch v == 0, L1, L2\nL1:\n  v = const 1\n  jump L3\nL2:\n  use v\n  jump L3\nL3:\n  use v\n  ret\n}\n";

    fn eval(text: &str, spec: &str) -> SplittingStrategy {
        let program = parse(text).unwrap();
        let func = &program.functions[0];
        let cfg = CfgIndex::build(func).unwrap();
        let points = Points::build(func, &cfg);
        eval_strategy(&StrategyExpr::parse(spec).unwrap(), func, &cfg, &points)
    }

    #[test]
    fn abcd_on_diamond() {
        let strat = eval(DIAMOND, "abcd");
        let v = &strat["v"];
        assert_eq!(
            v.i_down,
            [Node::Inst(0, 0), Node::Inst(1, 0), Node::Out(0)]
                .into_iter()
                .collect()
        );
        assert!(v.i_up.is_empty());
    }

    #[test]
    fn ssi_on_diamond_takes_defs_and_last_uses() {
        let strat = eval(DIAMOND, "ssi");
        let v = &strat["v"];
        assert_eq!(
            v.i_down,
            [Node::Inst(0, 0), Node::Inst(1, 0)].into_iter().collect()
        );
        assert_eq!(v.i_up, [Node::Inst(3, 0)].into_iter().collect());
    }

    #[test]
    fn ccp_equals_abcd_when_test_is_equality() {
        // DIAMOND's only test is `v == 0`.
        assert_eq!(eval(DIAMOND, "ccp"), eval(DIAMOND, "abcd"));
    }

    #[test]
    fn ccp_drops_non_equality_tests() {
        let text = "func main {\nentry:\n  v = input\n  branch v < 3, L1, L2\nL1:\n  jump L3\nL2:\n  jump L3\nL3:\n  use v\n  ret\n}\n";
        let ccp = eval(text, "ccp");
        let abcd = eval(text, "abcd");
        assert!(ccp["v"].i_down.iter().all(|n| !matches!(n, Node::Out(_))));
        assert!(abcd["v"].i_down.contains(&Node::Out(0)));
        // Containment drives the growth ordering.
        assert!(ccp["v"].i_down.is_subset(&abcd["v"].i_down));
    }

    #[test]
    fn class_inference_splits_at_uses_only() {
        let text = "func main {\nentry:\n  v = input\n  invoke v.a\n  invoke v.b\n  ret\n}\n";
        let strat = eval(text, "classinf");
        let v = &strat["v"];
        assert!(v.i_down.is_empty());
        assert_eq!(
            v.i_up,
            [Node::Inst(0, 1), Node::Inst(0, 2)].into_iter().collect()
        );
    }

    #[test]
    fn atom_containment_gives_nodewise_containment() {
        use crate::interp::{generate_program, GenBounds};
        let small = StrategyExpr::parse("defs_down").unwrap();
        let large = StrategyExpr::parse("defs_down+out_conds_down+uses_up").unwrap();
        assert!(small.subsumed_by(&large));
        for seed in 0..20u64 {
            let program = generate_program(seed, GenBounds::default());
            let func = &program.functions[0];
            let cfg = CfgIndex::build(func).unwrap();
            let points = Points::build(func, &cfg);
            let a = eval_strategy(&small, func, &cfg, &points);
            let b = eval_strategy(&large, func, &cfg, &points);
            for (base, pa) in &a {
                let pb = &b[base];
                assert!(pa.i_down.is_subset(&pb.i_down), "seed {seed} {base}");
                assert!(pa.i_up.is_subset(&pb.i_up), "seed {seed} {base}");
            }
        }
    }

    #[test]
    fn expression_literals_parse() {
        assert_eq!(
            StrategyExpr::parse("defs_down+out_conds_down").unwrap(),
            StrategyExpr::parse("abcd").unwrap()
        );
        assert!(StrategyExpr::parse("defs_down+bogus").is_err());
    }
}
