//! The four bundled analyses: constant propagation (with a conditional
//! variant), taint tracking, null-pointer analysis and class inference.

use std::collections::BTreeSet;
use std::fmt;

use crate::dataflow::{ClientAnalysis, Direction, Lattice};
use crate::ir::{BinOp, Function, InstKind, RelOp};
use crate::strategy::{Atom, StrategyExpr};

/// Flat constant lattice: top over the constants over not-a-constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstVal {
    Top,
    Const(i64),
    Nac,
}

impl fmt::Display for ConstVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstVal::Top => write!(f, "top"),
            ConstVal::Const(k) => write!(f, "{k}"),
            ConstVal::Nac => write!(f, "NAC"),
        }
    }
}

pub struct ConstLattice;

impl Lattice for ConstLattice {
    type Elem = ConstVal;

    fn top(&self) -> ConstVal {
        ConstVal::Top
    }

    fn bottom(&self) -> ConstVal {
        ConstVal::Nac
    }

    fn meet(&self, a: &ConstVal, b: &ConstVal) -> ConstVal {
        match (a, b) {
            (ConstVal::Top, x) | (x, ConstVal::Top) => *x,
            (ConstVal::Nac, _) | (_, ConstVal::Nac) => ConstVal::Nac,
            (ConstVal::Const(x), ConstVal::Const(y)) if x == y => ConstVal::Const(*x),
            _ => ConstVal::Nac,
        }
    }

    fn height(&self) -> usize {
        2
    }

    fn samples(&self) -> Vec<ConstVal> {
        vec![
            ConstVal::Top,
            ConstVal::Const(-3),
            ConstVal::Const(0),
            ConstVal::Const(7),
            ConstVal::Nac,
        ]
    }
}

/// Constant propagation. With `conditional` set, equality tests split live
/// ranges and the constrained edge pins the tested variable to the compared
/// constant.
pub struct ConstProp {
    pub conditional: bool,
}

impl ClientAnalysis for ConstProp {
    type L = ConstLattice;

    fn name(&self) -> &'static str {
        if self.conditional {
            "ccp"
        } else {
            "constprop"
        }
    }

    fn direction(&self) -> Direction {
        Direction::Forward
    }

    fn lattice(&self, _func: &Function) -> ConstLattice {
        ConstLattice
    }

    fn strategy(&self) -> StrategyExpr {
        if self.conditional {
            StrategyExpr::new([Atom::DefsDown, Atom::OutCondsEqDown])
        } else {
            StrategyExpr::new([Atom::DefsDown])
        }
    }

    fn const_def(&self, _lat: &ConstLattice, value: i64) -> ConstVal {
        ConstVal::Const(value)
    }

    fn input_def(&self, _lat: &ConstLattice) -> ConstVal {
        ConstVal::Nac
    }

    fn binop_def(&self, _lat: &ConstLattice, op: BinOp, a: &ConstVal, b: &ConstVal) -> ConstVal {
        match (a, b) {
            (ConstVal::Nac, _) | (_, ConstVal::Nac) => ConstVal::Nac,
            (ConstVal::Top, _) | (_, ConstVal::Top) => ConstVal::Top,
            (ConstVal::Const(x), ConstVal::Const(y)) => ConstVal::Const(op.eval(*x, *y)),
        }
    }

    fn refine_on_edge(
        &self,
        _lat: &ConstLattice,
        op: RelOp,
        value: i64,
        then_side: bool,
        val: &ConstVal,
    ) -> ConstVal {
        if self.refines_on_edge(op, then_side) {
            ConstVal::Const(value)
        } else {
            *val
        }
    }

    fn refines_on_edge(&self, op: RelOp, then_side: bool) -> bool {
        // `v == k` pins the then edge; `v != k` pins the else edge.
        self.conditional && ((op == RelOp::Eq && then_side) || (op == RelOp::Ne && !then_side))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Taint {
    Top,
    Clean,
    Tainted,
}

impl fmt::Display for Taint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Taint::Top => write!(f, "top"),
            Taint::Clean => write!(f, "clean"),
            Taint::Tainted => write!(f, "tainted"),
        }
    }
}

pub struct TaintLattice;

impl Lattice for TaintLattice {
    type Elem = Taint;

    fn top(&self) -> Taint {
        Taint::Top
    }

    fn bottom(&self) -> Taint {
        Taint::Tainted
    }

    fn meet(&self, a: &Taint, b: &Taint) -> Taint {
        match (a, b) {
            (Taint::Top, x) | (x, Taint::Top) => *x,
            (Taint::Tainted, _) | (_, Taint::Tainted) => Taint::Tainted,
            (Taint::Clean, Taint::Clean) => Taint::Clean,
        }
    }

    fn height(&self) -> usize {
        2
    }

    fn samples(&self) -> Vec<Taint> {
        vec![Taint::Top, Taint::Clean, Taint::Tainted]
    }
}

/// Input is tainted, constants and sanitizers are clean, operators spread
/// taint; `use` and `invoke` are the sinks queried after solving.
pub struct TaintAnalysis;

impl ClientAnalysis for TaintAnalysis {
    type L = TaintLattice;

    fn name(&self) -> &'static str {
        "taint"
    }

    fn direction(&self) -> Direction {
        Direction::Forward
    }

    fn lattice(&self, _func: &Function) -> TaintLattice {
        TaintLattice
    }

    fn strategy(&self) -> StrategyExpr {
        StrategyExpr::new([Atom::DefsDown, Atom::OutCondsDown])
    }

    fn const_def(&self, _lat: &TaintLattice, _value: i64) -> Taint {
        Taint::Clean
    }

    fn input_def(&self, _lat: &TaintLattice) -> Taint {
        Taint::Tainted
    }

    fn binop_def(&self, lat: &TaintLattice, _op: BinOp, a: &Taint, b: &Taint) -> Taint {
        lat.meet(a, b)
    }

    fn sanitize_def(&self, _lat: &TaintLattice, _src: &Taint) -> Taint {
        Taint::Clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Nullness {
    Top,
    NotNull,
    PossiblyNull,
}

impl fmt::Display for Nullness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nullness::Top => write!(f, "top"),
            Nullness::NotNull => write!(f, "notnull"),
            Nullness::PossiblyNull => write!(f, "possiblynull"),
        }
    }
}

pub struct NullLattice;

impl Lattice for NullLattice {
    type Elem = Nullness;

    fn top(&self) -> Nullness {
        Nullness::Top
    }

    fn bottom(&self) -> Nullness {
        Nullness::PossiblyNull
    }

    fn meet(&self, a: &Nullness, b: &Nullness) -> Nullness {
        match (a, b) {
            (Nullness::Top, x) | (x, Nullness::Top) => *x,
            (Nullness::PossiblyNull, _) | (_, Nullness::PossiblyNull) => Nullness::PossiblyNull,
            (Nullness::NotNull, Nullness::NotNull) => Nullness::NotNull,
        }
    }

    fn height(&self) -> usize {
        2
    }

    fn samples(&self) -> Vec<Nullness> {
        vec![Nullness::Top, Nullness::NotNull, Nullness::PossiblyNull]
    }
}

/// References from input may be null; a completed `invoke` proves its
/// receiver non-null, so live ranges split after every use and the
/// post-use version carries the refinement.
pub struct NullAnalysis;

impl ClientAnalysis for NullAnalysis {
    type L = NullLattice;

    fn name(&self) -> &'static str {
        "nullptr"
    }

    fn direction(&self) -> Direction {
        Direction::Forward
    }

    fn lattice(&self, _func: &Function) -> NullLattice {
        NullLattice
    }

    fn strategy(&self) -> StrategyExpr {
        StrategyExpr::new([Atom::DefsDown, Atom::UsesDown])
    }

    fn const_def(&self, _lat: &NullLattice, _value: i64) -> Nullness {
        Nullness::NotNull
    }

    fn input_def(&self, _lat: &NullLattice) -> Nullness {
        Nullness::PossiblyNull
    }

    fn binop_def(&self, lat: &NullLattice, _op: BinOp, a: &Nullness, b: &Nullness) -> Nullness {
        lat.meet(a, b)
    }

    fn invoke_receiver_after(&self, _lat: &NullLattice, _before: &Nullness) -> Nullness {
        Nullness::NotNull
    }

    fn refines_invoke_receiver(&self) -> bool {
        true
    }
}

/// Required-method sets, ordered by inclusion: the empty demand on top, the
/// whole method universe at the bottom, union as meet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MethodSet(pub BTreeSet<String>);

impl fmt::Display for MethodSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|s| s.as_str()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

pub struct ClassLattice {
    pub universe: BTreeSet<String>,
}

impl ClassLattice {
    pub fn for_function(func: &Function) -> ClassLattice {
        let mut universe = BTreeSet::new();
        for block in &func.blocks {
            for inst in &block.body {
                if let InstKind::Invoke { method, .. } = &inst.kind {
                    universe.insert(method.clone());
                }
            }
        }
        ClassLattice { universe }
    }
}

impl Lattice for ClassLattice {
    type Elem = MethodSet;

    fn top(&self) -> MethodSet {
        MethodSet(BTreeSet::new())
    }

    fn bottom(&self) -> MethodSet {
        MethodSet(self.universe.clone())
    }

    fn meet(&self, a: &MethodSet, b: &MethodSet) -> MethodSet {
        MethodSet(a.0.union(&b.0).cloned().collect())
    }

    fn height(&self) -> usize {
        self.universe.len()
    }

    fn samples(&self) -> Vec<MethodSet> {
        let mut out = vec![self.top(), self.bottom()];
        for m in &self.universe {
            out.push(MethodSet([m.clone()].into_iter().collect()));
        }
        out
    }
}

/// Backward inference of the methods each variable must support, collected
/// from its use sites over use-def chains.
pub struct ClassInference;

impl ClientAnalysis for ClassInference {
    type L = ClassLattice;

    fn name(&self) -> &'static str {
        "classinf"
    }

    fn direction(&self) -> Direction {
        Direction::Backward
    }

    fn lattice(&self, func: &Function) -> ClassLattice {
        ClassLattice::for_function(func)
    }

    fn strategy(&self) -> StrategyExpr {
        StrategyExpr::new([Atom::UsesUp])
    }

    fn const_def(&self, lat: &ClassLattice, _value: i64) -> MethodSet {
        lat.top()
    }

    fn input_def(&self, lat: &ClassLattice) -> MethodSet {
        lat.top()
    }

    fn binop_def(
        &self,
        lat: &ClassLattice,
        _op: BinOp,
        _a: &MethodSet,
        _b: &MethodSet,
    ) -> MethodSet {
        lat.top()
    }

    fn use_contribution(&self, lat: &ClassLattice, kind: &InstKind) -> MethodSet {
        match kind {
            InstKind::Invoke { method, .. } => MethodSet([method.clone()].into_iter().collect()),
            _ => lat.top(),
        }
    }
}

/// The CLI's client names.
pub const CLIENT_NAMES: [&str; 5] = ["constprop", "ccp", "taint", "nullptr", "classinf"];
