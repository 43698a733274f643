//! Labelled sequents: a set of relational atoms constraining world labels,
//! and a set of labelled formulas read disjunctively.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{AgentId, Formula, FormulaSet};

/// A world label. Labels are plain numbers rendered `w0`, `w1`, ….
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

/// A relational atom on the left-hand side of a sequent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelAtom {
    /// `from` and `to` lie in the same choice cell of `agent`.
    Choice {
        /// Whose choice relation.
        agent: AgentId,
        /// Source label.
        from: Label,
        /// Target label.
        to: Label,
    },
    /// `at` is one of `agent`'s ideal worlds.
    Ideal {
        /// Whose ideal set.
        agent: AgentId,
        /// The flagged label.
        at: Label,
    },
}

impl RelAtom {
    /// Builds a choice atom.
    pub fn choice(agent: AgentId, from: Label, to: Label) -> RelAtom {
        RelAtom::Choice { agent, from, to }
    }

    /// Builds an ideal atom.
    pub fn ideal(agent: AgentId, at: Label) -> RelAtom {
        RelAtom::Ideal { agent, at }
    }
}

impl fmt::Display for RelAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelAtom::Choice { agent, from, to } => write!(f, "R[{agent}] {from} {to}"),
            RelAtom::Ideal { agent, at } => write!(f, "I[{agent}] {at}"),
        }
    }
}

/// A labelled sequent. The atoms are read conjunctively as constraints; the
/// labelled formulas disjunctively: whenever all atoms hold under an
/// interpretation of the labels, some labelled formula must hold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sequent {
    /// Relational atoms.
    pub rel: BTreeSet<RelAtom>,
    /// Labelled formulas `(label, formula)`.
    pub gamma: BTreeSet<(Label, Formula)>,
}

impl Sequent {
    /// The empty sequent.
    pub fn new() -> Sequent {
        Sequent::default()
    }

    /// The sequent `=> w0 : f` that proof search starts from: proving it
    /// establishes validity of `f`.
    pub fn goal(f: Formula) -> Sequent {
        let mut seq = Sequent::new();
        seq.gamma.insert((Label(0), f));
        seq
    }

    /// The sequent with every occurrence of `from` renamed to `to`.
    pub fn substitute(&self, from: Label, to: Label) -> Sequent {
        let sub = |w: Label| if w == from { to } else { w };
        Sequent {
            rel: self
                .rel
                .iter()
                .map(|atom| match *atom {
                    RelAtom::Choice { agent, from: a, to: b } => RelAtom::Choice {
                        agent,
                        from: sub(a),
                        to: sub(b),
                    },
                    RelAtom::Ideal { agent, at } => RelAtom::Ideal { agent, at: sub(at) },
                })
                .collect(),
            gamma: self.gamma.iter().map(|(w, f)| (sub(*w), f.clone())).collect(),
        }
    }

    /// Every label occurring in the sequent, in atoms or formulas.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        for atom in &self.rel {
            match atom {
                RelAtom::Choice { from, to, .. } => {
                    out.insert(*from);
                    out.insert(*to);
                }
                RelAtom::Ideal { at, .. } => {
                    out.insert(*at);
                }
            }
        }
        for (w, _) in &self.gamma {
            out.insert(*w);
        }
        out
    }

    /// The formulas labelled with `w`.
    pub fn restrict(&self, w: Label) -> FormulaSet {
        self.gamma
            .iter()
            .filter(|(u, _)| *u == w)
            .map(|(_, f)| f.clone())
            .collect()
    }

    /// Whether `w` and `u` are connected by a path of `agent`'s choice
    /// atoms, read undirected. Every label reaches itself.
    pub fn ri_path(&self, agent: AgentId, from: Label, to: Label) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        seen.insert(from);
        let mut queue = Vec::new();
        queue.push(from);
        while let Some(w) = queue.pop() {
            for atom in &self.rel {
                let RelAtom::Choice { agent: a, from: x, to: y } = atom else {
                    continue;
                };
                if *a != agent {
                    continue;
                }
                let next = if *x == w {
                    *y
                } else if *y == w {
                    *x
                } else {
                    continue;
                };
                if next == to {
                    return true;
                }
                if seen.insert(next) {
                    queue.push(next);
                }
            }
        }
        false
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for atom in &self.rel {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{atom}")?;
            first = false;
        }
        write!(f, " => ")?;
        first = true;
        for (w, phi) in &self.gamma {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{w} : {phi}")?;
            first = false;
        }
        Ok(())
    }
}
