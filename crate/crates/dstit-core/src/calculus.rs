//! The labelled sequent rules and the derivation checker.
//!
//! A derivation is checked bottom-up: every node must be a legal instance
//! of its rule, relative to the node's sequent as conclusion and its child
//! sequents as premises. Contexts are sets, so a premise may either keep or
//! drop the principal formula wherever the rule schema consumes it; both
//! readings are instances and both are accepted.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::sequent::{Label, RelAtom, Sequent};
use crate::syntax::{AgentId, Formula};

/// Names of the rules, for rendering and classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleName {
    /// Axiom leaf on a complementary literal pair.
    Id,
    /// Axiom leaf on an arbitrary complementary formula pair.
    GenId,
    /// Conjunction (two premises).
    And,
    /// Disjunction (adds both disjuncts).
    Or,
    /// Settledness box; introduces a fresh label.
    Box,
    /// Relabels a settledness box formula.
    BoxStar,
    /// Settledness diamond at an arbitrary existing label.
    Dia,
    /// Choice box; introduces a fresh related label.
    AgBox,
    /// Choice box at a label reached from `parent`; refreshes the witness.
    AgBoxStar,
    /// Choice diamond along an existing relation atom.
    AgDia,
    /// Choice diamond that also copies itself to the target label.
    AgDiaStar,
    /// Obligation; introduces a fresh ideal label.
    Ought,
    /// Relabels an obligation formula.
    OughtStar,
    /// Permission at an existing ideal label.
    Perm,
    /// Choice reflexivity.
    Ref,
    /// Choice euclideanness.
    Euc,
    /// Ideal-set seriality; introduces a fresh ideal label.
    D2,
    /// Ideal-set closure under the choice relation.
    D3,
    /// Independence of agents; introduces a fresh joint label.
    Ioa,
    /// A batch of independence steps applied at once.
    IoaOp,
    /// Choice-bound branching over k+1 labels.
    Apc,
    /// Choice symmetry (admissible).
    Sym,
    /// Choice transitivity (admissible).
    Tra,
    /// Label substitution (admissible).
    Sub,
    /// Weakening (admissible).
    Wk,
}

impl RuleName {
    /// The rule's stable text name, used in certificates and traces.
    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::Id => "id",
            RuleName::GenId => "gen-id",
            RuleName::And => "and",
            RuleName::Or => "or",
            RuleName::Box => "box",
            RuleName::BoxStar => "box-star",
            RuleName::Dia => "dia",
            RuleName::AgBox => "ag-box",
            RuleName::AgBoxStar => "ag-box-star",
            RuleName::AgDia => "ag-dia",
            RuleName::AgDiaStar => "ag-dia-star",
            RuleName::Ought => "ought",
            RuleName::OughtStar => "ought-star",
            RuleName::Perm => "perm",
            RuleName::Ref => "ref",
            RuleName::Euc => "euc",
            RuleName::D2 => "d2",
            RuleName::D3 => "d3",
            RuleName::Ioa => "ioa",
            RuleName::IoaOp => "ioa-op",
            RuleName::Apc => "apc",
            RuleName::Sym => "sym",
            RuleName::Tra => "tra",
            RuleName::Sub => "sub",
            RuleName::Wk => "wk",
        }
    }

    /// Inverse of [`RuleName::as_str`].
    pub fn from_str_name(s: &str) -> Option<RuleName> {
        use RuleName::*;
        let all = [
            Id, GenId, And, Or, Box, BoxStar, Dia, AgBox, AgBoxStar, AgDia, AgDiaStar, Ought,
            OughtStar, Perm, Ref, Euc, D2, D3, Ioa, IoaOp, Apc, Sym, Tra, Sub, Wk,
        ];
        all.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// A fully instantiated rule application.
///
/// Labels refer to the conclusion below the node (plus the declared fresh
/// labels); formulas are stored as written in the premise additions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleApp {
    /// Closes on `label : var` and `label : ~var`.
    Id {
        /// The clashing label.
        label: Label,
        /// The clashing variable.
        var: String,
    },
    /// Closes on `label : formula` and its negation.
    GenId {
        /// The clashing label.
        label: Label,
        /// The clashing formula (either polarity).
        formula: Formula,
    },
    /// Splits `label : left & right` into one premise per conjunct.
    And {
        /// Principal label.
        label: Label,
        /// Left conjunct.
        left: Formula,
        /// Right conjunct.
        right: Formula,
    },
    /// Expands `label : left | right` by adding both disjuncts.
    Or {
        /// Principal label.
        label: Label,
        /// Left disjunct.
        left: Formula,
        /// Right disjunct.
        right: Formula,
    },
    /// Expands `label : box body` to `fresh : body`, `fresh` new.
    Box {
        /// Principal label.
        label: Label,
        /// Box body.
        body: Formula,
        /// Eigenvariable.
        fresh: Label,
    },
    /// Moves `from : box body` to `to : box body`.
    BoxStar {
        /// Label carrying the formula in the conclusion.
        from: Label,
        /// Label carrying it in the premise.
        to: Label,
        /// Box body.
        body: Formula,
    },
    /// Expands `label : dia body` by adding `target : body`.
    Dia {
        /// Principal label.
        label: Label,
        /// Diamond body.
        body: Formula,
        /// Any label, existing or new.
        target: Label,
    },
    /// Expands `label : [agent] body` to a fresh related label.
    AgBox {
        /// Acting agent.
        agent: AgentId,
        /// Principal label.
        label: Label,
        /// Box body.
        body: Formula,
        /// Eigenvariable, choice-related to `label` in the premise.
        fresh: Label,
    },
    /// Expands `label : [agent] body` where `parent` is choice-related to
    /// `label`, by giving `parent` a fresh successor carrying `body`.
    AgBoxStar {
        /// Acting agent.
        agent: AgentId,
        /// Source of the existing relation atom.
        parent: Label,
        /// Principal label, target of the existing atom.
        label: Label,
        /// Box body.
        body: Formula,
        /// Eigenvariable, choice-related to `parent` in the premise.
        fresh: Label,
    },
    /// Expands `label : <agent> body` along an existing atom to `target`.
    AgDia {
        /// Acting agent.
        agent: AgentId,
        /// Principal label.
        label: Label,
        /// Diamond body.
        body: Formula,
        /// Target of the existing relation atom.
        target: Label,
    },
    /// Like [`RuleApp::AgDia`], but also copies the diamond to `target`.
    AgDiaStar {
        /// Acting agent.
        agent: AgentId,
        /// Principal label.
        label: Label,
        /// Diamond body.
        body: Formula,
        /// Target of the existing relation atom.
        target: Label,
    },
    /// Expands `label : O[agent] body` to a fresh ideal label.
    Ought {
        /// Acting agent.
        agent: AgentId,
        /// Principal label.
        label: Label,
        /// Obligation body.
        body: Formula,
        /// Eigenvariable, ideal-flagged in the premise.
        fresh: Label,
    },
    /// Moves `from : O[agent] body` to `to : O[agent] body`.
    OughtStar {
        /// Acting agent.
        agent: AgentId,
        /// Label carrying the formula in the conclusion.
        from: Label,
        /// Label carrying it in the premise.
        to: Label,
        /// Obligation body.
        body: Formula,
    },
    /// Expands `label : P[agent] body` at an existing ideal label.
    Perm {
        /// Acting agent.
        agent: AgentId,
        /// Principal label.
        label: Label,
        /// Permission body.
        body: Formula,
        /// Ideal-flagged label receiving the body.
        target: Label,
    },
    /// Adds the reflexive atom at `label`.
    Ref {
        /// Acting agent.
        agent: AgentId,
        /// Any label.
        label: Label,
    },
    /// From atoms `source -> left` and `source -> right`, adds
    /// `left -> right`.
    Euc {
        /// Acting agent.
        agent: AgentId,
        /// Common source of the two existing atoms.
        source: Label,
        /// Target of the first atom, source of the new one.
        left: Label,
        /// Target of the second atom and of the new one.
        right: Label,
    },
    /// Adds a fresh ideal label for the agent.
    D2 {
        /// Acting agent.
        agent: AgentId,
        /// Eigenvariable.
        fresh: Label,
    },
    /// Propagates the ideal flag along an existing atom `from -> to`.
    D3 {
        /// Acting agent.
        agent: AgentId,
        /// Ideal-flagged source of the atom.
        from: Label,
        /// Target inheriting the flag.
        to: Label,
    },
    /// Introduces a fresh label choice-related to one existing label per
    /// agent (`tuple[i]` for agent `i`).
    Ioa {
        /// One existing label per agent.
        tuple: Vec<Label>,
        /// Eigenvariable.
        fresh: Label,
    },
    /// Several [`RuleApp::Ioa`] applications batched into one step; each
    /// entry pairs the per-agent tuple with its fresh label.
    IoaOp {
        /// The batched independence steps.
        steps: Vec<(Vec<Label>, Label)>,
    },
    /// Branches over all ordered pairs among `labels` (k+1 of them),
    /// adding one relation atom per premise.
    Apc {
        /// Acting agent.
        agent: AgentId,
        /// The k+1 labels; premise (m, j) adds the atom from the m-th to
        /// the j-th, ordered lexicographically.
        labels: Vec<Label>,
    },
    /// Adds the mirror atom of `from -> to`.
    Sym {
        /// Acting agent.
        agent: AgentId,
        /// Source of the existing atom.
        from: Label,
        /// Target of the existing atom.
        to: Label,
    },
    /// From atoms `a -> b` and `b -> c`, adds `a -> c`.
    Tra {
        /// Acting agent.
        agent: AgentId,
        /// First source.
        a: Label,
        /// Middle label.
        b: Label,
        /// Final target.
        c: Label,
    },
    /// Replaces every occurrence of `replaced` in the premise by
    /// `replacement` to obtain the conclusion.
    Sub {
        /// Label substituted away.
        replaced: Label,
        /// Label taking its place.
        replacement: Label,
    },
    /// Premise is a componentwise subset of the conclusion.
    Wk,
}

impl RuleApp {
    /// The rule this application instantiates.
    pub fn name(&self) -> RuleName {
        match self {
            RuleApp::Id { .. } => RuleName::Id,
            RuleApp::GenId { .. } => RuleName::GenId,
            RuleApp::And { .. } => RuleName::And,
            RuleApp::Or { .. } => RuleName::Or,
            RuleApp::Box { .. } => RuleName::Box,
            RuleApp::BoxStar { .. } => RuleName::BoxStar,
            RuleApp::Dia { .. } => RuleName::Dia,
            RuleApp::AgBox { .. } => RuleName::AgBox,
            RuleApp::AgBoxStar { .. } => RuleName::AgBoxStar,
            RuleApp::AgDia { .. } => RuleName::AgDia,
            RuleApp::AgDiaStar { .. } => RuleName::AgDiaStar,
            RuleApp::Ought { .. } => RuleName::Ought,
            RuleApp::OughtStar { .. } => RuleName::OughtStar,
            RuleApp::Perm { .. } => RuleName::Perm,
            RuleApp::Ref { .. } => RuleName::Ref,
            RuleApp::Euc { .. } => RuleName::Euc,
            RuleApp::D2 { .. } => RuleName::D2,
            RuleApp::D3 { .. } => RuleName::D3,
            RuleApp::Ioa { .. } => RuleName::Ioa,
            RuleApp::IoaOp { .. } => RuleName::IoaOp,
            RuleApp::Apc { .. } => RuleName::Apc,
            RuleApp::Sym { .. } => RuleName::Sym,
            RuleApp::Tra { .. } => RuleName::Tra,
            RuleApp::Sub { .. } => RuleName::Sub,
            RuleApp::Wk => RuleName::Wk,
        }
    }
}

/// A derivation tree node: the sequent it concludes, the rule applied to it,
/// and one subtree per premise (none for axioms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    /// The conclusion of this node.
    pub sequent: Sequent,
    /// The rule applied, reading bottom-up.
    pub rule: RuleApp,
    /// Premise subtrees, in the rule's premise order.
    pub premises: Vec<Derivation>,
}

impl Derivation {
    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }

    /// Every rule name used in the tree.
    pub fn rule_names(&self) -> BTreeSet<RuleName> {
        let mut out = BTreeSet::new();
        self.collect_rule_names(&mut out);
        out
    }

    fn collect_rule_names(&self, out: &mut BTreeSet<RuleName>) {
        out.insert(self.rule.name());
        for p in &self.premises {
            p.collect_rule_names(out);
        }
    }
}

/// Options for [`check_step`] and [`check_derivation`].
#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Agent count; every agent index must be below it, and independence
    /// steps must supply tuples of exactly this length.
    pub agents: u32,
    /// Choice bound `k`; `0` disables the bound and with it the
    /// choice-bound branching rule.
    pub choices: u32,
    /// When set, generalized axiom leaves are rejected unless the clashing
    /// formula is a literal, forcing fully expanded proofs.
    pub expand_genid: bool,
}

/// Why a step is not a legal rule instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepError {
    /// Wrong number of premises for the rule.
    PremiseCount {
        /// The rule.
        rule: RuleName,
        /// How many premises it takes here.
        expected: usize,
        /// How many the node has.
        found: usize,
    },
    /// An agent index at or beyond the agent count.
    AgentOutOfRange {
        /// The offending index.
        agent: AgentId,
        /// The configured agent count.
        agents: u32,
    },
    /// A requirement on the conclusion fails: missing principal formula,
    /// missing side-condition atom, eigenvariable not fresh, or malformed
    /// instantiation data.
    Requirement {
        /// The rule.
        rule: RuleName,
        /// What is missing or malformed.
        msg: String,
    },
    /// The premise sequent is not what the rule instance produces.
    PremiseShape {
        /// The rule.
        rule: RuleName,
        /// Index of the offending premise.
        premise: usize,
        /// First observed difference.
        msg: String,
    },
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::PremiseCount {
                rule,
                expected,
                found,
            } => write!(f, "rule {rule} takes {expected} premises, found {found}"),
            StepError::AgentOutOfRange { agent, agents } => {
                write!(f, "agent index {agent} out of range (agent count is {agents})")
            }
            StepError::Requirement { rule, msg } => write!(f, "rule {rule}: {msg}"),
            StepError::PremiseShape { rule, premise, msg } => {
                write!(f, "rule {rule}, premise {premise}: {msg}")
            }
        }
    }
}

impl core::error::Error for StepError {}

/// A [`StepError`] located within a derivation tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckError {
    /// Premise indices from the root to the offending node.
    pub path: Vec<usize>,
    /// What is wrong at that node.
    pub error: StepError,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "at the root: {}", self.error)
        } else {
            let path: Vec<String> = self.path.iter().map(|i| i.to_string()).collect();
            write!(f, "at premise path {}: {}", path.join("."), self.error)
        }
    }
}

impl core::error::Error for CheckError {}

// What a premise's formula component may look like: exactly `keep`, or
// exactly `drop` when the rule schema consumes the principal.
struct GammaShape {
    keep: BTreeSet<(Label, Formula)>,
    drop: Option<BTreeSet<(Label, Formula)>>,
}

fn gamma_diff(rule: RuleName, idx: usize, got: &Sequent, shape: &GammaShape) -> Result<(), StepError> {
    if got.gamma == shape.keep {
        return Ok(());
    }
    if let Some(drop) = &shape.drop {
        if &got.gamma == drop {
            return Ok(());
        }
    }
    // Report the first difference against the keep variant.
    let msg = if let Some((w, f)) = shape.keep.difference(&got.gamma).next() {
        format!("missing labelled formula {w} : {f}")
    } else if let Some((w, f)) = got.gamma.difference(&shape.keep).next() {
        format!("unexpected labelled formula {w} : {f}")
    } else {
        "labelled formulas differ".to_string()
    };
    Err(StepError::PremiseShape {
        rule,
        premise: idx,
        msg,
    })
}

fn rel_diff(
    rule: RuleName,
    idx: usize,
    got: &Sequent,
    expected: &BTreeSet<RelAtom>,
) -> Result<(), StepError> {
    if &got.rel == expected {
        return Ok(());
    }
    let msg = if let Some(a) = expected.difference(&got.rel).next() {
        format!("missing relational atom {a}")
    } else if let Some(a) = got.rel.difference(expected).next() {
        format!("unexpected relational atom {a}")
    } else {
        "relational atoms differ".to_string()
    };
    Err(StepError::PremiseShape {
        rule,
        premise: idx,
        msg,
    })
}

struct StepCheck<'a> {
    conclusion: &'a Sequent,
    opts: &'a CheckOptions,
    rule: RuleName,
}

impl<'a> StepCheck<'a> {
    fn agent(&self, i: AgentId) -> Result<(), StepError> {
        if i.0 < self.opts.agents {
            Ok(())
        } else {
            Err(StepError::AgentOutOfRange {
                agent: i,
                agents: self.opts.agents,
            })
        }
    }

    fn req(&self, msg: String) -> StepError {
        StepError::Requirement {
            rule: self.rule,
            msg,
        }
    }

    fn principal(&self, w: Label, f: &Formula) -> Result<(), StepError> {
        if self.conclusion.gamma.contains(&(w, f.clone())) {
            Ok(())
        } else {
            Err(self.req(format!("principal formula {w} : {f} not in the conclusion")))
        }
    }

    fn side_atom(&self, atom: &RelAtom) -> Result<(), StepError> {
        if self.conclusion.rel.contains(atom) {
            Ok(())
        } else {
            Err(self.req(format!("side-condition atom {atom} not in the conclusion")))
        }
    }

    fn fresh(&self, labels: &BTreeSet<Label>, v: Label) -> Result<(), StepError> {
        if labels.contains(&v) {
            Err(self.req(format!("eigenvariable {v} already occurs in the conclusion")))
        } else {
            Ok(())
        }
    }

    // Premise shape for a rule that only adds: relation atoms exactly
    // conclusion + `atoms`; formulas exactly conclusion + `adds`, with the
    // principal optionally dropped when `principal` is given.
    fn additive(
        &self,
        idx: usize,
        premise: &Sequent,
        atoms: &[RelAtom],
        adds: &[(Label, Formula)],
        principal: Option<(Label, &Formula)>,
    ) -> Result<(), StepError> {
        let mut rel = self.conclusion.rel.clone();
        rel.extend(atoms.iter().cloned());
        rel_diff(self.rule, idx, premise, &rel)?;

        let mut keep = self.conclusion.gamma.clone();
        for add in adds {
            keep.insert(add.clone());
        }
        let drop = principal.map(|(w, f)| {
            let mut g = keep.clone();
            g.remove(&(w, f.clone()));
            g
        });
        gamma_diff(self.rule, idx, premise, &GammaShape { keep, drop })
    }
}

/// Checks that `premises` are exactly what applying `rule` to `conclusion`
/// produces, including principal-formula presence, side-condition atoms,
/// eigenvariable freshness, and agent ranges.
pub fn check_step(
    conclusion: &Sequent,
    rule: &RuleApp,
    premises: &[&Sequent],
    opts: &CheckOptions,
) -> Result<(), StepError> {
    let name = rule.name();
    let expected_premises = match rule {
        RuleApp::Id { .. } | RuleApp::GenId { .. } => 0,
        RuleApp::And { .. } => 2,
        RuleApp::Apc { .. } => {
            let k = opts.choices as usize;
            k * (k + 1) / 2
        }
        _ => 1,
    };
    if premises.len() != expected_premises {
        return Err(StepError::PremiseCount {
            rule: name,
            expected: expected_premises,
            found: premises.len(),
        });
    }

    let chk = StepCheck {
        conclusion,
        opts,
        rule: name,
    };
    let labels = conclusion.labels();

    match rule {
        RuleApp::Id { label, var } => {
            chk.principal(*label, &Formula::Atom(var.clone()))?;
            chk.principal(*label, &Formula::NegAtom(var.clone()))?;
            Ok(())
        }
        RuleApp::GenId { label, formula } => {
            if opts.expand_genid && !formula.is_literal() {
                return Err(chk.req(format!(
                    "generalized axiom on non-literal {formula} rejected (expand-genid)"
                )));
            }
            chk.principal(*label, formula)?;
            chk.principal(*label, &formula.negate())?;
            Ok(())
        }
        RuleApp::And { label, left, right } => {
            let conj = Formula::And(left.clone().into(), right.clone().into());
            chk.principal(*label, &conj)?;
            chk.additive(0, premises[0], &[], &[(*label, left.clone())], Some((*label, &conj)))?;
            chk.additive(1, premises[1], &[], &[(*label, right.clone())], Some((*label, &conj)))?;
            Ok(())
        }
        RuleApp::Or { label, left, right } => {
            let disj = Formula::Or(left.clone().into(), right.clone().into());
            chk.principal(*label, &disj)?;
            chk.additive(
                0,
                premises[0],
                &[],
                &[(*label, left.clone()), (*label, right.clone())],
                Some((*label, &disj)),
            )
        }
        RuleApp::Box { label, body, fresh } => {
            let boxed = Formula::Box(body.clone().into());
            chk.principal(*label, &boxed)?;
            chk.fresh(&labels, *fresh)?;
            chk.additive(
                0,
                premises[0],
                &[],
                &[(*fresh, body.clone())],
                Some((*label, &boxed)),
            )
        }
        RuleApp::BoxStar { from, to, body } => {
            let boxed = Formula::Box(body.clone().into());
            chk.principal(*from, &boxed)?;
            chk.additive(
                0,
                premises[0],
                &[],
                &[(*to, boxed.clone())],
                Some((*from, &boxed)),
            )
        }
        RuleApp::Dia {
            label,
            body,
            target,
        } => {
            let dia = Formula::Dia(body.clone().into());
            chk.principal(*label, &dia)?;
            chk.additive(0, premises[0], &[], &[(*target, body.clone())], None)
        }
        RuleApp::AgBox {
            agent,
            label,
            body,
            fresh,
        } => {
            chk.agent(*agent)?;
            let boxed = Formula::AgBox(*agent, body.clone().into());
            chk.principal(*label, &boxed)?;
            chk.fresh(&labels, *fresh)?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::choice(*agent, *label, *fresh)],
                &[(*fresh, body.clone())],
                Some((*label, &boxed)),
            )
        }
        RuleApp::AgBoxStar {
            agent,
            parent,
            label,
            body,
            fresh,
        } => {
            chk.agent(*agent)?;
            let boxed = Formula::AgBox(*agent, body.clone().into());
            chk.side_atom(&RelAtom::choice(*agent, *parent, *label))?;
            chk.principal(*label, &boxed)?;
            chk.fresh(&labels, *fresh)?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::choice(*agent, *parent, *fresh)],
                &[(*fresh, body.clone())],
                None,
            )
        }
        RuleApp::AgDia {
            agent,
            label,
            body,
            target,
        } => {
            chk.agent(*agent)?;
            let dia = Formula::AgDia(*agent, body.clone().into());
            chk.principal(*label, &dia)?;
            chk.side_atom(&RelAtom::choice(*agent, *label, *target))?;
            chk.additive(0, premises[0], &[], &[(*target, body.clone())], None)
        }
        RuleApp::AgDiaStar {
            agent,
            label,
            body,
            target,
        } => {
            chk.agent(*agent)?;
            let dia = Formula::AgDia(*agent, body.clone().into());
            chk.principal(*label, &dia)?;
            chk.side_atom(&RelAtom::choice(*agent, *label, *target))?;
            chk.additive(
                0,
                premises[0],
                &[],
                &[(*target, body.clone()), (*target, dia.clone())],
                None,
            )
        }
        RuleApp::Ought {
            agent,
            label,
            body,
            fresh,
        } => {
            chk.agent(*agent)?;
            let ought = Formula::Ought(*agent, body.clone().into());
            chk.principal(*label, &ought)?;
            chk.fresh(&labels, *fresh)?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::ideal(*agent, *fresh)],
                &[(*fresh, body.clone())],
                Some((*label, &ought)),
            )
        }
        RuleApp::OughtStar {
            agent,
            from,
            to,
            body,
        } => {
            chk.agent(*agent)?;
            let ought = Formula::Ought(*agent, body.clone().into());
            chk.principal(*from, &ought)?;
            chk.additive(
                0,
                premises[0],
                &[],
                &[(*to, ought.clone())],
                Some((*from, &ought)),
            )
        }
        RuleApp::Perm {
            agent,
            label,
            body,
            target,
        } => {
            chk.agent(*agent)?;
            let perm = Formula::Perm(*agent, body.clone().into());
            chk.principal(*label, &perm)?;
            chk.side_atom(&RelAtom::ideal(*agent, *target))?;
            chk.additive(0, premises[0], &[], &[(*target, body.clone())], None)
        }
        RuleApp::Ref { agent, label } => {
            chk.agent(*agent)?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::choice(*agent, *label, *label)],
                &[],
                None,
            )
        }
        RuleApp::Euc {
            agent,
            source,
            left,
            right,
        } => {
            chk.agent(*agent)?;
            chk.side_atom(&RelAtom::choice(*agent, *source, *left))?;
            chk.side_atom(&RelAtom::choice(*agent, *source, *right))?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::choice(*agent, *left, *right)],
                &[],
                None,
            )
        }
        RuleApp::D2 { agent, fresh } => {
            chk.agent(*agent)?;
            chk.fresh(&labels, *fresh)?;
            chk.additive(0, premises[0], &[RelAtom::ideal(*agent, *fresh)], &[], None)
        }
        RuleApp::D3 { agent, from, to } => {
            chk.agent(*agent)?;
            chk.side_atom(&RelAtom::choice(*agent, *from, *to))?;
            chk.side_atom(&RelAtom::ideal(*agent, *from))?;
            chk.additive(0, premises[0], &[RelAtom::ideal(*agent, *to)], &[], None)
        }
        RuleApp::Ioa { tuple, fresh } => {
            if tuple.len() != opts.agents as usize {
                return Err(chk.req(format!(
                    "tuple has {} labels, agent count is {}",
                    tuple.len(),
                    opts.agents
                )));
            }
            for w in tuple {
                if !labels.contains(w) {
                    return Err(chk.req(format!("tuple label {w} not in the conclusion")));
                }
            }
            chk.fresh(&labels, *fresh)?;
            let atoms: Vec<RelAtom> = tuple
                .iter()
                .enumerate()
                .map(|(i, w)| RelAtom::choice(AgentId(i as u32), *w, *fresh))
                .collect();
            chk.additive(0, premises[0], &atoms, &[], None)
        }
        RuleApp::IoaOp { steps } => {
            if steps.is_empty() {
                return Err(chk.req("batch contains no steps".to_string()));
            }
            let mut atoms = Vec::new();
            let mut introduced: BTreeSet<Label> = BTreeSet::new();
            for (tuple, fresh) in steps {
                if tuple.len() != opts.agents as usize {
                    return Err(chk.req(format!(
                        "tuple has {} labels, agent count is {}",
                        tuple.len(),
                        opts.agents
                    )));
                }
                for w in tuple {
                    if !labels.contains(w) {
                        return Err(chk.req(format!("tuple label {w} not in the conclusion")));
                    }
                }
                chk.fresh(&labels, *fresh)?;
                if !introduced.insert(*fresh) {
                    return Err(chk.req(format!("eigenvariable {fresh} used twice in the batch")));
                }
                for (i, w) in tuple.iter().enumerate() {
                    atoms.push(RelAtom::choice(AgentId(i as u32), *w, *fresh));
                }
            }
            chk.additive(0, premises[0], &atoms, &[], None)
        }
        RuleApp::Apc { agent, labels: ws } => {
            chk.agent(*agent)?;
            let k = opts.choices as usize;
            if k == 0 {
                return Err(chk.req("choice-bound branching needs a positive bound".to_string()));
            }
            if ws.len() != k + 1 {
                return Err(chk.req(format!("needs {} labels, found {}", k + 1, ws.len())));
            }
            let mut idx = 0;
            for m in 0..k {
                for j in (m + 1)..=k {
                    chk.additive(
                        idx,
                        premises[idx],
                        &[RelAtom::choice(*agent, ws[m], ws[j])],
                        &[],
                        None,
                    )?;
                    idx += 1;
                }
            }
            Ok(())
        }
        RuleApp::Sym { agent, from, to } => {
            chk.agent(*agent)?;
            chk.side_atom(&RelAtom::choice(*agent, *from, *to))?;
            chk.additive(
                0,
                premises[0],
                &[RelAtom::choice(*agent, *to, *from)],
                &[],
                None,
            )
        }
        RuleApp::Tra { agent, a, b, c } => {
            chk.agent(*agent)?;
            chk.side_atom(&RelAtom::choice(*agent, *a, *b))?;
            chk.side_atom(&RelAtom::choice(*agent, *b, *c))?;
            chk.additive(0, premises[0], &[RelAtom::choice(*agent, *a, *c)], &[], None)
        }
        RuleApp::Sub {
            replaced,
            replacement,
        } => {
            let substituted = premises[0].substitute(*replaced, *replacement);
            if &substituted == conclusion {
                Ok(())
            } else {
                Err(StepError::PremiseShape {
                    rule: name,
                    premise: 0,
                    msg: format!(
                        "substituting {replacement} for {replaced} in the premise does not give the conclusion"
                    ),
                })
            }
        }
        RuleApp::Wk => {
            let p = premises[0];
            if let Some(a) = p.rel.difference(&conclusion.rel).next() {
                return Err(StepError::PremiseShape {
                    rule: name,
                    premise: 0,
                    msg: format!("premise atom {a} not in the conclusion"),
                });
            }
            if let Some((w, f)) = p.gamma.difference(&conclusion.gamma).next() {
                return Err(StepError::PremiseShape {
                    rule: name,
                    premise: 0,
                    msg: format!("premise formula {w} : {f} not in the conclusion"),
                });
            }
            Ok(())
        }
    }
}

/// Checks a whole derivation bottom-up, locating the first bad node.
pub fn check_derivation(d: &Derivation, opts: &CheckOptions) -> Result<(), CheckError> {
    let mut path = Vec::new();
    check_node(d, opts, &mut path)
}

fn check_node(d: &Derivation, opts: &CheckOptions, path: &mut Vec<usize>) -> Result<(), CheckError> {
    let premises: Vec<&Sequent> = d.premises.iter().map(|p| &p.sequent).collect();
    check_step(&d.sequent, &d.rule, &premises, opts).map_err(|error| CheckError {
        path: path.clone(),
        error,
    })?;
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        check_node(p, opts, path)?;
        path.pop();
    }
    Ok(())
}
