//! Proof search: decides validity by saturating a labelled sequent, either
//! closing every branch (yielding a checkable derivation) or reaching a
//! stable sequent (yielding a finite countermodel and the world falsifying
//! the formula there).
//!
//! The engine keeps a single mutable state plus an undo journal; branching
//! rules are explored depth-first by rolling the journal back between
//! premises, so memory stays proportional to one branch. Scheduling is
//! worklist-driven but the worklists are only an acceleration: stability is
//! re-verified against the literal saturation conditions before a
//! countermodel is ever reported.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::calculus::{check_derivation, CheckOptions, Derivation, RuleApp, RuleName};
use crate::semantics::{DsModel, WorldId};
use crate::sequent::{Label, RelAtom, Sequent};
use crate::syntax::{AgentId, Formula};

/// Why a label exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LabelOrigin {
    /// The initial label carrying the goal formula.
    Root,
    /// Witness for a settledness box.
    ByBox,
    /// Ideal witness for an obligation.
    ByOught,
    /// Ideal witness from the seriality rule.
    ByD2,
    /// Choice successor for a choice box.
    ByAgBox,
    /// Refreshed choice successor created under a joint label's parent.
    ByAgBoxStar,
    /// Joint successor from the independence-of-agents batch.
    ByIoa,
}

/// Loop-check classification of a label, recomputed on demand from the
/// current sequent (labels can become blocked and unblocked again as their
/// formula sets grow).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    /// Expandable.
    Unblocked,
    /// Repeats the carried payload of the given proper ancestor.
    DirectlyBlocked(Label),
    /// Lives below a directly blocked label.
    IndirectlyBlocked,
}

impl BlockStatus {
    /// True unless the status is [`BlockStatus::Unblocked`].
    pub fn is_blocked(self) -> bool {
        !matches!(self, BlockStatus::Unblocked)
    }
}

/// Result of deciding a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// The formula is valid; the derivation proves it and passes
    /// [`check_derivation`].
    Valid(Derivation),
    /// The formula is invalid; it fails at `world` of `model`.
    Invalid {
        /// The extracted countermodel.
        model: DsModel,
        /// The world where the goal formula fails.
        world: WorldId,
    },
}

/// Failure modes of the search itself (not verdicts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchError {
    /// More labels than the configured cap were created.
    LabelCapExceeded {
        /// The configured cap.
        cap: u32,
        /// Counters up to the stop, for divergence diagnostics.
        stats: Box<SearchStats>,
    },
    /// The step budget ran out (only reachable when a budget is set).
    BudgetExhausted {
        /// The configured budget.
        budget: u64,
        /// Counters up to the stop, for divergence diagnostics.
        stats: Box<SearchStats>,
    },
    /// A formula mentions an agent index at or beyond the agent count.
    AgentOutOfRange {
        /// The offending index.
        agent: AgentId,
        /// The configured agent count.
        agents: u32,
    },
    /// Bad configuration (zero agents, zero label cap).
    InvalidConfig {
        /// What is wrong.
        msg: String,
    },
    /// No rule fires but the sequent fails the literal stability check, or
    /// an emitted derivation fails re-checking. Indicates a defect in the
    /// engine, never expected on any input.
    Internal {
        /// Diagnostic description.
        msg: String,
    },
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::LabelCapExceeded { cap, .. } => {
                write!(f, "label cap of {cap} exceeded during proof search")
            }
            SearchError::BudgetExhausted { budget, .. } => {
                write!(f, "step budget of {budget} exhausted")
            }
            SearchError::AgentOutOfRange { agent, agents } => {
                write!(f, "agent index {agent} out of range (agent count is {agents})")
            }
            SearchError::InvalidConfig { msg } => write!(f, "invalid configuration: {msg}"),
            SearchError::Internal { msg } => write!(f, "internal error: {msg}"),
        }
    }
}

impl core::error::Error for SearchError {}

/// Configuration for [`prove`].
#[derive(Debug, Clone)]
pub struct ProveConfig {
    /// Number of agents.
    pub agents: u32,
    /// Choice bound `k`; `0` disables the bound.
    pub choices: u32,
    /// Abort with [`SearchError::LabelCapExceeded`] beyond this many labels.
    pub label_cap: u32,
    /// Loop checking: when disabled, ancestor blocking is ignored and choice
    /// boxes expand naively, so invalid formulas with infinite tableaux
    /// diverge until the budget or label cap stops them.
    pub loop_check: bool,
    /// Optional hard limit on applied rule steps.
    pub budget: Option<u64>,
    /// Record a [`TraceStep`] for every applied rule.
    pub trace: bool,
}

impl Default for ProveConfig {
    fn default() -> ProveConfig {
        ProveConfig {
            agents: 1,
            choices: 0,
            label_cap: 10_000,
            loop_check: true,
            budget: None,
            trace: false,
        }
    }
}

/// One applied rule, for `--trace` style output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    /// 1-based step number in application order (across all branches).
    pub index: u64,
    /// The rule applied.
    pub rule: RuleName,
    /// Rendering of the principal formula or atoms.
    pub principal: String,
    /// The eigenvariable, for rules that introduce one.
    pub fresh: Option<Label>,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {} principal={}", self.index, self.rule, self.principal)?;
        match self.fresh {
            Some(v) => write!(f, " fresh={v}"),
            None => write!(f, " fresh=-"),
        }
    }
}

/// An edge of the label-generation tree created by a choice-box expansion,
/// kept for divergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoiceEdge {
    /// The label the new one hangs under.
    pub parent: Label,
    /// The created label.
    pub child: Label,
    /// The expanding agent.
    pub agent: AgentId,
}

/// Aggregate counters over the whole search (all branches).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Applied rule steps.
    pub steps: u64,
    /// Peak number of labels alive at once.
    pub max_labels: u32,
    /// Peak box expansions for a single box body within one branch.
    pub max_box_fires_per_formula: u32,
    /// Peak obligation expansions for a single body within one branch.
    pub max_ought_fires_per_formula: u32,
    /// Peak seriality expansions for a single agent within one branch.
    pub max_d2_fires_per_agent: u32,
    /// Labels created by choice-box expansions, with their parents.
    pub choice_edges: Vec<ChoiceEdge>,
    /// How many times each rule fired, over the whole search.
    pub rule_fires: BTreeMap<RuleName, u64>,
}

/// Outcome of [`prove`]: the verdict plus observability data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchReport {
    /// The decision.
    pub verdict: Verdict,
    /// Counters for termination/instrumentation checks.
    pub stats: SearchStats,
    /// Applied steps, when tracing was requested.
    pub trace: Vec<TraceStep>,
    /// The stable sequent a countermodel was extracted from, when the
    /// verdict is invalid.
    pub stable_sequent: Option<Sequent>,
}

// ---------------------------------------------------------------------------
// Union-find with undo, one per agent, over dense label ids.

#[derive(Debug, Clone, Default)]
struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
    classes: u32,
    merges: Vec<(u32, u32)>, // (absorbed root, surviving root)
}

impl Dsu {
    fn grow(&mut self) {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        self.classes += 1;
    }

    fn shrink(&mut self) {
        self.parent.pop();
        self.size.pop();
        self.classes -= 1;
    }

    fn find(&self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (small, big) = if self.size[ra as usize] < self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.merges.push((small, big));
        self.classes -= 1;
        true
    }

    fn undo_union(&mut self) {
        let (small, big) = self.merges.pop().expect("union journal underflow");
        self.parent[small as usize] = small;
        self.size[big as usize] -= self.size[small as usize];
        self.classes += 1;
    }
}

// ---------------------------------------------------------------------------
// Worklist keys, index keys, and journal deltas.

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum QKey {
    Ref(Label, AgentId),
    Euc(Label, Label, Label, AgentId),
    D3(Label, Label, AgentId),
    Or(Label, Formula),
    And(Label, Formula),
    Dia(Label, Formula, Label),
    AgDia(Label, AgentId, Formula, Label),
    Perm(Label, AgentId, Formula, Label),
    Box(Label, Formula),
    Ought(Label, AgentId, Formula),
    D2(AgentId),
    AgBoxCand(Label, AgentId, Formula),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum CKey {
    Body(Formula),
    IdealBody(AgentId, Formula),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum HKey {
    BoxHolder(Formula, Label),
    OughtHolder(AgentId, Formula, Label),
    DiaHolder(Formula, Label),
    AgDiaAt(AgentId, Label, Formula),
    AgDiaHolder(AgentId, Formula, Label),
    PermAt(AgentId, Label, Formula),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum FireKey {
    Box(Formula),
    Ought(AgentId, Formula),
    D2(AgentId),
}

#[derive(Debug, Clone)]
enum Delta {
    Rel(RelAtom),
    GammaAdd(Label, Formula),
    GammaDel(Label, Formula),
    LabelNew(Label),
    Union(u32),
    QAdd(QKey),
    QDel(QKey),
    CntInc(CKey),
    CntDec(CKey),
    HolderAdd(HKey),
    HolderDel(HKey),
    ClashAdd(Label, Formula),
    ClashDel(Label, Formula),
    IoaDone(Vec<Label>),
    FireInc(FireKey),
}

#[derive(Debug, Clone)]
struct LabelInfo {
    origin: LabelOrigin,
    parent: Option<Label>,
    tuple: Option<Vec<Label>>,
}

/// The mutable search state: the sequent under construction plus the
/// indexes and worklists driving rule selection.
///
/// The state is public so the blocking, stability, independence, and
/// extraction operations can be exercised on hand-built configurations;
/// [`prove`] drives it internally.
#[derive(Debug, Clone, Default)]
pub struct SearchState {
    agents: u32,
    choices: u32,
    rel: BTreeSet<RelAtom>,
    gamma: BTreeMap<Label, BTreeSet<Formula>>,
    labels: BTreeMap<Label, LabelInfo>,
    next_label: u32,
    succ: BTreeMap<(AgentId, Label), BTreeSet<Label>>,
    ideal: BTreeMap<AgentId, BTreeSet<Label>>,
    dsu: Vec<Dsu>,
    queues: BTreeSet<QKey>,
    counts: BTreeMap<CKey, u32>,
    holders: BTreeSet<HKey>,
    clashes: BTreeSet<(Label, Formula)>,
    ioa_done: BTreeSet<Vec<Label>>,
    fire_counts: BTreeMap<FireKey, u32>,
    journal: Vec<Delta>,
}

impl SearchState {
    /// A fresh state with only the root label `w0` and no formulas.
    pub fn new(agents: u32, choices: u32) -> SearchState {
        let mut st = SearchState {
            agents,
            choices,
            dsu: (0..agents).map(|_| Dsu::default()).collect(),
            ..SearchState::default()
        };
        for i in 0..agents {
            st.ideal.insert(AgentId(i), BTreeSet::new());
            st.queue_add(QKey::D2(AgentId(i)));
        }
        st.create_label(LabelOrigin::Root, None, None);
        st
    }

    /// The root label, `w0`.
    pub fn root() -> Label {
        Label(0)
    }

    /// Agent count the state was built for.
    pub fn agents(&self) -> u32 {
        self.agents
    }

    /// Choice bound the state was built for.
    pub fn choices(&self) -> u32 {
        self.choices
    }

    /// All labels in creation order.
    pub fn label_ids(&self) -> Vec<Label> {
        self.labels.keys().copied().collect()
    }

    /// The current sequent (relational atoms plus labelled formulas).
    pub fn sequent(&self) -> Sequent {
        let mut seq = Sequent::new();
        seq.rel = self.rel.clone();
        for (w, fs) in &self.gamma {
            for f in fs {
                seq.gamma.insert((*w, f.clone()));
            }
        }
        seq
    }

    fn journal_len(&self) -> usize {
        self.journal.len()
    }

    fn origin(&self, w: Label) -> LabelOrigin {
        self.labels[&w].origin
    }

    fn is_ioa(&self, w: Label) -> bool {
        self.origin(w) == LabelOrigin::ByIoa
    }

    fn gamma_at(&self, w: Label) -> &BTreeSet<Formula> {
        &self.gamma[&w]
    }

    fn has(&self, w: Label, f: &Formula) -> bool {
        self.gamma.get(&w).is_some_and(|s| s.contains(f))
    }

    fn count(&self, key: &CKey) -> u32 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    fn succ_of(&self, agent: AgentId, w: Label) -> Option<&BTreeSet<Label>> {
        self.succ.get(&(agent, w))
    }

    fn ideal_of(&self, agent: AgentId) -> &BTreeSet<Label> {
        &self.ideal[&agent]
    }

    // -- journaled primitive mutations ------------------------------------

    fn queue_add(&mut self, key: QKey) {
        if self.queues.insert(key.clone()) {
            self.journal.push(Delta::QAdd(key));
        }
    }

    fn queue_del(&mut self, key: QKey) {
        if self.queues.remove(&key) {
            self.journal.push(Delta::QDel(key));
        }
    }

    fn holder_add(&mut self, key: HKey) {
        if self.holders.insert(key.clone()) {
            self.journal.push(Delta::HolderAdd(key));
        }
    }

    fn holder_del(&mut self, key: HKey) {
        if self.holders.remove(&key) {
            self.journal.push(Delta::HolderDel(key));
        }
    }

    fn count_inc(&mut self, key: CKey) -> u32 {
        let c = self.counts.entry(key.clone()).or_insert(0);
        *c += 1;
        let now = *c;
        self.journal.push(Delta::CntInc(key));
        now
    }

    fn count_dec(&mut self, key: CKey) -> u32 {
        let c = self.counts.get_mut(&key).expect("count underflow");
        *c -= 1;
        let now = *c;
        self.journal.push(Delta::CntDec(key));
        now
    }

    fn fire_inc(&mut self, key: FireKey) -> u32 {
        let c = self.fire_counts.entry(key.clone()).or_insert(0);
        *c += 1;
        let now = *c;
        self.journal.push(Delta::FireInc(key));
        now
    }

    fn fire_count(&self, key: &FireKey) -> u32 {
        self.fire_counts.get(key).copied().unwrap_or(0)
    }

    /// Creates a label. `parent` is its generation-tree parent (joint labels
    /// have none); `tuple` records, for joint labels, the per-agent labels
    /// they were created from.
    pub fn create_label(
        &mut self,
        origin: LabelOrigin,
        parent: Option<Label>,
        tuple: Option<Vec<Label>>,
    ) -> Label {
        if let Some(p) = parent {
            assert!(self.labels.contains_key(&p), "parent label must exist");
        }
        let label = Label(self.next_label);
        self.next_label += 1;
        self.labels.insert(
            label,
            LabelInfo {
                origin,
                parent,
                tuple,
            },
        );
        self.gamma.insert(label, BTreeSet::new());
        for dsu in &mut self.dsu {
            dsu.grow();
        }
        self.journal.push(Delta::LabelNew(label));
        for i in 0..self.agents {
            self.queue_add(QKey::Ref(label, AgentId(i)));
        }
        // Settledness diamonds must reach every label, including this one.
        let feeds: Vec<(Label, Formula)> = self
            .holders
            .range(HKey::DiaHolder(min_formula(), Label(0))..)
            .take_while(|h| matches!(h, HKey::DiaHolder(..)))
            .filter_map(|h| match h {
                HKey::DiaHolder(body, src) => Some((*src, body.clone())),
                _ => None,
            })
            .collect();
        for (src, body) in feeds {
            self.queue_add(QKey::Dia(src, body, label));
        }
        label
    }

    /// Adds a relational atom (no-op if present), maintaining indexes and
    /// worklists.
    pub fn add_atom(&mut self, atom: RelAtom) {
        if self.rel.contains(&atom) {
            return;
        }
        self.rel.insert(atom);
        self.journal.push(Delta::Rel(atom));
        match atom {
            RelAtom::Choice { agent, from, to } => {
                self.succ.entry((agent, from)).or_default().insert(to);
                if self.dsu[agent.0 as usize].union(from.0, to.0) {
                    self.journal.push(Delta::Union(agent.0));
                }
                // New euclidean candidates pairing this atom with every atom
                // sharing its source.
                let siblings: Vec<Label> = self.succ[&(agent, from)]
                    .iter()
                    .copied()
                    .filter(|v| *v != to)
                    .collect();
                for v in siblings {
                    self.queue_add(QKey::Euc(from, to, v, agent));
                    self.queue_add(QKey::Euc(from, v, to, agent));
                }
                if self.ideal[&agent].contains(&from) {
                    self.queue_add(QKey::D3(from, to, agent));
                }
                let bodies: Vec<Formula> = self
                    .holders
                    .range(HKey::AgDiaAt(agent, from, min_formula())..)
                    .take_while(|h| matches!(h, HKey::AgDiaAt(a, w, _) if *a == agent && *w == from))
                    .filter_map(|h| match h {
                        HKey::AgDiaAt(_, _, body) => Some(body.clone()),
                        _ => None,
                    })
                    .collect();
                for body in bodies {
                    self.queue_add(QKey::AgDia(from, agent, body, to));
                }
            }
            RelAtom::Ideal { agent, at } => {
                self.ideal.get_mut(&agent).expect("agent in range").insert(at);
                let succs: Vec<Label> = self
                    .succ_of(agent, at)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                for u in succs {
                    self.queue_add(QKey::D3(at, u, agent));
                }
                let perms: Vec<(Label, Formula)> = self
                    .holders
                    .range(HKey::PermAt(agent, Label(0), min_formula())..)
                    .take_while(|h| matches!(h, HKey::PermAt(a, _, _) if *a == agent))
                    .filter_map(|h| match h {
                        HKey::PermAt(_, holder, body) => Some((*holder, body.clone())),
                        _ => None,
                    })
                    .collect();
                for (holder, body) in perms {
                    self.queue_add(QKey::Perm(holder, agent, body, at));
                }
                let carried: Vec<Formula> = self.gamma_at(at).iter().cloned().collect();
                for f in carried {
                    self.count_inc(CKey::IdealBody(agent, f));
                }
            }
        }
    }

    /// Adds a labelled formula (no-op if present), maintaining indexes and
    /// worklists.
    pub fn add_formula(&mut self, w: Label, f: Formula) {
        assert!(self.labels.contains_key(&w), "label must exist");
        if self.has(w, &f) {
            return;
        }
        self.gamma.get_mut(&w).unwrap().insert(f.clone());
        self.journal.push(Delta::GammaAdd(w, f.clone()));

        let negated = f.negate();
        if self.has(w, &negated) {
            let canon = core::cmp::min(f.clone(), negated);
            if self.clashes.insert((w, canon.clone())) {
                self.journal.push(Delta::ClashAdd(w, canon));
            }
        }

        self.count_inc(CKey::Body(f.clone()));
        for i in 0..self.agents {
            let agent = AgentId(i);
            if self.ideal[&agent].contains(&w) {
                self.count_inc(CKey::IdealBody(agent, f.clone()));
            }
        }

        match &f {
            Formula::Atom(_) | Formula::NegAtom(_) => {}
            Formula::Or(..) => self.queue_add(QKey::Or(w, f.clone())),
            Formula::And(..) => self.queue_add(QKey::And(w, f.clone())),
            Formula::Box(b) => {
                self.holder_add(HKey::BoxHolder((**b).clone(), w));
                self.queue_add(QKey::Box(w, (**b).clone()));
            }
            Formula::Dia(b) => {
                self.holder_add(HKey::DiaHolder((**b).clone(), w));
                let targets: Vec<Label> = self.labels.keys().copied().collect();
                for u in targets {
                    self.queue_add(QKey::Dia(w, (**b).clone(), u));
                }
            }
            Formula::AgBox(i, b) => {
                self.queue_add(QKey::AgBoxCand(w, *i, (**b).clone()));
            }
            Formula::AgDia(i, b) => {
                self.holder_add(HKey::AgDiaAt(*i, w, (**b).clone()));
                self.holder_add(HKey::AgDiaHolder(*i, (**b).clone(), w));
                let targets: Vec<Label> = self
                    .succ_of(*i, w)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                for u in targets {
                    self.queue_add(QKey::AgDia(w, *i, (**b).clone(), u));
                }
            }
            Formula::Ought(i, b) => {
                self.holder_add(HKey::OughtHolder(*i, (**b).clone(), w));
                self.queue_add(QKey::Ought(w, *i, (**b).clone()));
            }
            Formula::Perm(i, b) => {
                self.holder_add(HKey::PermAt(*i, w, (**b).clone()));
                let targets: Vec<Label> = self.ideal[i].iter().copied().collect();
                for at in targets {
                    self.queue_add(QKey::Perm(w, *i, (**b).clone(), at));
                }
            }
        }
    }

    // Removes a relabelled formula (settledness box or obligation) and
    // requeues every saturation obligation its absence can reopen.
    fn remove_formula(&mut self, w: Label, f: &Formula) {
        debug_assert!(matches!(f, Formula::Box(_) | Formula::Ought(..)));
        assert!(self.has(w, f), "removing an absent formula");
        self.gamma.get_mut(&w).unwrap().remove(f);
        self.journal.push(Delta::GammaDel(w, f.clone()));

        let canon = core::cmp::min(f.clone(), f.negate());
        if self.clashes.remove(&(w, canon.clone())) {
            self.journal.push(Delta::ClashDel(w, canon));
        }

        if self.count_dec(CKey::Body(f.clone())) == 0 {
            // `f` may be the body of outer settledness boxes.
            let holders: Vec<Label> = self.box_holders(f);
            for holder in holders {
                self.queue_add(QKey::Box(holder, f.clone()));
            }
        }
        for i in 0..self.agents {
            let agent = AgentId(i);
            if self.ideal[&agent].contains(&w)
                && self.count_dec(CKey::IdealBody(agent, f.clone())) == 0
            {
                let holders: Vec<Label> = self.ought_holders(agent, f);
                for holder in holders {
                    self.queue_add(QKey::Ought(holder, agent, f.clone()));
                }
            }
        }

        // Reopen binary expansions at `w` that were satisfied through `f`.
        let parents: Vec<Formula> = self
            .gamma_at(w)
            .iter()
            .filter(|g| match g {
                Formula::And(l, r) | Formula::Or(l, r) => **l == *f || **r == *f,
                _ => false,
            })
            .cloned()
            .collect();
        for g in parents {
            match g {
                Formula::And(..) => self.queue_add(QKey::And(w, g)),
                Formula::Or(..) => self.queue_add(QKey::Or(w, g)),
                _ => unreachable!(),
            }
        }

        // Reopen diamond/permission targets that pointed at `w`.
        let dia_srcs: Vec<Label> = self
            .holders
            .range(HKey::DiaHolder(f.clone(), Label(0))..)
            .take_while(|h| matches!(h, HKey::DiaHolder(b, _) if b == f))
            .filter_map(|h| match h {
                HKey::DiaHolder(_, src) => Some(*src),
                _ => None,
            })
            .collect();
        for src in dia_srcs {
            self.queue_add(QKey::Dia(src, f.clone(), w));
        }
        for i in 0..self.agents {
            let agent = AgentId(i);
            let srcs: Vec<Label> = self
                .holders
                .range(HKey::AgDiaHolder(agent, f.clone(), Label(0))..)
                .take_while(|h| matches!(h, HKey::AgDiaHolder(a, b, _) if *a == agent && b == f))
                .filter_map(|h| match h {
                    HKey::AgDiaHolder(_, _, src) => Some(*src),
                    _ => None,
                })
                .collect();
            for src in srcs {
                if self.succ_of(agent, src).is_some_and(|s| s.contains(&w)) {
                    self.queue_add(QKey::AgDia(src, agent, f.clone(), w));
                }
            }
            if self.ideal[&agent].contains(&w) {
                let perm_holders: Vec<Label> = self
                    .holders
                    .range(HKey::PermAt(agent, Label(0), min_formula())..)
                    .take_while(|h| matches!(h, HKey::PermAt(a, _, _) if *a == agent))
                    .filter_map(|h| match h {
                        HKey::PermAt(_, holder, body) if body == f => Some(*holder),
                        _ => None,
                    })
                    .collect();
                for holder in perm_holders {
                    self.queue_add(QKey::Perm(holder, agent, f.clone(), w));
                }
            }
        }

        // Finally unregister the instance itself.
        match f {
            Formula::Box(b) => self.holder_del(HKey::BoxHolder((**b).clone(), w)),
            Formula::Ought(i, b) => self.holder_del(HKey::OughtHolder(*i, (**b).clone(), w)),
            _ => unreachable!(),
        }
    }

    fn box_holders(&self, body: &Formula) -> Vec<Label> {
        self.holders
            .range(HKey::BoxHolder(body.clone(), Label(0))..)
            .take_while(|h| matches!(h, HKey::BoxHolder(b, _) if b == body))
            .filter_map(|h| match h {
                HKey::BoxHolder(_, w) => Some(*w),
                _ => None,
            })
            .collect()
    }

    fn ought_holders(&self, agent: AgentId, body: &Formula) -> Vec<Label> {
        self.holders
            .range(HKey::OughtHolder(agent, body.clone(), Label(0))..)
            .take_while(|h| matches!(h, HKey::OughtHolder(a, b, _) if *a == agent && b == body))
            .filter_map(|h| match h {
                HKey::OughtHolder(_, _, w) => Some(*w),
                _ => None,
            })
            .collect()
    }

    fn undo_to(&mut self, mark: usize) {
        while self.journal.len() > mark {
            match self.journal.pop().unwrap() {
                Delta::Rel(atom) => {
                    self.rel.remove(&atom);
                    match atom {
                        RelAtom::Choice { agent, from, to } => {
                            self.succ.get_mut(&(agent, from)).unwrap().remove(&to);
                        }
                        RelAtom::Ideal { agent, at } => {
                            self.ideal.get_mut(&agent).unwrap().remove(&at);
                        }
                    }
                }
                Delta::GammaAdd(w, f) => {
                    self.gamma.get_mut(&w).unwrap().remove(&f);
                }
                Delta::GammaDel(w, f) => {
                    self.gamma.get_mut(&w).unwrap().insert(f);
                }
                Delta::LabelNew(w) => {
                    self.labels.remove(&w);
                    self.gamma.remove(&w);
                    self.next_label = w.0;
                    for dsu in &mut self.dsu {
                        dsu.shrink();
                    }
                }
                Delta::Union(agent) => self.dsu[agent as usize].undo_union(),
                Delta::QAdd(k) => {
                    self.queues.remove(&k);
                }
                Delta::QDel(k) => {
                    self.queues.insert(k);
                }
                Delta::CntInc(k) => {
                    *self.counts.get_mut(&k).unwrap() -= 1;
                }
                Delta::CntDec(k) => {
                    *self.counts.get_mut(&k).unwrap() += 1;
                }
                Delta::HolderAdd(k) => {
                    self.holders.remove(&k);
                }
                Delta::HolderDel(k) => {
                    self.holders.insert(k);
                }
                Delta::ClashAdd(w, f) => {
                    self.clashes.remove(&(w, f));
                }
                Delta::ClashDel(w, f) => {
                    self.clashes.insert((w, f));
                }
                Delta::IoaDone(t) => {
                    self.ioa_done.remove(&t);
                }
                Delta::FireInc(k) => {
                    *self.fire_counts.get_mut(&k).unwrap() -= 1;
                }
            }
        }
    }

    // -- blocking ----------------------------------------------------------

    /// Classifies every label. Joint (independence) labels are never
    /// blocked; other labels are directly blocked by the nearest proper,
    /// non-root generation-tree ancestor carrying exactly the same formulas
    /// and the same per-agent ideal flags, and indirectly blocked when any
    /// proper ancestor is directly blocked.
    pub fn blocked_map(&self) -> BTreeMap<Label, BlockStatus> {
        let mut map = BTreeMap::new();
        for (&u, info) in &self.labels {
            if info.origin == LabelOrigin::ByIoa {
                map.insert(u, BlockStatus::Unblocked);
                continue;
            }
            let mut status = BlockStatus::Unblocked;
            // Nearest qualifying ancestor wins, so walk upward in order.
            let mut cursor = info.parent;
            while let Some(v) = cursor {
                if v != Self::root() && self.same_payload(u, v) {
                    status = BlockStatus::DirectlyBlocked(v);
                    break;
                }
                cursor = self.labels[&v].parent;
            }
            if status == BlockStatus::Unblocked {
                let mut cursor = info.parent;
                while let Some(v) = cursor {
                    if matches!(map.get(&v), Some(BlockStatus::DirectlyBlocked(_))) {
                        status = BlockStatus::IndirectlyBlocked;
                        break;
                    }
                    cursor = self.labels[&v].parent;
                }
            }
            map.insert(u, status);
        }
        map
    }

    fn same_payload(&self, u: Label, v: Label) -> bool {
        if self.gamma_at(u) != self.gamma_at(v) {
            return false;
        }
        (0..self.agents).all(|i| {
            let ideal = &self.ideal[&AgentId(i)];
            ideal.contains(&u) == ideal.contains(&v)
        })
    }

    /// The classification of one label (see [`SearchState::blocked_map`]).
    pub fn block_status(&self, w: Label) -> BlockStatus {
        assert!(self.labels.contains_key(&w), "label must exist");
        self.blocked_map()[&w]
    }

    // -- independence tuples -----------------------------------------------

    // Per-agent path-equivalence class signatures of all unblocked labels
    // (any origin), and of joint labels separately: a tuple is satisfied if
    // its signature appears among the former, and permanently discharged if
    // it appears among the latter.
    fn signature(&self, tuple: &[Label]) -> Vec<u32> {
        tuple
            .iter()
            .enumerate()
            .map(|(i, w)| self.dsu[i].find(w.0))
            .collect()
    }

    fn label_signature(&self, u: Label) -> Vec<u32> {
        (0..self.agents as usize)
            .map(|i| self.dsu[i].find(u.0))
            .collect()
    }

    /// The per-agent tuples of non-joint labels (with repetition) that no
    /// unblocked label currently witnesses, in lexicographic label order.
    pub fn unsatisfied_tuples(&self, blocked: &BTreeMap<Label, BlockStatus>) -> Vec<Vec<Label>> {
        let n = self.agents as usize;
        if n == 0 {
            return Vec::new();
        }
        // Tuples range over unblocked plain labels only. A blocked label is
        // frozen: its payload twin earlier in the tree breeds the joint
        // witnesses on its behalf, which is what keeps the batch finite.
        let base: Vec<Label> = self
            .labels
            .keys()
            .copied()
            .filter(|w| !self.is_ioa(*w) && blocked[w] == BlockStatus::Unblocked)
            .collect();
        let mut witnessed = BTreeSet::new();
        for &u in self.labels.keys() {
            if blocked[&u] == BlockStatus::Unblocked {
                witnessed.insert(self.label_signature(u));
            }
        }
        let mut out = Vec::new();
        let mut idx = alloc::vec![0usize; n];
        'outer: loop {
            let tuple: Vec<Label> = idx.iter().map(|&i| base[i]).collect();
            if !self.ioa_done.contains(&tuple) {
                let sig = self.signature(&tuple);
                if !witnessed.contains(&sig) {
                    out.push(tuple);
                }
            }
            // Advance with the last component fastest, giving lexicographic
            // order on the tuples.
            let mut k = n;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < base.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    /// Applies one independence batch, working through the unsatisfied
    /// tuples in order: a tuple gets a fresh joint label related to its
    /// components agentwise unless a joint label created earlier in the
    /// batch already covers its signature — one witness serves every tuple
    /// whose components sit in the same classes. Either way the tuple is
    /// recorded as permanently discharged, since joint witnesses never
    /// block. Returns the steps that created labels (empty when every tuple
    /// is already witnessed).
    pub fn ioa_op(&mut self, blocked: &BTreeMap<Label, BlockStatus>) -> Vec<(Vec<Label>, Label)> {
        let missing = self.unsatisfied_tuples(blocked);
        let mut steps = Vec::new();
        let mut fresh_sigs = BTreeSet::new();
        for tuple in missing {
            let sig = self.signature(&tuple);
            if !fresh_sigs.contains(&sig) {
                let fresh = self.create_label(LabelOrigin::ByIoa, None, Some(tuple.clone()));
                for (i, w) in tuple.iter().enumerate() {
                    self.add_atom(RelAtom::choice(AgentId(i as u32), *w, fresh));
                }
                // The fresh label joined the components' existing classes,
                // so the signature it witnesses is exactly `sig`.
                fresh_sigs.insert(sig);
                steps.push((tuple.clone(), fresh));
            }
            if self.ioa_done.insert(tuple.clone()) {
                self.journal.push(Delta::IoaDone(tuple));
            }
        }
        steps
    }

    // -- stability ----------------------------------------------------------

    /// The literal stability check: every saturation condition, evaluated
    /// directly against the sequent (not the worklists).
    pub fn is_stable(&self) -> bool {
        let blocked = self.blocked_map();
        let unblocked =
            |w: Label| blocked.get(&w).copied() == Some(BlockStatus::Unblocked);
        let all_labels: Vec<Label> = self.labels.keys().copied().collect();

        for (&w, fs) in &self.gamma {
            for f in fs {
                // No complementary pair anywhere: the closure line would
                // fire, so the sequent is not finished.
                if fs.contains(&f.negate()) {
                    return false;
                }
                match f {
                    Formula::Atom(_) | Formula::NegAtom(_) => {}
                    Formula::Or(l, r) => {
                        if !fs.contains(l) || !fs.contains(r) {
                            return false;
                        }
                    }
                    Formula::And(l, r) => {
                        if !fs.contains(l) && !fs.contains(r) {
                            return false;
                        }
                    }
                    Formula::Dia(b) => {
                        if !all_labels.iter().all(|u| self.has(*u, b)) {
                            return false;
                        }
                    }
                    Formula::Box(b) => {
                        if !all_labels.iter().any(|u| unblocked(*u) && self.has(*u, b)) {
                            return false;
                        }
                    }
                    Formula::AgDia(i, b) => {
                        let ok = self.succ_of(*i, w).is_none_or(|succs| {
                            succs
                                .iter()
                                .all(|u| self.has(*u, b) && self.has(*u, f))
                        });
                        if !ok {
                            return false;
                        }
                    }
                    Formula::AgBox(i, b) => {
                        if unblocked(w) {
                            let ok = self
                                .succ_of(*i, w)
                                .is_some_and(|succs| succs.iter().any(|u| self.has(*u, b)));
                            if !ok {
                                return false;
                            }
                        }
                    }
                    Formula::Perm(i, b) => {
                        if !self.ideal_of(*i).iter().all(|u| self.has(*u, b)) {
                            return false;
                        }
                    }
                    Formula::Ought(i, b) => {
                        let witnessed = self
                            .ideal_of(*i)
                            .iter()
                            .any(|u| unblocked(*u) && self.has(*u, b));
                        // Boxed and deontic bodies migrate to the root when
                        // they fire, and their falsity does not depend on
                        // the world, so any ideal label then witnesses the
                        // obligation.
                        let rooted = matches!(**b, Formula::Box(_) | Formula::Ought(..))
                            && self.has(SearchState::root(), b)
                            && self.ideal_of(*i).iter().any(|u| unblocked(*u));
                        if !witnessed && !rooted {
                            return false;
                        }
                    }
                }
            }
        }

        for &w in &all_labels {
            for i in 0..self.agents {
                let agent = AgentId(i);
                if !self.rel.contains(&RelAtom::choice(agent, w, w)) {
                    return false;
                }
                if let Some(succs) = self.succ_of(agent, w) {
                    for &u in succs {
                        for &v in succs {
                            if u != v && !self.rel.contains(&RelAtom::choice(agent, u, v)) {
                                return false;
                            }
                        }
                    }
                }
            }
        }

        for i in 0..self.agents {
            let agent = AgentId(i);
            let ideal = self.ideal_of(agent);
            if !ideal.iter().any(|w| unblocked(*w)) {
                return false;
            }
            for &w in ideal {
                if let Some(succs) = self.succ_of(agent, w) {
                    if !succs.iter().all(|u| ideal.contains(u)) {
                        return false;
                    }
                }
            }
        }

        if self.choices > 0 {
            for i in 0..self.agents {
                if self.has_unrelated_antichain(AgentId(i), &all_labels) {
                    return false;
                }
            }
        }

        self.unsatisfied_tuples(&blocked).is_empty()
    }

    // Literal search for choices+1 pairwise-distinct, pairwise-unrelated
    // labels (relation atoms checked in both directions).
    fn has_unrelated_antichain(&self, agent: AgentId, labels: &[Label]) -> bool {
        let want = self.choices as usize + 1;
        let mut chosen: Vec<Label> = Vec::new();
        self.antichain_from(agent, labels, 0, want, &mut chosen)
    }

    fn antichain_from(
        &self,
        agent: AgentId,
        labels: &[Label],
        from: usize,
        want: usize,
        chosen: &mut Vec<Label>,
    ) -> bool {
        if chosen.len() == want {
            return true;
        }
        for (pos, &w) in labels.iter().enumerate().skip(from) {
            let unrelated = chosen.iter().all(|&u| {
                !self.rel.contains(&RelAtom::choice(agent, u, w))
                    && !self.rel.contains(&RelAtom::choice(agent, w, u))
            });
            if unrelated {
                chosen.push(w);
                if self.antichain_from(agent, labels, pos + 1, want, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }

    // -- countermodel extraction --------------------------------------------

    /// Builds the finite model a stable sequent describes: worlds are the
    /// unblocked labels; relation edges between unblocked labels survive,
    /// edges into directly blocked labels are redirected to their blockers
    /// (closing the loop the blocker detected), and the result is closed
    /// into per-agent equivalences. Every labelled formula is to be
    /// falsified, so a variable holds exactly where its negation is
    /// demanded. Returns the model and the world interpreting the root
    /// label.
    pub fn extract_model(&self) -> (DsModel, WorldId) {
        let blocked = self.blocked_map();
        let worlds: Vec<Label> = self
            .labels
            .keys()
            .copied()
            .filter(|w| blocked[w] == BlockStatus::Unblocked)
            .collect();
        let index: BTreeMap<Label, usize> =
            worlds.iter().enumerate().map(|(i, w)| (*w, i)).collect();

        let mut model = DsModel::empty(self.agents, self.choices, worlds.len());
        model.world_names = worlds.iter().map(|w| w.to_string()).collect();

        for i in 0..self.agents as usize {
            let agent = AgentId(i as u32);
            // Union-find over world indices, seeded with the surviving and
            // redirected relation edges, then closed into full cliques.
            let mut dsu = Dsu::default();
            for _ in 0..worlds.len() {
                dsu.grow();
            }
            for atom in &self.rel {
                let RelAtom::Choice { agent: a, from, to } = *atom else {
                    continue;
                };
                if a != agent || blocked[&from] != BlockStatus::Unblocked {
                    continue;
                }
                let target = match blocked[&to] {
                    BlockStatus::Unblocked => Some(to),
                    BlockStatus::DirectlyBlocked(blocker)
                        if blocked[&blocker] == BlockStatus::Unblocked =>
                    {
                        Some(blocker)
                    }
                    _ => None,
                };
                if let Some(t) = target {
                    dsu.union(index[&from] as u32, index[&t] as u32);
                }
            }
            for (wi, _) in worlds.iter().enumerate() {
                for (ui, _) in worlds.iter().enumerate() {
                    if dsu.find(wi as u32) == dsu.find(ui as u32) {
                        model.choice_rel[i].insert((wi, ui));
                    }
                }
            }

            for &w in self.ideal_of(agent) {
                if blocked[&w] == BlockStatus::Unblocked {
                    model.ideal[i].insert(index[&w]);
                }
            }
        }

        let mut vars = BTreeSet::new();
        for fs in self.gamma.values() {
            for f in fs {
                vars.append(&mut f.vars());
            }
        }
        for var in vars {
            let holds: BTreeSet<usize> = worlds
                .iter()
                .filter(|w| self.has(**w, &Formula::NegAtom(var.clone())))
                .map(|w| index[w])
                .collect();
            model.valuation.insert(var, holds);
        }

        (model, index[&Self::root()])
    }
}

fn min_formula() -> Formula {
    Formula::Atom(String::new())
}

// ---------------------------------------------------------------------------
// The engine: drives the state through the rule lines.

struct StepRec {
    rule: RuleApp,
    mark: usize,
}

enum Selection {
    Fired(Vec<StepRec>),
    Branch(BranchKind),
    None,
}

enum BranchKind {
    And {
        label: Label,
        left: Formula,
        right: Formula,
    },
    Apc {
        agent: AgentId,
        labels: Vec<Label>,
    },
}

enum Outcome {
    Proved(Derivation),
    Refuted(DsModel, WorldId, Sequent),
}

struct Engine {
    st: SearchState,
    cfg: ProveConfig,
    stats: SearchStats,
    trace: Vec<TraceStep>,
    budget_left: Option<u64>,
}

impl Engine {
    fn new(cfg: ProveConfig) -> Engine {
        let st = SearchState::new(cfg.agents, cfg.choices);
        let budget_left = cfg.budget;
        let mut eng = Engine {
            st,
            cfg,
            stats: SearchStats::default(),
            trace: Vec::new(),
            budget_left,
        };
        eng.stats.max_labels = 1;
        eng
    }

    fn create_label(
        &mut self,
        origin: LabelOrigin,
        parent: Option<Label>,
        tuple: Option<Vec<Label>>,
    ) -> Result<Label, SearchError> {
        if self.st.labels.len() as u32 >= self.cfg.label_cap {
            return Err(SearchError::LabelCapExceeded {
                cap: self.cfg.label_cap,
                stats: Box::new(self.stats.clone()),
            });
        }
        let label = self.st.create_label(origin, parent, tuple);
        self.stats.max_labels = self.stats.max_labels.max(self.st.labels.len() as u32);
        Ok(label)
    }

    fn spend(&mut self) -> Result<(), SearchError> {
        self.stats.steps += 1;
        if let Some(left) = self.budget_left {
            if left == 0 {
                return Err(SearchError::BudgetExhausted {
                    budget: self.cfg.budget.unwrap(),
                    stats: Box::new(self.stats.clone()),
                });
            }
            self.budget_left = Some(left - 1);
        }
        Ok(())
    }

    fn record(&mut self, rule: &RuleApp, principal: String, fresh: Option<Label>) {
        *self.stats.rule_fires.entry(rule.name()).or_insert(0) += 1;
        if self.cfg.trace {
            self.trace.push(TraceStep {
                index: self.stats.steps,
                rule: rule.name(),
                principal,
                fresh,
            });
        }
    }

    fn snapshot(&self) -> Sequent {
        self.st.sequent()
    }

    // The closure line: any complementary pair ends the branch.
    fn try_close(&mut self) -> Option<StepRec> {
        let (w, f) = self.st.clashes.first().cloned()?;
        let mark = self.st.journal_len();
        let rule = if let Formula::Atom(v) = &f {
            RuleApp::Id {
                label: w,
                var: v.clone(),
            }
        } else if let Formula::NegAtom(v) = &f {
            RuleApp::Id {
                label: w,
                var: v.clone(),
            }
        } else {
            RuleApp::GenId {
                label: w,
                formula: f.clone(),
            }
        };
        self.stats.steps += 1;
        self.record(&rule, format!("{w} : {f}"), None);
        Some(StepRec { rule, mark })
    }

    fn queue_pop_min(&mut self, lo: QKey, hi_check: fn(&QKey) -> bool) -> Option<QKey> {
        let key = self
            .st
            .queues
            .range(lo..)
            .take_while(|k| hi_check(k))
            .next()
            .cloned()?;
        self.st.queue_del(key.clone());
        Some(key)
    }

    /// Applies the first rule line that fires, in the fixed line order.
    fn select_apply(&mut self) -> Result<Selection, SearchError> {
        let mark = self.st.journal_len();

        // Reflexivity.
        while let Some(key) = self.queue_pop_min(QKey::Ref(Label(0), AgentId(0)), |k| {
            matches!(k, QKey::Ref(..))
        }) {
            let QKey::Ref(w, agent) = key else { unreachable!() };
            if !self.st.rel.contains(&RelAtom::choice(agent, w, w)) {
                self.spend()?;
                self.st.add_atom(RelAtom::choice(agent, w, w));
                let rule = RuleApp::Ref { agent, label: w };
                self.record(&rule, format!("{w} [agent {agent}]"), None);
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Euclideanness.
        while let Some(key) = self.queue_pop_min(
            QKey::Euc(Label(0), Label(0), Label(0), AgentId(0)),
            |k| matches!(k, QKey::Euc(..)),
        ) {
            let QKey::Euc(src, left, right, agent) = key else { unreachable!() };
            if !self.st.rel.contains(&RelAtom::choice(agent, left, right)) {
                self.spend()?;
                self.st.add_atom(RelAtom::choice(agent, left, right));
                let rule = RuleApp::Euc {
                    agent,
                    source: src,
                    left,
                    right,
                };
                self.record(
                    &rule,
                    format!("R[{agent}] {src} {left}, R[{agent}] {src} {right}"),
                    None,
                );
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Ideal-set closure.
        while let Some(key) = self.queue_pop_min(QKey::D3(Label(0), Label(0), AgentId(0)), |k| {
            matches!(k, QKey::D3(..))
        }) {
            let QKey::D3(from, to, agent) = key else { unreachable!() };
            if !self.st.ideal_of(agent).contains(&to) {
                self.spend()?;
                self.st.add_atom(RelAtom::ideal(agent, to));
                let rule = RuleApp::D3 { agent, from, to };
                self.record(
                    &rule,
                    format!("R[{agent}] {from} {to}, I[{agent}] {from}"),
                    None,
                );
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Choice-bound branching. At this point the reflexivity and
        // euclideanness lines are saturated, so each agent's relation atoms
        // form cliques over the path-equivalence classes and the literal
        // "k+1 pairwise unrelated labels" condition is equivalent to having
        // more than k classes.
        if self.cfg.choices > 0 {
            for i in 0..self.cfg.agents {
                let agent = AgentId(i);
                let k = self.cfg.choices;
                if self.st.dsu[i as usize].classes > k {
                    let mut reps = Vec::new();
                    let mut seen = BTreeSet::new();
                    for &w in self.st.labels.keys() {
                        if seen.insert(self.st.dsu[i as usize].find(w.0)) {
                            reps.push(w);
                            if reps.len() == k as usize + 1 {
                                break;
                            }
                        }
                    }
                    return Ok(Selection::Branch(BranchKind::Apc { agent, labels: reps }));
                }
            }
        }

        // Disjunction.
        while let Some(key) =
            self.queue_pop_min(QKey::Or(Label(0), min_formula()), |k| matches!(k, QKey::Or(..)))
        {
            let QKey::Or(w, f) = key else { unreachable!() };
            let Formula::Or(l, r) = &f else { unreachable!() };
            if !self.st.has(w, l) || !self.st.has(w, r) {
                self.spend()?;
                self.st.add_formula(w, (**l).clone());
                self.st.add_formula(w, (**r).clone());
                let rule = RuleApp::Or {
                    label: w,
                    left: (**l).clone(),
                    right: (**r).clone(),
                };
                self.record(&rule, format!("{w} : {f}"), None);
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Conjunction (branching).
        while let Some(key) =
            self.queue_pop_min(QKey::And(Label(0), min_formula()), |k| matches!(k, QKey::And(..)))
        {
            let QKey::And(w, f) = key else { unreachable!() };
            let Formula::And(l, r) = &f else { unreachable!() };
            if !self.st.has(w, l) && !self.st.has(w, r) {
                return Ok(Selection::Branch(BranchKind::And {
                    label: w,
                    left: (**l).clone(),
                    right: (**r).clone(),
                }));
            }
        }

        // Settledness diamond.
        while let Some(key) = self.queue_pop_min(QKey::Dia(Label(0), min_formula(), Label(0)), |k| {
            matches!(k, QKey::Dia(..))
        }) {
            let QKey::Dia(src, body, target) = key else { unreachable!() };
            if !self.st.has(target, &body) {
                self.spend()?;
                self.st.add_formula(target, body.clone());
                let rule = RuleApp::Dia {
                    label: src,
                    body: body.clone(),
                    target,
                };
                self.record(&rule, format!("{src} : dia {body} @ {target}"), None);
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Choice diamond, in the self-propagating variant: the target gets
        // both the body and the diamond itself.
        while let Some(key) = self.queue_pop_min(
            QKey::AgDia(Label(0), AgentId(0), min_formula(), Label(0)),
            |k| matches!(k, QKey::AgDia(..)),
        ) {
            let QKey::AgDia(src, agent, body, target) = key else { unreachable!() };
            let dia = Formula::AgDia(agent, body.clone().into());
            if !self.st.has(target, &body) || !self.st.has(target, &dia) {
                self.spend()?;
                self.st.add_formula(target, body.clone());
                self.st.add_formula(target, dia.clone());
                let rule = RuleApp::AgDiaStar {
                    agent,
                    label: src,
                    body: body.clone(),
                    target,
                };
                self.record(&rule, format!("{src} : {dia} @ {target}"), None);
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Permission.
        while let Some(key) = self.queue_pop_min(
            QKey::Perm(Label(0), AgentId(0), min_formula(), Label(0)),
            |k| matches!(k, QKey::Perm(..)),
        ) {
            let QKey::Perm(holder, agent, body, target) = key else { unreachable!() };
            if !self.st.has(target, &body) {
                self.spend()?;
                self.st.add_formula(target, body.clone());
                let rule = RuleApp::Perm {
                    agent,
                    label: holder,
                    body: body.clone(),
                    target,
                };
                self.record(
                    &rule,
                    format!("{holder} : P[{agent}] {body} @ {target}"),
                    None,
                );
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Settledness box: relabel to the root, then expand to a fresh
        // root-child witness. At most one witness per body per branch: the
        // witness outlives later relabelings of its payload, so a repeat
        // fire could only duplicate it.
        while let Some(key) =
            self.queue_pop_min(QKey::Box(Label(0), min_formula()), |k| matches!(k, QKey::Box(..)))
        {
            let QKey::Box(w, body) = key else { unreachable!() };
            let boxed = Formula::Box(body.clone().into());
            if !self.st.has(w, &boxed) {
                continue; // relabelled away since queued
            }
            if self.st.fire_count(&FireKey::Box(body.clone())) > 0 {
                continue;
            }
            if self.st.count(&CKey::Body(body.clone())) > 0 {
                continue;
            }
            let mut recs = Vec::new();
            let root = SearchState::root();
            self.spend()?;
            if w != root {
                self.st.remove_formula(w, &boxed);
                self.st.add_formula(root, boxed.clone());
                let rule = RuleApp::BoxStar {
                    from: w,
                    to: root,
                    body: body.clone(),
                };
                self.record(&rule, format!("{w} : {boxed}"), None);
                recs.push(StepRec { rule, mark });
                self.spend()?;
            }
            let inner_mark = self.st.journal_len();
            let fresh = self.create_label(LabelOrigin::ByBox, Some(root), None)?;
            self.st.add_formula(fresh, body.clone());
            let fired = self.st.fire_inc(FireKey::Box(body.clone()));
            self.stats.max_box_fires_per_formula = self.stats.max_box_fires_per_formula.max(fired);
            let rule = RuleApp::Box {
                label: root,
                body: body.clone(),
                fresh,
            };
            self.record(&rule, format!("{root} : {boxed}"), Some(fresh));
            recs.push(StepRec {
                rule,
                mark: if recs.is_empty() { mark } else { inner_mark },
            });
            return Ok(Selection::Fired(recs));
        }

        // Obligation: relabel to the root, then expand to a fresh ideal
        // root-child. At most one witness per agent and body per branch.
        // The payload-carrying check alone is not enough: when the body is
        // itself boxed or deontic, a later relabeling moves it from the
        // ideal witness to the (non-ideal) root, and the obligation must
        // not refire for that.
        while let Some(key) = self.queue_pop_min(QKey::Ought(Label(0), AgentId(0), min_formula()), |k| {
            matches!(k, QKey::Ought(..))
        }) {
            let QKey::Ought(w, agent, body) = key else { unreachable!() };
            let ought = Formula::Ought(agent, body.clone().into());
            if !self.st.has(w, &ought) {
                continue;
            }
            if self.st.fire_count(&FireKey::Ought(agent, body.clone())) > 0 {
                continue;
            }
            if self.st.count(&CKey::IdealBody(agent, body.clone())) > 0 {
                continue;
            }
            let mut recs = Vec::new();
            let root = SearchState::root();
            self.spend()?;
            if w != root {
                self.st.remove_formula(w, &ought);
                self.st.add_formula(root, ought.clone());
                let rule = RuleApp::OughtStar {
                    agent,
                    from: w,
                    to: root,
                    body: body.clone(),
                };
                self.record(&rule, format!("{w} : {ought}"), None);
                recs.push(StepRec { rule, mark });
                self.spend()?;
            }
            let inner_mark = self.st.journal_len();
            let fresh = self.create_label(LabelOrigin::ByOught, Some(root), None)?;
            self.st.add_atom(RelAtom::ideal(agent, fresh));
            self.st.add_formula(fresh, body.clone());
            let fired = self.st.fire_inc(FireKey::Ought(agent, body.clone()));
            self.stats.max_ought_fires_per_formula =
                self.stats.max_ought_fires_per_formula.max(fired);
            let rule = RuleApp::Ought {
                agent,
                label: root,
                body: body.clone(),
                fresh,
            };
            self.record(&rule, format!("{root} : {ought}"), Some(fresh));
            recs.push(StepRec {
                rule,
                mark: if recs.is_empty() { mark } else { inner_mark },
            });
            return Ok(Selection::Fired(recs));
        }

        // Ideal-set seriality.
        while let Some(key) =
            self.queue_pop_min(QKey::D2(AgentId(0)), |k| matches!(k, QKey::D2(..)))
        {
            let QKey::D2(agent) = key else { unreachable!() };
            if self.st.ideal_of(agent).is_empty() {
                self.spend()?;
                let fresh = self.create_label(LabelOrigin::ByD2, Some(SearchState::root()), None)?;
                self.st.add_atom(RelAtom::ideal(agent, fresh));
                let fired = self.st.fire_inc(FireKey::D2(agent));
                self.stats.max_d2_fires_per_agent = self.stats.max_d2_fires_per_agent.max(fired);
                let rule = RuleApp::D2 { agent, fresh };
                self.record(&rule, format!("agent {agent}"), Some(fresh));
                return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
            }
        }

        // Choice box. Candidates are never discarded: whether one fires
        // depends on the current successors and on blocking, both dynamic.
        let blocked = if self.cfg.loop_check {
            Some(self.st.blocked_map())
        } else {
            None
        };
        let cands: Vec<(Label, AgentId, Formula)> = self
            .st
            .queues
            .range(QKey::AgBoxCand(Label(0), AgentId(0), min_formula())..)
            .take_while(|k| matches!(k, QKey::AgBoxCand(..)))
            .filter_map(|k| match k {
                QKey::AgBoxCand(w, i, b) => Some((*w, *i, b.clone())),
                _ => None,
            })
            .collect();
        for (w, agent, body) in cands {
            if let Some(blocked) = &blocked {
                if blocked[&w] != BlockStatus::Unblocked {
                    continue;
                }
            }
            let satisfied = self
                .st
                .succ_of(agent, w)
                .is_some_and(|succs| succs.iter().any(|u| self.st.has(*u, &body)));
            if satisfied {
                continue;
            }
            self.spend()?;
            let boxed = Formula::AgBox(agent, body.clone().into());
            let rule;
            let attach_parent;
            if self.cfg.loop_check && self.st.is_ioa(w) {
                // Joint labels are not in the generation tree; refresh the
                // witness under the component label the tuple supplied for
                // this agent.
                let parent = self.st.labels[&w].tuple.as_ref().unwrap()[agent.0 as usize];
                let fresh = self.create_label(LabelOrigin::ByAgBoxStar, Some(parent), None)?;
                self.st.add_atom(RelAtom::choice(agent, parent, fresh));
                self.st.add_formula(fresh, body.clone());
                rule = RuleApp::AgBoxStar {
                    agent,
                    parent,
                    label: w,
                    body: body.clone(),
                    fresh,
                };
                attach_parent = parent;
                self.record(&rule, format!("{w} : {boxed}"), Some(fresh));
            } else {
                let fresh = self.create_label(LabelOrigin::ByAgBox, Some(w), None)?;
                self.st.add_atom(RelAtom::choice(agent, w, fresh));
                self.st.add_formula(fresh, body.clone());
                rule = RuleApp::AgBox {
                    agent,
                    label: w,
                    body: body.clone(),
                    fresh,
                };
                attach_parent = w;
                self.record(&rule, format!("{w} : {boxed}"), Some(fresh));
            }
            let child = match &rule {
                RuleApp::AgBox { fresh, .. } | RuleApp::AgBoxStar { fresh, .. } => *fresh,
                _ => unreachable!(),
            };
            self.stats.choice_edges.push(ChoiceEdge {
                parent: attach_parent,
                child,
                agent,
            });
            return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
        }

        // Independence of agents, batched over all unsatisfied tuples.
        let blocked = blocked.unwrap_or_else(|| {
            // Without loop checking nothing is ever blocked.
            self.st
                .labels
                .keys()
                .map(|w| (*w, BlockStatus::Unblocked))
                .collect()
        });
        if !self.st.unsatisfied_tuples(&blocked).is_empty() {
            self.spend()?;
            // Re-run inside ioa_op; the tuple scan is the expensive part and
            // it runs at most twice per batch.
            let steps = self.st.ioa_op(&blocked);
            debug_assert!(!steps.is_empty());
            if self.st.labels.len() as u32 > self.cfg.label_cap {
                return Err(SearchError::LabelCapExceeded {
                    cap: self.cfg.label_cap,
                    stats: Box::new(self.stats.clone()),
                });
            }
            self.stats.max_labels = self.stats.max_labels.max(self.st.labels.len() as u32);
            let rule = RuleApp::IoaOp { steps };
            self.record(
                &rule,
                match &rule {
                    RuleApp::IoaOp { steps } => format!("{} tuples", steps.len()),
                    _ => unreachable!(),
                },
                None,
            );
            return Ok(Selection::Fired(alloc::vec![StepRec { rule, mark }]));
        }

        Ok(Selection::None)
    }

    fn run_thread(&mut self) -> Result<Outcome, SearchError> {
        let entry_mark = self.st.journal_len();
        let mut steps: Vec<StepRec> = Vec::new();
        loop {
            if let Some(leaf) = self.try_close() {
                let node = Derivation {
                    sequent: self.snapshot(),
                    rule: leaf.rule,
                    premises: Vec::new(),
                };
                return Ok(Outcome::Proved(self.unwind(steps, node, entry_mark)));
            }
            match self.select_apply()? {
                Selection::Fired(recs) => steps.extend(recs),
                Selection::Branch(branch) => {
                    return match self.run_branch(branch)? {
                        Outcome::Proved(node) => {
                            Ok(Outcome::Proved(self.unwind(steps, node, entry_mark)))
                        }
                        refuted => {
                            self.st.undo_to(entry_mark);
                            Ok(refuted)
                        }
                    };
                }
                Selection::None => {
                    if self.st.is_stable() {
                        let (model, world) = self.st.extract_model();
                        let stable = self.snapshot();
                        self.st.undo_to(entry_mark);
                        return Ok(Outcome::Refuted(model, world, stable));
                    }
                    return Err(SearchError::Internal {
                        msg: format!(
                            "no rule fires but the sequent is not stable: {}",
                            self.snapshot()
                        ),
                    });
                }
            }
        }
    }

    fn run_branch(&mut self, branch: BranchKind) -> Result<Outcome, SearchError> {
        self.spend()?;
        let mark = self.st.journal_len();
        match branch {
            BranchKind::And { label, left, right } => {
                let rule = RuleApp::And {
                    label,
                    left: left.clone(),
                    right: right.clone(),
                };
                self.record(
                    &rule,
                    format!("{label} : ({left} & {right})"),
                    None,
                );
                let mut children = Vec::new();
                for conjunct in [left, right] {
                    self.st.add_formula(label, conjunct);
                    match self.run_thread()? {
                        Outcome::Proved(d) => children.push(d),
                        refuted => {
                            self.st.undo_to(mark);
                            return Ok(refuted);
                        }
                    }
                    self.st.undo_to(mark);
                }
                Ok(Outcome::Proved(Derivation {
                    sequent: self.snapshot(),
                    rule,
                    premises: children,
                }))
            }
            BranchKind::Apc { agent, labels } => {
                let rule = RuleApp::Apc {
                    agent,
                    labels: labels.clone(),
                };
                self.record(
                    &rule,
                    format!(
                        "[agent {agent}] {}",
                        labels
                            .iter()
                            .map(|w| w.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    ),
                    None,
                );
                let k = labels.len() - 1;
                let mut children = Vec::new();
                for m in 0..k {
                    for j in (m + 1)..=k {
                        self.st
                            .add_atom(RelAtom::choice(agent, labels[m], labels[j]));
                        match self.run_thread()? {
                            Outcome::Proved(d) => children.push(d),
                            refuted => {
                                self.st.undo_to(mark);
                                return Ok(refuted);
                            }
                        }
                        self.st.undo_to(mark);
                    }
                }
                Ok(Outcome::Proved(Derivation {
                    sequent: self.snapshot(),
                    rule,
                    premises: children,
                }))
            }
        }
    }

    // Rolls the linear steps back, wrapping the node in one derivation layer
    // per step; each intermediate conclusion is the state as it was before
    // that step fired.
    fn unwind(&mut self, steps: Vec<StepRec>, mut node: Derivation, entry_mark: usize) -> Derivation {
        for rec in steps.into_iter().rev() {
            self.st.undo_to(rec.mark);
            node = Derivation {
                sequent: self.snapshot(),
                rule: rec.rule,
                premises: alloc::vec![node],
            };
        }
        self.st.undo_to(entry_mark);
        node
    }
}

// ---------------------------------------------------------------------------
// Dead-step pruning of emitted derivations.

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    A(RelAtom),
    F(Label, Formula),
    L(Label),
}

fn protected(rule: &RuleApp) -> bool {
    matches!(
        rule,
        RuleApp::Id { .. }
            | RuleApp::GenId { .. }
            | RuleApp::And { .. }
            | RuleApp::Apc { .. }
            | RuleApp::Ioa { .. }
            | RuleApp::IoaOp { .. }
            | RuleApp::Box { .. }
            | RuleApp::BoxStar { .. }
            | RuleApp::Ought { .. }
            | RuleApp::OughtStar { .. }
            | RuleApp::Sub { .. }
            | RuleApp::Wk
    )
}

// Items a step adds to its premise (single-premise rules only; protected
// rules never consult this).
fn additions(rule: &RuleApp) -> Vec<Item> {
    match rule {
        RuleApp::Or { label, left, right } => alloc::vec![
            Item::F(*label, left.clone()),
            Item::F(*label, right.clone()),
        ],
        RuleApp::Dia { body, target, .. } => alloc::vec![Item::F(*target, body.clone())],
        RuleApp::AgBox {
            agent,
            label,
            body,
            fresh,
        } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *label, *fresh)),
            Item::F(*fresh, body.clone()),
            Item::L(*fresh),
        ],
        RuleApp::AgBoxStar {
            agent,
            parent,
            body,
            fresh,
            ..
        } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *parent, *fresh)),
            Item::F(*fresh, body.clone()),
            Item::L(*fresh),
        ],
        RuleApp::AgDia {
            body, target, ..
        } => alloc::vec![Item::F(*target, body.clone())],
        RuleApp::AgDiaStar {
            agent,
            body,
            target,
            ..
        } => alloc::vec![
            Item::F(*target, body.clone()),
            Item::F(*target, Formula::AgDia(*agent, body.clone().into())),
        ],
        RuleApp::Perm { body, target, .. } => alloc::vec![Item::F(*target, body.clone())],
        RuleApp::Ref { agent, label } => {
            alloc::vec![Item::A(RelAtom::choice(*agent, *label, *label))]
        }
        RuleApp::Euc {
            agent,
            left,
            right,
            ..
        } => alloc::vec![Item::A(RelAtom::choice(*agent, *left, *right))],
        RuleApp::D2 { agent, fresh } => alloc::vec![
            Item::A(RelAtom::ideal(*agent, *fresh)),
            Item::L(*fresh),
        ],
        RuleApp::D3 { agent, to, .. } => alloc::vec![Item::A(RelAtom::ideal(*agent, *to))],
        RuleApp::Sym { agent, from, to } => {
            alloc::vec![Item::A(RelAtom::choice(*agent, *to, *from))]
        }
        RuleApp::Tra { agent, a, c, .. } => alloc::vec![Item::A(RelAtom::choice(*agent, *a, *c))],
        _ => Vec::new(),
    }
}

// Items a step requires in its conclusion: principal formulas, side
// condition atoms, and (for label-sensitive rules) label presence.
fn requirements(rule: &RuleApp) -> Vec<Item> {
    match rule {
        RuleApp::Id { label, var } => alloc::vec![
            Item::F(*label, Formula::Atom(var.clone())),
            Item::F(*label, Formula::NegAtom(var.clone())),
        ],
        RuleApp::GenId { label, formula } => alloc::vec![
            Item::F(*label, formula.clone()),
            Item::F(*label, formula.negate()),
        ],
        RuleApp::And { label, left, right } => alloc::vec![Item::F(
            *label,
            Formula::And(left.clone().into(), right.clone().into()),
        )],
        RuleApp::Or { label, left, right } => alloc::vec![Item::F(
            *label,
            Formula::Or(left.clone().into(), right.clone().into()),
        )],
        RuleApp::Box { label, body, .. } => {
            alloc::vec![Item::F(*label, Formula::Box(body.clone().into()))]
        }
        RuleApp::BoxStar { from, body, .. } => {
            alloc::vec![Item::F(*from, Formula::Box(body.clone().into()))]
        }
        RuleApp::Dia { label, body, .. } => {
            alloc::vec![Item::F(*label, Formula::Dia(body.clone().into()))]
        }
        RuleApp::AgBox { agent, label, body, .. } => {
            alloc::vec![Item::F(*label, Formula::AgBox(*agent, body.clone().into()))]
        }
        RuleApp::AgBoxStar {
            agent,
            parent,
            label,
            body,
            ..
        } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *parent, *label)),
            Item::F(*label, Formula::AgBox(*agent, body.clone().into())),
        ],
        RuleApp::AgDia {
            agent,
            label,
            body,
            target,
        }
        | RuleApp::AgDiaStar {
            agent,
            label,
            body,
            target,
        } => alloc::vec![
            Item::F(*label, Formula::AgDia(*agent, body.clone().into())),
            Item::A(RelAtom::choice(*agent, *label, *target)),
        ],
        RuleApp::Ought { agent, label, body, .. } => {
            alloc::vec![Item::F(*label, Formula::Ought(*agent, body.clone().into()))]
        }
        RuleApp::OughtStar { agent, from, body, .. } => {
            alloc::vec![Item::F(*from, Formula::Ought(*agent, body.clone().into()))]
        }
        RuleApp::Perm {
            agent,
            label,
            body,
            target,
        } => alloc::vec![
            Item::F(*label, Formula::Perm(*agent, body.clone().into())),
            Item::A(RelAtom::ideal(*agent, *target)),
        ],
        RuleApp::Ref { .. } | RuleApp::D2 { .. } | RuleApp::Wk => Vec::new(),
        RuleApp::Euc {
            agent,
            source,
            left,
            right,
        } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *source, *left)),
            Item::A(RelAtom::choice(*agent, *source, *right)),
        ],
        RuleApp::D3 { agent, from, to } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *from, *to)),
            Item::A(RelAtom::ideal(*agent, *from)),
        ],
        RuleApp::Ioa { tuple, .. } => tuple.iter().map(|w| Item::L(*w)).collect(),
        RuleApp::IoaOp { steps } => steps
            .iter()
            .flat_map(|(tuple, _)| tuple.iter().map(|w| Item::L(*w)))
            .collect(),
        RuleApp::Apc { labels, .. } => labels.iter().map(|w| Item::L(*w)).collect(),
        RuleApp::Sym { agent, from, to } => {
            alloc::vec![Item::A(RelAtom::choice(*agent, *from, *to))]
        }
        RuleApp::Tra { agent, a, b, c } => alloc::vec![
            Item::A(RelAtom::choice(*agent, *a, *b)),
            Item::A(RelAtom::choice(*agent, *b, *c)),
        ],
        RuleApp::Sub { .. } => Vec::new(),
    }
}

// What the step genuinely changed: additions already present in its
// conclusion were set-union no-ops, and treating them as supplied (or
// erasable) would rob the real supplier below of its demand.
fn real_additions(d: &Derivation) -> Vec<Item> {
    additions(&d.rule)
        .into_iter()
        .filter(|it| match it {
            Item::A(atom) => !d.sequent.rel.contains(atom),
            Item::F(w, f) => !d.sequent.gamma.contains(&(*w, f.clone())),
            Item::L(_) => true,
        })
        .collect()
}

// Post-order liveness: a step is live if it is protected or some item it
// adds is needed above it. Returns the set of items the subtree needs from
// below.
fn liveness(d: &Derivation, dead: &mut BTreeSet<*const Derivation>) -> BTreeSet<Item> {
    let mut needed: BTreeSet<Item> = BTreeSet::new();
    for p in &d.premises {
        needed.extend(liveness(p, dead));
    }
    let live = if protected(&d.rule) {
        true
    } else {
        let adds = real_additions(d);
        let used = adds.iter().any(|it| needed.contains(it));
        // Label presence: a step creating a label stays when the label
        // itself is demanded above.
        if !used {
            dead.insert(d as *const Derivation);
        }
        used
    };
    if live {
        for it in real_additions(d) {
            needed.remove(&it);
        }
        needed.extend(requirements(&d.rule));
        // Items mention labels; keep those labels alive below.
        let mentioned: Vec<Item> = needed
            .iter()
            .flat_map(|it| match it {
                Item::A(RelAtom::Choice { from, to, .. }) => {
                    alloc::vec![Item::L(*from), Item::L(*to)]
                }
                Item::A(RelAtom::Ideal { at, .. }) => alloc::vec![Item::L(*at)],
                Item::F(w, _) => alloc::vec![Item::L(*w)],
                Item::L(_) => Vec::new(),
            })
            .collect();
        needed.extend(mentioned);
    }
    needed
}

fn rebuild(
    d: &Derivation,
    dead: &BTreeSet<*const Derivation>,
    removals: &BTreeSet<Item>,
) -> Derivation {
    if dead.contains(&(d as *const Derivation)) {
        // Dead steps are single-premise by construction; splice them out and
        // erase what they actually introduced above.
        let mut removals = removals.clone();
        removals.extend(real_additions(d));
        return rebuild(&d.premises[0], dead, &removals);
    }
    let mut sequent = d.sequent.clone();
    for it in removals {
        match it {
            Item::A(atom) => {
                sequent.rel.remove(atom);
            }
            Item::F(w, f) => {
                sequent.gamma.remove(&(*w, f.clone()));
            }
            Item::L(_) => {}
        }
    }
    Derivation {
        sequent,
        rule: d.rule.clone(),
        premises: d
            .premises
            .iter()
            .map(|p| rebuild(p, dead, removals))
            .collect(),
    }
}

/// Removes steps whose additions nothing above consumes — the relational
/// scaffolding the fixed line order applies eagerly but a particular proof
/// never reads. Branching, eigenvariable-batching, relabelling, and axiom
/// steps are never removed. The result concludes the same root sequent.
pub fn prune_derivation(d: &Derivation) -> Derivation {
    let mut dead = BTreeSet::new();
    liveness(d, &mut dead);
    rebuild(d, &dead, &BTreeSet::new())
}

// ---------------------------------------------------------------------------

/// Decides `formula` under the given configuration.
///
/// Returns a verdict with a pruned, re-checked derivation when valid, or an
/// extracted countermodel when invalid, along with search statistics, an
/// optional trace, and (for refutations) the stable sequent.
pub fn prove(formula: &Formula, cfg: &ProveConfig) -> Result<SearchReport, SearchError> {
    if cfg.agents == 0 {
        return Err(SearchError::InvalidConfig {
            msg: "agent count must be at least 1".into(),
        });
    }
    if cfg.label_cap == 0 {
        return Err(SearchError::InvalidConfig {
            msg: "label cap must be at least 1".into(),
        });
    }
    if let Some(agent) = formula.max_agent() {
        if agent.0 >= cfg.agents {
            return Err(SearchError::AgentOutOfRange {
                agent,
                agents: cfg.agents,
            });
        }
    }

    let mut eng = Engine::new(cfg.clone());
    eng.st.add_formula(SearchState::root(), formula.clone());

    match eng.run_thread()? {
        Outcome::Proved(raw) => {
            let pruned = prune_derivation(&raw);
            let opts = CheckOptions {
                agents: cfg.agents,
                choices: cfg.choices,
                expand_genid: false,
            };
            if pruned.sequent != Sequent::goal(formula.clone()) {
                return Err(SearchError::Internal {
                    msg: "emitted derivation concludes the wrong sequent".into(),
                });
            }
            if let Err(e) = check_derivation(&pruned, &opts) {
                return Err(SearchError::Internal {
                    msg: format!("emitted derivation fails checking: {e}"),
                });
            }
            Ok(SearchReport {
                verdict: Verdict::Valid(pruned),
                stats: eng.stats,
                trace: eng.trace,
                stable_sequent: None,
            })
        }
        Outcome::Refuted(model, world, stable) => Ok(SearchReport {
            verdict: Verdict::Invalid { model, world },
            stats: eng.stats,
            trace: eng.trace,
            stable_sequent: Some(stable),
        }),
    }
}
