//! Relational models: frame-condition validation, the satisfaction relation,
//! sequent satisfaction, and bounded countermodel enumeration.
//!
//! The enumerator here is deliberately naive and independent of the proof
//! search in [`crate::search`]; the two are checked against each other, so
//! this module favours obvious correctness over speed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::sequent::{Label, RelAtom, Sequent};
use crate::syntax::{AgentId, Formula};

/// Index into [`DsModel::world_names`].
pub type WorldId = usize;

/// A finite relational model: per-agent choice relations over a world set,
/// per-agent ideal world sets, and a valuation.
///
/// Fields are public; [`DsModel::validate_shape`] checks the cross-field
/// invariants (vector lengths match the agent count, all world indices in
/// range) and [`DsModel::validate_frame`] checks the frame conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DsModel {
    /// Number of agents; relations and ideal sets are indexed `0..agents`.
    pub agents: u32,
    /// Choice bound `k`; `0` means unbounded.
    pub choices: u32,
    /// Display names of the worlds; indices into this vector are [`WorldId`]s.
    pub world_names: Vec<String>,
    /// Per-agent choice relation as a set of ordered pairs. Nothing is
    /// closed implicitly: an equivalence relation must be stored in full.
    pub choice_rel: Vec<BTreeSet<(WorldId, WorldId)>>,
    /// Per-agent ideal world set.
    pub ideal: Vec<BTreeSet<WorldId>>,
    /// Worlds where each variable is true; absent variables are false
    /// everywhere.
    pub valuation: BTreeMap<String, BTreeSet<WorldId>>,
}

/// Error raised by model operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    /// A formula mentions an agent the model does not have.
    AgentOutOfRange {
        /// The offending index.
        agent: AgentId,
        /// The model's agent count.
        agents: u32,
    },
    /// A world index outside `0..world_names.len()`.
    UnknownWorld {
        /// The offending index.
        world: WorldId,
        /// The model's world count.
        worlds: usize,
    },
    /// A sequent label with no world assigned by the interpretation.
    UnmappedLabel {
        /// The unmapped label.
        label: Label,
    },
    /// Cross-field invariant violation; the message names the field.
    MalformedModel {
        /// Human-readable description.
        msg: String,
    },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::AgentOutOfRange { agent, agents } => {
                write!(f, "agent index {agent} out of range (agent count is {agents})")
            }
            ModelError::UnknownWorld { world, worlds } => {
                write!(f, "world index {world} out of range (world count is {worlds})")
            }
            ModelError::UnmappedLabel { label } => {
                write!(f, "label {label} is not mapped to a world")
            }
            ModelError::MalformedModel { msg } => write!(f, "malformed model: {msg}"),
        }
    }
}

impl core::error::Error for ModelError {}

/// Which frame condition a [`ConditionCheck`] reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameCondition {
    /// The agent's choice relation is an equivalence relation.
    ChoiceEquivalence,
    /// Every combination of one choice cell per agent intersects.
    JointChoiceIntersection,
    /// No k+1 worlds are pairwise choice-unrelated for the agent.
    ChoiceBound,
    /// The agent's ideal set only contains worlds of the model.
    IdealInRange,
    /// The agent's ideal set is nonempty.
    IdealNonempty,
    /// The agent's ideal set is closed under the choice relation.
    IdealClosed,
}

impl fmt::Display for FrameCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameCondition::ChoiceEquivalence => "choice-equivalence",
            FrameCondition::JointChoiceIntersection => "joint-choice-intersection",
            FrameCondition::ChoiceBound => "choice-bound",
            FrameCondition::IdealInRange => "ideal-in-range",
            FrameCondition::IdealNonempty => "ideal-nonempty",
            FrameCondition::IdealClosed => "ideal-closed",
        };
        write!(f, "{name}")
    }
}

/// Outcome of checking one frame condition, possibly for one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionCheck {
    /// The condition checked.
    pub condition: FrameCondition,
    /// The agent, for per-agent conditions.
    pub agent: Option<AgentId>,
    /// Whether the condition holds.
    pub ok: bool,
    /// A concrete counterexample when it does not.
    pub witness: Option<String>,
}

/// Frame-condition report from [`DsModel::validate_frame`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConditionReport {
    /// One entry per condition/agent pair.
    pub entries: Vec<ConditionCheck>,
}

impl ConditionReport {
    /// Whether every checked condition holds.
    pub fn all_ok(&self) -> bool {
        self.entries.iter().all(|e| e.ok)
    }
}

/// Assignment of worlds to sequent labels.
pub type Interpretation = BTreeMap<Label, WorldId>;

impl DsModel {
    /// A model with `worlds` worlds named `w0..`, empty relations, empty
    /// ideal sets, and an empty valuation.
    pub fn empty(agents: u32, choices: u32, worlds: usize) -> DsModel {
        DsModel {
            agents,
            choices,
            world_names: (0..worlds).map(|i| format!("w{i}")).collect(),
            choice_rel: (0..agents).map(|_| BTreeSet::new()).collect(),
            ideal: (0..agents).map(|_| BTreeSet::new()).collect(),
            valuation: BTreeMap::new(),
        }
    }

    /// Number of worlds.
    pub fn world_count(&self) -> usize {
        self.world_names.len()
    }

    /// Checks the cross-field invariants: one relation and one ideal set per
    /// agent, and every stored world index in range.
    pub fn validate_shape(&self) -> Result<(), ModelError> {
        let n = self.world_count();
        let bad = |msg: String| Err(ModelError::MalformedModel { msg });
        if self.choice_rel.len() != self.agents as usize {
            return bad(format!(
                "expected {} choice relations, found {}",
                self.agents,
                self.choice_rel.len()
            ));
        }
        if self.ideal.len() != self.agents as usize {
            return bad(format!(
                "expected {} ideal sets, found {}",
                self.agents,
                self.ideal.len()
            ));
        }
        for (i, rel) in self.choice_rel.iter().enumerate() {
            for &(w, u) in rel {
                if w >= n || u >= n {
                    return bad(format!("choice relation of agent {i} mentions world index {}", w.max(u)));
                }
            }
        }
        for (i, ideal) in self.ideal.iter().enumerate() {
            for &w in ideal {
                if w >= n {
                    return bad(format!("ideal set of agent {i} mentions world index {w}"));
                }
            }
        }
        for (var, worlds) in &self.valuation {
            for &w in worlds {
                if w >= n {
                    return bad(format!("valuation of `{var}` mentions world index {w}"));
                }
            }
        }
        Ok(())
    }

    fn name(&self, w: WorldId) -> &str {
        &self.world_names[w]
    }

    /// Checks every frame condition and reports each outcome with a concrete
    /// counterexample on failure. The choice-bound condition is only checked
    /// when the bound is positive.
    pub fn validate_frame(&self) -> Result<ConditionReport, ModelError> {
        self.validate_shape()?;
        let n = self.world_count();
        let mut report = ConditionReport::default();

        for i in 0..self.agents as usize {
            let rel = &self.choice_rel[i];
            let witness = self.equivalence_witness(rel, n);
            report.entries.push(ConditionCheck {
                condition: FrameCondition::ChoiceEquivalence,
                agent: Some(AgentId(i as u32)),
                ok: witness.is_none(),
                witness,
            });
        }

        let witness = self.intersection_witness(n);
        report.entries.push(ConditionCheck {
            condition: FrameCondition::JointChoiceIntersection,
            agent: None,
            ok: witness.is_none(),
            witness,
        });

        if self.choices > 0 {
            for i in 0..self.agents as usize {
                let witness = self.bound_witness(&self.choice_rel[i], n);
                report.entries.push(ConditionCheck {
                    condition: FrameCondition::ChoiceBound,
                    agent: Some(AgentId(i as u32)),
                    ok: witness.is_none(),
                    witness,
                });
            }
        }

        for i in 0..self.agents as usize {
            // In-range is already enforced by validate_shape; reported for
            // completeness of the per-condition listing.
            report.entries.push(ConditionCheck {
                condition: FrameCondition::IdealInRange,
                agent: Some(AgentId(i as u32)),
                ok: true,
                witness: None,
            });
            report.entries.push(ConditionCheck {
                condition: FrameCondition::IdealNonempty,
                agent: Some(AgentId(i as u32)),
                ok: !self.ideal[i].is_empty(),
                witness: None,
            });
            let witness = self.closure_witness(i);
            report.entries.push(ConditionCheck {
                condition: FrameCondition::IdealClosed,
                agent: Some(AgentId(i as u32)),
                ok: witness.is_none(),
                witness,
            });
        }

        Ok(report)
    }

    fn equivalence_witness(&self, rel: &BTreeSet<(WorldId, WorldId)>, n: usize) -> Option<String> {
        for w in 0..n {
            if !rel.contains(&(w, w)) {
                return Some(format!("missing reflexive pair ({0}, {0})", self.name(w)));
            }
        }
        for &(w, u) in rel {
            if !rel.contains(&(u, w)) {
                return Some(format!(
                    "({}, {}) present but ({1}, {0}) missing",
                    self.name(w),
                    self.name(u)
                ));
            }
        }
        for &(w, u) in rel {
            for v in 0..n {
                if rel.contains(&(u, v)) && !rel.contains(&(w, v)) {
                    return Some(format!(
                        "({}, {}) and ({1}, {2}) present but ({0}, {2}) missing",
                        self.name(w),
                        self.name(u),
                        self.name(v)
                    ));
                }
            }
        }
        None
    }

    // Every combination of one choice neighbourhood per agent must share a
    // world. Neighbourhoods are taken per picked world, so this is the
    // literal condition and does not assume the relations are equivalences.
    fn intersection_witness(&self, n: usize) -> Option<String> {
        if self.agents == 0 || n == 0 {
            return None;
        }
        let mut pick = alloc::vec![0usize; self.agents as usize];
        loop {
            let inhabited = (0..n).any(|v| {
                (0..self.agents as usize).all(|i| self.choice_rel[i].contains(&(pick[i], v)))
            });
            if !inhabited {
                let cells: Vec<&str> = pick.iter().map(|&w| self.name(w)).collect();
                return Some(format!(
                    "choice cells picked at ({}) do not intersect",
                    cells.join(", ")
                ));
            }
            let mut idx = 0;
            loop {
                if idx == pick.len() {
                    return None;
                }
                pick[idx] += 1;
                if pick[idx] < n {
                    break;
                }
                pick[idx] = 0;
                idx += 1;
            }
        }
    }

    // Searches for choices+1 worlds that are pairwise unrelated, i.e. an
    // antichain exceeding the bound, by literal subset enumeration.
    fn bound_witness(&self, rel: &BTreeSet<(WorldId, WorldId)>, n: usize) -> Option<String> {
        let want = self.choices as usize + 1;
        let mut chosen: Vec<WorldId> = Vec::new();
        self.antichain(rel, n, 0, want, &mut chosen).map(|set| {
            let names: Vec<&str> = set.iter().map(|&w| self.name(w)).collect();
            format!("worlds ({}) are pairwise unrelated", names.join(", "))
        })
    }

    fn antichain(
        &self,
        rel: &BTreeSet<(WorldId, WorldId)>,
        n: usize,
        from: WorldId,
        want: usize,
        chosen: &mut Vec<WorldId>,
    ) -> Option<Vec<WorldId>> {
        if chosen.len() == want {
            return Some(chosen.clone());
        }
        for w in from..n {
            let unrelated = chosen
                .iter()
                .all(|&u| !rel.contains(&(u, w)) && !rel.contains(&(w, u)));
            if unrelated {
                chosen.push(w);
                if let Some(found) = self.antichain(rel, n, w + 1, want, chosen) {
                    return Some(found);
                }
                chosen.pop();
            }
        }
        None
    }

    fn closure_witness(&self, i: usize) -> Option<String> {
        for &w in &self.ideal[i] {
            for &(x, u) in &self.choice_rel[i] {
                if x == w && !self.ideal[i].contains(&u) {
                    return Some(format!(
                        "{} is ideal and related to {}, which is not",
                        self.name(w),
                        self.name(u)
                    ));
                }
            }
        }
        None
    }

    /// Whether `f` holds at world `w`.
    pub fn satisfies(&self, w: WorldId, f: &Formula) -> Result<bool, ModelError> {
        self.validate_shape()?;
        if w >= self.world_count() {
            return Err(ModelError::UnknownWorld {
                world: w,
                worlds: self.world_count(),
            });
        }
        if let Some(agent) = f.max_agent() {
            if agent.0 >= self.agents {
                return Err(ModelError::AgentOutOfRange {
                    agent,
                    agents: self.agents,
                });
            }
        }
        Ok(self.eval(w, f))
    }

    fn eval(&self, w: WorldId, f: &Formula) -> bool {
        match f {
            Formula::Atom(v) => self.valuation.get(v).is_some_and(|ws| ws.contains(&w)),
            Formula::NegAtom(v) => !self.valuation.get(v).is_some_and(|ws| ws.contains(&w)),
            Formula::And(l, r) => self.eval(w, l) && self.eval(w, r),
            Formula::Or(l, r) => self.eval(w, l) || self.eval(w, r),
            Formula::Box(b) => (0..self.world_count()).all(|u| self.eval(u, b)),
            Formula::Dia(b) => (0..self.world_count()).any(|u| self.eval(u, b)),
            Formula::AgBox(i, b) => self.choice_rel[i.0 as usize]
                .iter()
                .filter(|(x, _)| *x == w)
                .all(|&(_, u)| self.eval(u, b)),
            Formula::AgDia(i, b) => self.choice_rel[i.0 as usize]
                .iter()
                .filter(|(x, _)| *x == w)
                .any(|&(_, u)| self.eval(u, b)),
            Formula::Ought(i, b) => self.ideal[i.0 as usize].iter().all(|&u| self.eval(u, b)),
            Formula::Perm(i, b) => self.ideal[i.0 as usize].iter().any(|&u| self.eval(u, b)),
        }
    }

    /// Whether `f` holds at every world.
    pub fn valid_on_model(&self, f: &Formula) -> Result<bool, ModelError> {
        for w in 0..self.world_count() {
            if !self.satisfies(w, f)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Whether the sequent holds under the given label interpretation: if
    /// every relational atom is realized, some labelled formula must hold.
    /// Every label occurring in the sequent must be mapped to a world.
    pub fn satisfies_sequent(
        &self,
        interp: &Interpretation,
        seq: &Sequent,
    ) -> Result<bool, ModelError> {
        self.validate_shape()?;
        let world_of = |label: Label| -> Result<WorldId, ModelError> {
            let w = *interp
                .get(&label)
                .ok_or(ModelError::UnmappedLabel { label })?;
            if w >= self.world_count() {
                return Err(ModelError::UnknownWorld {
                    world: w,
                    worlds: self.world_count(),
                });
            }
            Ok(w)
        };
        let mut atoms_hold = true;
        for atom in &seq.rel {
            match *atom {
                RelAtom::Choice { agent, from, to } => {
                    if agent.0 >= self.agents {
                        return Err(ModelError::AgentOutOfRange {
                            agent,
                            agents: self.agents,
                        });
                    }
                    let (w, u) = (world_of(from)?, world_of(to)?);
                    if !self.choice_rel[agent.0 as usize].contains(&(w, u)) {
                        atoms_hold = false;
                    }
                }
                RelAtom::Ideal { agent, at } => {
                    if agent.0 >= self.agents {
                        return Err(ModelError::AgentOutOfRange {
                            agent,
                            agents: self.agents,
                        });
                    }
                    let w = world_of(at)?;
                    if !self.ideal[agent.0 as usize].contains(&w) {
                        atoms_hold = false;
                    }
                }
            }
        }
        let mut consequent = false;
        for (label, f) in &seq.gamma {
            let w = world_of(*label)?;
            if !consequent && self.satisfies(w, f)? {
                consequent = true;
            }
        }
        Ok(!atoms_hold || consequent)
    }
}

/// Searches for a model with at most `max_worlds` worlds falsifying `f`
/// somewhere, by brute-force enumeration of frames and valuations in a fixed
/// deterministic order. Returns the first hit as `(model, world)`.
///
/// Every enumerated candidate satisfies all frame conditions for the given
/// agent count and choice bound by construction. The search is exhaustive:
/// `None` means no countermodel with `max_worlds` worlds or fewer exists.
/// Cost grows exponentially in worlds, agents, and variables; intended for
/// small bounds.
pub fn find_countermodel_bounded(
    f: &Formula,
    agents: u32,
    choices: u32,
    max_worlds: usize,
) -> Result<Option<(DsModel, WorldId)>, ModelError> {
    if let Some(agent) = f.max_agent() {
        if agent.0 >= agents {
            return Err(ModelError::AgentOutOfRange { agent, agents });
        }
    }
    if max_worlds > 60 {
        // World sets are u64 bitmasks internally, and enumeration at such
        // sizes would not terminate in any case.
        return Err(ModelError::MalformedModel {
            msg: String::from("countermodel bound above 60 is not supported"),
        });
    }
    let vars: Vec<String> = f.vars().into_iter().collect();
    for m in 1..=max_worlds {
        if let Some(hit) = search_size(f, agents, choices, m, &vars) {
            return Ok(Some(hit));
        }
    }
    Ok(None)
}

// All set partitions of 0..m as class-id vectors in restricted-growth order,
// keeping only those with at most max_classes classes.
fn partitions(m: usize, max_classes: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = alloc::vec![0usize; m];
    fn go(current: &mut Vec<usize>, idx: usize, used: usize, max_classes: usize, out: &mut Vec<Vec<usize>>) {
        if idx == current.len() {
            out.push(current.clone());
            return;
        }
        for class in 0..=used.min(max_classes - 1) {
            current[idx] = class;
            let used2 = used.max(class + 1);
            go(current, idx + 1, used2, max_classes, out);
        }
    }
    if m == 0 {
        return out;
    }
    go(&mut current, 1, 1, max_classes, &mut out);
    out
}

fn class_count(partition: &[usize]) -> usize {
    partition.iter().copied().max().map_or(0, |c| c + 1)
}

// Worlds of each class, as bitmasks (world count <= 64 is enforced by the
// callers' bounds staying tiny; enumeration beyond that would never finish).
fn class_masks(partition: &[usize]) -> Vec<u64> {
    let mut masks = alloc::vec![0u64; class_count(partition)];
    for (w, &c) in partition.iter().enumerate() {
        masks[c] |= 1 << w;
    }
    masks
}

fn rel_of_partition(partition: &[usize]) -> BTreeSet<(WorldId, WorldId)> {
    let mut rel = BTreeSet::new();
    for (w, &cw) in partition.iter().enumerate() {
        for (u, &cu) in partition.iter().enumerate() {
            if cw == cu {
                rel.insert((w, u));
            }
        }
    }
    rel
}

// Joint-intersection check: every combination of one class per agent must
// share a world.
fn combinations_intersect(parts: &[&Vec<usize>], m: usize) -> bool {
    let counts: Vec<usize> = parts.iter().map(|p| class_count(p)).collect();
    let mut pick = alloc::vec![0usize; parts.len()];
    loop {
        let inhabited = (0..m).any(|w| parts.iter().enumerate().all(|(i, p)| p[w] == pick[i]));
        if !inhabited {
            return false;
        }
        let mut idx = 0;
        loop {
            if idx == pick.len() {
                return true;
            }
            pick[idx] += 1;
            if pick[idx] < counts[idx] {
                break;
            }
            pick[idx] = 0;
            idx += 1;
        }
    }
}

// Nonempty unions of choice cells, each as a world bitmask, in ascending
// order of the cell subset mask.
fn ideal_choices(masks: &[u64]) -> Vec<u64> {
    let mut out = Vec::new();
    for subset in 1u64..(1 << masks.len()) {
        let mut world_mask = 0u64;
        for (c, &mask) in masks.iter().enumerate() {
            if subset & (1 << c) != 0 {
                world_mask |= mask;
            }
        }
        out.push(world_mask);
    }
    out.sort_unstable();
    out.dedup();
    out
}

// Whether the agent's ideal set can influence satisfaction of `f`.
fn has_deontic(f: &Formula, agent: u32) -> bool {
    match f {
        Formula::Atom(_) | Formula::NegAtom(_) => false,
        Formula::And(l, r) | Formula::Or(l, r) => has_deontic(l, agent) || has_deontic(r, agent),
        Formula::Box(b) | Formula::Dia(b) | Formula::AgBox(_, b) | Formula::AgDia(_, b) => {
            has_deontic(b, agent)
        }
        Formula::Ought(i, b) | Formula::Perm(i, b) => i.0 == agent || has_deontic(b, agent),
    }
}

fn search_size(
    f: &Formula,
    agents: u32,
    choices: u32,
    m: usize,
    vars: &[String],
) -> Option<(DsModel, WorldId)> {
    let n = agents as usize;
    let max_classes = if choices > 0 { choices as usize } else { m };
    let parts = partitions(m, max_classes.max(1));
    if parts.is_empty() {
        return None;
    }

    // Odometer over one partition per agent.
    let mut part_idx = alloc::vec![0usize; n];
    loop {
        let chosen: Vec<&Vec<usize>> = part_idx.iter().map(|&i| &parts[i]).collect();
        if combinations_intersect(&chosen, m) {
            if let Some(hit) = try_ideals(f, agents, choices, m, vars, &chosen) {
                return Some(hit);
            }
        }
        let mut idx = 0;
        loop {
            if idx == part_idx.len() {
                return None;
            }
            part_idx[idx] += 1;
            if part_idx[idx] < parts.len() {
                break;
            }
            part_idx[idx] = 0;
            idx += 1;
        }
    }
}

fn try_ideals(
    f: &Formula,
    agents: u32,
    choices: u32,
    m: usize,
    vars: &[String],
    parts: &[&Vec<usize>],
) -> Option<(DsModel, WorldId)> {
    let n = agents as usize;
    // Per agent: the candidate ideal sets. Agents without deontic operators
    // in `f` cannot influence satisfaction through their ideal set, so a
    // single valid choice suffices for completeness.
    let mut ideal_options: Vec<Vec<u64>> = Vec::with_capacity(n);
    for (i, p) in parts.iter().enumerate() {
        let masks = class_masks(p);
        if has_deontic(f, i as u32) {
            ideal_options.push(ideal_choices(&masks));
        } else {
            ideal_options.push(alloc::vec![masks[0]]);
        }
    }

    let rels: Vec<BTreeSet<(WorldId, WorldId)>> =
        parts.iter().map(|p| rel_of_partition(p)).collect();

    let mut ideal_idx = alloc::vec![0usize; n];
    loop {
        let mut model = DsModel {
            agents,
            choices,
            world_names: (0..m).map(|w| format!("w{w}")).collect(),
            choice_rel: rels.clone(),
            ideal: (0..n)
                .map(|i| mask_to_set(ideal_options[i][ideal_idx[i]], m))
                .collect(),
            valuation: BTreeMap::new(),
        };
        if let Some(w) = try_valuations(f, &mut model, m, vars) {
            return Some((model, w));
        }

        let mut idx = 0;
        loop {
            if idx == ideal_idx.len() {
                return None;
            }
            ideal_idx[idx] += 1;
            if ideal_idx[idx] < ideal_options[idx].len() {
                break;
            }
            ideal_idx[idx] = 0;
            idx += 1;
        }
    }
}

fn mask_to_set(mask: u64, m: usize) -> BTreeSet<WorldId> {
    (0..m).filter(|w| mask & (1 << w) != 0).collect()
}

// Valuations in lexicographic order: the first variable's world set is the
// fastest-moving digit.
fn try_valuations(f: &Formula, model: &mut DsModel, m: usize, vars: &[String]) -> Option<WorldId> {
    let mut masks = alloc::vec![0u64; vars.len()];
    loop {
        model.valuation = vars
            .iter()
            .zip(&masks)
            .map(|(v, &mask)| (v.clone(), mask_to_set(mask, m)))
            .collect();
        for w in 0..m {
            if !model.eval(w, f) {
                return Some(w);
            }
        }
        let mut idx = 0;
        loop {
            if idx == masks.len() {
                return None;
            }
            masks[idx] += 1;
            if masks[idx] < (1 << m) {
                break;
            }
            masks[idx] = 0;
            idx += 1;
        }
    }
}
