//! Certificate and model files.
//!
//! Both kinds of evidence the prover emits are stored as JSON with a
//! `kind` discriminator:
//!
//! * proofs — `{"kind": "proof", "formula", "agents", "choices",
//!   "nodes"}`. The derivation tree is flattened into a `nodes` array in
//!   preorder (root first); each node carries its rule instance, its
//!   conclusion sequent, and the indices of its premise nodes. The flat
//!   layout keeps arbitrarily tall proofs within JSON nesting limits.
//! * models — `{"kind": "model", "agents", "choices", "worlds", "rel",
//!   "ideal", "val"}` plus, when the model was produced as a counterexample,
//!   the `formula` it falsifies and the `world` where it fails. Relations,
//!   ideal sets, and valuations refer to worlds by name.
//!
//! Formulas are stored in the surface syntax; relational atoms and
//! labelled formulas as their display forms (`R[0] w0 w1`, `I[0] w0`,
//! `w0 : p`). Everything round-trips byte-identically: maps are ordered,
//! sets are sorted, and label names are derived from label numbers.

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use std::collections::BTreeMap;

use dstit_core::calculus::{Derivation, RuleApp, RuleName};
use dstit_core::semantics::{DsModel, WorldId};
use dstit_core::sequent::{Label, RelAtom, Sequent};
use dstit_core::syntax::{parse, AgentId, Formula};

// ---------------------------------------------------------------------------
// Labels, atoms, labelled formulas
// ---------------------------------------------------------------------------

fn parse_label(s: &str) -> Result<Label> {
    let digits = s
        .strip_prefix('w')
        .ok_or_else(|| anyhow!("label `{s}` does not start with `w`"))?;
    let n: u32 = digits.parse().with_context(|| format!("label `{s}`"))?;
    Ok(Label(n))
}

fn atom_to_string(atom: &RelAtom) -> String {
    atom.to_string()
}

fn atom_from_string(s: &str) -> Result<RelAtom> {
    let (kind, rest) = s.split_at(1);
    let rest = rest
        .strip_prefix('[')
        .ok_or_else(|| anyhow!("atom `{s}`: expected `[` after `{kind}`"))?;
    let (agent, rest) = rest
        .split_once(']')
        .ok_or_else(|| anyhow!("atom `{s}`: unterminated agent index"))?;
    let agent = AgentId(agent.parse().with_context(|| format!("atom `{s}`"))?);
    let labels: Vec<&str> = rest.split_whitespace().collect();
    match (kind, labels.as_slice()) {
        ("R", [from, to]) => Ok(RelAtom::choice(agent, parse_label(from)?, parse_label(to)?)),
        ("I", [at]) => Ok(RelAtom::ideal(agent, parse_label(at)?)),
        _ => bail!("atom `{s}`: expected `R[i] w w` or `I[i] w`"),
    }
}

fn gamma_to_string(label: Label, f: &Formula) -> String {
    format!("{label} : {f}")
}

fn gamma_from_string(s: &str, agents: u32) -> Result<(Label, Formula)> {
    let (label, formula) = s
        .split_once(" : ")
        .ok_or_else(|| anyhow!("labelled formula `{s}`: expected `w : formula`"))?;
    Ok((
        parse_label(label)?,
        parse(formula, agents).with_context(|| format!("labelled formula `{s}`"))?,
    ))
}

fn sequent_to_json(seq: &Sequent) -> Value {
    json!({
        "rel": seq.rel.iter().map(atom_to_string).collect::<Vec<_>>(),
        "gamma": seq
            .gamma
            .iter()
            .map(|(w, f)| gamma_to_string(*w, f))
            .collect::<Vec<_>>(),
    })
}

fn sequent_from_json(v: &Value, agents: u32) -> Result<Sequent> {
    let mut seq = Sequent::new();
    for s in str_list(field(v, "rel")?)? {
        seq.rel.insert(atom_from_string(s)?);
    }
    for s in str_list(field(v, "gamma")?)? {
        seq.gamma.insert(gamma_from_string(s, agents)?);
    }
    Ok(seq)
}

// ---------------------------------------------------------------------------
// JSON field plumbing
// ---------------------------------------------------------------------------

fn field<'v>(v: &'v Value, name: &str) -> Result<&'v Value> {
    v.get(name)
        .ok_or_else(|| anyhow!("missing field `{name}`"))
}

fn str_list(v: &Value) -> Result<Vec<&str>> {
    v.as_array()
        .ok_or_else(|| anyhow!("expected an array"))?
        .iter()
        .map(|x| x.as_str().ok_or_else(|| anyhow!("expected a string")))
        .collect()
}

fn get_u32(v: &Value, name: &str) -> Result<u32> {
    field(v, name)?
        .as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| anyhow!("field `{name}` must be a small natural number"))
}

fn get_str<'v>(v: &'v Value, name: &str) -> Result<&'v str> {
    field(v, name)?
        .as_str()
        .ok_or_else(|| anyhow!("field `{name}` must be a string"))
}

fn get_label(v: &Value, name: &str) -> Result<Label> {
    Ok(Label(get_u32(v, name)?))
}

fn get_agent(v: &Value, name: &str) -> Result<AgentId> {
    Ok(AgentId(get_u32(v, name)?))
}

fn get_formula(v: &Value, name: &str, agents: u32) -> Result<Formula> {
    parse(get_str(v, name)?, agents).with_context(|| format!("field `{name}`"))
}

fn label_list(v: &Value, name: &str) -> Result<Vec<Label>> {
    field(v, name)?
        .as_array()
        .ok_or_else(|| anyhow!("field `{name}` must be an array"))?
        .iter()
        .map(|x| {
            x.as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .map(Label)
                .ok_or_else(|| anyhow!("field `{name}`: labels are numbers"))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Rule applications
// ---------------------------------------------------------------------------

fn rule_to_json(rule: &RuleApp) -> Value {
    let name = rule.name().as_str();
    match rule {
        RuleApp::Id { label, var } => json!({"name": name, "label": label.0, "var": var}),
        RuleApp::GenId { label, formula } => {
            json!({"name": name, "label": label.0, "formula": formula.to_string()})
        }
        RuleApp::And { label, left, right } | RuleApp::Or { label, left, right } => json!({
            "name": name,
            "label": label.0,
            "left": left.to_string(),
            "right": right.to_string(),
        }),
        RuleApp::Box { label, body, fresh } => json!({
            "name": name,
            "label": label.0,
            "body": body.to_string(),
            "fresh": fresh.0,
        }),
        RuleApp::BoxStar { from, to, body } => json!({
            "name": name,
            "from": from.0,
            "to": to.0,
            "body": body.to_string(),
        }),
        RuleApp::Dia { label, body, target } => json!({
            "name": name,
            "label": label.0,
            "body": body.to_string(),
            "target": target.0,
        }),
        RuleApp::AgBox {
            agent,
            label,
            body,
            fresh,
        } => json!({
            "name": name,
            "agent": agent.0,
            "label": label.0,
            "body": body.to_string(),
            "fresh": fresh.0,
        }),
        RuleApp::AgBoxStar {
            agent,
            parent,
            label,
            body,
            fresh,
        } => json!({
            "name": name,
            "agent": agent.0,
            "parent": parent.0,
            "label": label.0,
            "body": body.to_string(),
            "fresh": fresh.0,
        }),
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
        }
        | RuleApp::Perm {
            agent,
            label,
            body,
            target,
        } => json!({
            "name": name,
            "agent": agent.0,
            "label": label.0,
            "body": body.to_string(),
            "target": target.0,
        }),
        RuleApp::Ought {
            agent,
            label,
            body,
            fresh,
        } => json!({
            "name": name,
            "agent": agent.0,
            "label": label.0,
            "body": body.to_string(),
            "fresh": fresh.0,
        }),
        RuleApp::OughtStar {
            agent,
            from,
            to,
            body,
        } => json!({
            "name": name,
            "agent": agent.0,
            "from": from.0,
            "to": to.0,
            "body": body.to_string(),
        }),
        RuleApp::Ref { agent, label } => {
            json!({"name": name, "agent": agent.0, "label": label.0})
        }
        RuleApp::Euc {
            agent,
            source,
            left,
            right,
        } => json!({
            "name": name,
            "agent": agent.0,
            "source": source.0,
            "left": left.0,
            "right": right.0,
        }),
        RuleApp::D2 { agent, fresh } => {
            json!({"name": name, "agent": agent.0, "fresh": fresh.0})
        }
        RuleApp::D3 { agent, from, to } => {
            json!({"name": name, "agent": agent.0, "from": from.0, "to": to.0})
        }
        RuleApp::Ioa { tuple, fresh } => json!({
            "name": name,
            "tuple": tuple.iter().map(|w| w.0).collect::<Vec<_>>(),
            "fresh": fresh.0,
        }),
        RuleApp::IoaOp { steps } => json!({
            "name": name,
            "steps": steps
                .iter()
                .map(|(tuple, fresh)| {
                    json!({
                        "tuple": tuple.iter().map(|w| w.0).collect::<Vec<_>>(),
                        "fresh": fresh.0,
                    })
                })
                .collect::<Vec<_>>(),
        }),
        RuleApp::Apc { agent, labels } => json!({
            "name": name,
            "agent": agent.0,
            "labels": labels.iter().map(|w| w.0).collect::<Vec<_>>(),
        }),
        RuleApp::Sym { agent, from, to } => {
            json!({"name": name, "agent": agent.0, "from": from.0, "to": to.0})
        }
        RuleApp::Tra { agent, a, b, c } => {
            json!({"name": name, "agent": agent.0, "a": a.0, "b": b.0, "c": c.0})
        }
        RuleApp::Sub {
            replaced,
            replacement,
        } => json!({"name": name, "replaced": replaced.0, "replacement": replacement.0}),
        RuleApp::Wk => json!({"name": name}),
    }
}

fn rule_from_json(v: &Value, agents: u32) -> Result<RuleApp> {
    let name = get_str(v, "name")?;
    let rule = RuleName::from_str_name(name)
        .ok_or_else(|| anyhow!("unknown rule name `{name}`"))?;
    Ok(match rule {
        RuleName::Id => RuleApp::Id {
            label: get_label(v, "label")?,
            var: get_str(v, "var")?.to_owned(),
        },
        RuleName::GenId => RuleApp::GenId {
            label: get_label(v, "label")?,
            formula: get_formula(v, "formula", agents)?,
        },
        RuleName::And => RuleApp::And {
            label: get_label(v, "label")?,
            left: get_formula(v, "left", agents)?,
            right: get_formula(v, "right", agents)?,
        },
        RuleName::Or => RuleApp::Or {
            label: get_label(v, "label")?,
            left: get_formula(v, "left", agents)?,
            right: get_formula(v, "right", agents)?,
        },
        RuleName::Box => RuleApp::Box {
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::BoxStar => RuleApp::BoxStar {
            from: get_label(v, "from")?,
            to: get_label(v, "to")?,
            body: get_formula(v, "body", agents)?,
        },
        RuleName::Dia => RuleApp::Dia {
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            target: get_label(v, "target")?,
        },
        RuleName::AgBox => RuleApp::AgBox {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::AgBoxStar => RuleApp::AgBoxStar {
            agent: get_agent(v, "agent")?,
            parent: get_label(v, "parent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::AgDia => RuleApp::AgDia {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            target: get_label(v, "target")?,
        },
        RuleName::AgDiaStar => RuleApp::AgDiaStar {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            target: get_label(v, "target")?,
        },
        RuleName::Ought => RuleApp::Ought {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::OughtStar => RuleApp::OughtStar {
            agent: get_agent(v, "agent")?,
            from: get_label(v, "from")?,
            to: get_label(v, "to")?,
            body: get_formula(v, "body", agents)?,
        },
        RuleName::Perm => RuleApp::Perm {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
            body: get_formula(v, "body", agents)?,
            target: get_label(v, "target")?,
        },
        RuleName::Ref => RuleApp::Ref {
            agent: get_agent(v, "agent")?,
            label: get_label(v, "label")?,
        },
        RuleName::Euc => RuleApp::Euc {
            agent: get_agent(v, "agent")?,
            source: get_label(v, "source")?,
            left: get_label(v, "left")?,
            right: get_label(v, "right")?,
        },
        RuleName::D2 => RuleApp::D2 {
            agent: get_agent(v, "agent")?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::D3 => RuleApp::D3 {
            agent: get_agent(v, "agent")?,
            from: get_label(v, "from")?,
            to: get_label(v, "to")?,
        },
        RuleName::Ioa => RuleApp::Ioa {
            tuple: label_list(v, "tuple")?,
            fresh: get_label(v, "fresh")?,
        },
        RuleName::IoaOp => {
            let steps = field(v, "steps")?
                .as_array()
                .ok_or_else(|| anyhow!("field `steps` must be an array"))?
                .iter()
                .map(|s| Ok((label_list(s, "tuple")?, get_label(s, "fresh")?)))
                .collect::<Result<Vec<_>>>()?;
            RuleApp::IoaOp { steps }
        }
        RuleName::Apc => RuleApp::Apc {
            agent: get_agent(v, "agent")?,
            labels: label_list(v, "labels")?,
        },
        RuleName::Sym => RuleApp::Sym {
            agent: get_agent(v, "agent")?,
            from: get_label(v, "from")?,
            to: get_label(v, "to")?,
        },
        RuleName::Tra => RuleApp::Tra {
            agent: get_agent(v, "agent")?,
            a: get_label(v, "a")?,
            b: get_label(v, "b")?,
            c: get_label(v, "c")?,
        },
        RuleName::Sub => RuleApp::Sub {
            replaced: get_label(v, "replaced")?,
            replacement: get_label(v, "replacement")?,
        },
        RuleName::Wk => RuleApp::Wk,
    })
}

// ---------------------------------------------------------------------------
// Proof files
// ---------------------------------------------------------------------------

/// Serializes a proof of `formula` (the sequent `=> w0 : formula`).
pub fn proof_to_json(formula: &Formula, agents: u32, choices: u32, d: &Derivation) -> Value {
    // Flatten in preorder without recursing: collect the nodes, then map
    // each node's premise pointers to indices.
    let mut order: Vec<&Derivation> = Vec::new();
    let mut stack = vec![d];
    while let Some(node) = stack.pop() {
        order.push(node);
        for p in node.premises.iter().rev() {
            stack.push(p);
        }
    }
    let index: BTreeMap<*const Derivation, usize> = order
        .iter()
        .enumerate()
        .map(|(i, n)| (*n as *const Derivation, i))
        .collect();
    let nodes: Vec<Value> = order
        .iter()
        .map(|n| {
            json!({
                "rule": rule_to_json(&n.rule),
                "sequent": sequent_to_json(&n.sequent),
                "premises": n
                    .premises
                    .iter()
                    .map(|p| index[&(p as *const Derivation)])
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "kind": "proof",
        "formula": formula.to_string(),
        "agents": agents,
        "choices": choices,
        "nodes": nodes,
    })
}

/// The claim a proof file makes: its formula and signature, plus the
/// derivation itself.
pub struct ProofFile {
    pub formula: Formula,
    pub agents: u32,
    pub choices: u32,
    pub derivation: Derivation,
}

/// Parses [`proof_to_json`]'s output.
pub fn proof_from_json(v: &Value) -> Result<ProofFile> {
    if get_str(v, "kind")? != "proof" {
        bail!("not a proof file (kind != \"proof\")");
    }
    let agents = get_u32(v, "agents")?;
    let choices = get_u32(v, "choices")?;
    let formula = get_formula(v, "formula", agents)?;
    let raw = field(v, "nodes")?
        .as_array()
        .ok_or_else(|| anyhow!("field `nodes` must be an array"))?;
    if raw.is_empty() {
        bail!("proof file with no nodes");
    }

    struct FlatNode {
        rule: RuleApp,
        sequent: Sequent,
        premises: Vec<usize>,
    }
    let mut nodes = Vec::with_capacity(raw.len());
    let mut referenced = vec![false; raw.len()];
    for (i, nv) in raw.iter().enumerate() {
        let premises: Vec<usize> = field(nv, "premises")?
            .as_array()
            .ok_or_else(|| anyhow!("node {i}: `premises` must be an array"))?
            .iter()
            .map(|x| {
                x.as_u64()
                    .and_then(|n| usize::try_from(n).ok())
                    .ok_or_else(|| anyhow!("node {i}: premise indices are numbers"))
            })
            .collect::<Result<_>>()?;
        for &p in &premises {
            // Preorder: children strictly follow their parent. This also
            // rules out cycles and sharing.
            if p <= i || p >= raw.len() {
                bail!("node {i}: premise index {p} out of order");
            }
            if referenced[p] {
                bail!("node {p} is a premise of two nodes");
            }
            referenced[p] = true;
        }
        nodes.push(FlatNode {
            rule: rule_from_json(field(nv, "rule")?, agents)
                .with_context(|| format!("node {i}"))?,
            sequent: sequent_from_json(field(nv, "sequent")?, agents)
                .with_context(|| format!("node {i}"))?,
            premises,
        });
    }
    if let Some(orphan) = (1..raw.len()).find(|&i| !referenced[i]) {
        bail!("node {orphan} is not reachable from the root");
    }

    // Assemble leaves-to-root; preorder guarantees premises are built
    // before their parent is reached.
    let mut slots: Vec<Option<Derivation>> = (0..nodes.len()).map(|_| None).collect();
    for (i, n) in nodes.into_iter().enumerate().rev() {
        let premises = n
            .premises
            .iter()
            .map(|&p| slots[p].take().expect("preorder premise already built"))
            .collect();
        slots[i] = Some(Derivation {
            sequent: n.sequent,
            rule: n.rule,
            premises,
        });
    }
    Ok(ProofFile {
        formula,
        agents,
        choices,
        derivation: slots[0].take().expect("root built last"),
    })
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Serializes a model; countermodels also record the falsified formula and
/// the world where it fails.
pub fn model_to_json(m: &DsModel, falsifies: Option<(&Formula, WorldId)>) -> Value {
    let name = |w: WorldId| m.world_names[w].clone();
    let mut v = json!({
        "kind": "model",
        "agents": m.agents,
        "choices": m.choices,
        "worlds": m.world_names,
        "rel": m
            .choice_rel
            .iter()
            .map(|rel| {
                rel.iter()
                    .map(|&(a, b)| json!([name(a), name(b)]))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
        "ideal": m
            .ideal
            .iter()
            .map(|set| set.iter().map(|&w| name(w)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "val": m
            .valuation
            .iter()
            .map(|(var, set)| {
                (var.clone(), json!(set.iter().map(|&w| name(w)).collect::<Vec<_>>()))
            })
            .collect::<serde_json::Map<_, _>>(),
    });
    if let Some((f, w)) = falsifies {
        v["formula"] = json!(f.to_string());
        v["world"] = json!(name(w));
    }
    v
}

/// A parsed model file; `falsifies` is present when the file records what
/// the model is a counterexample to.
pub struct ModelFile {
    pub model: DsModel,
    pub falsifies: Option<(Formula, WorldId)>,
}

/// Parses [`model_to_json`]'s output (or a hand-written model file).
pub fn model_from_json(v: &Value) -> Result<ModelFile> {
    if get_str(v, "kind")? != "model" {
        bail!("not a model file (kind != \"model\")");
    }
    let agents = get_u32(v, "agents")?;
    let choices = get_u32(v, "choices")?;
    let worlds: Vec<String> = str_list(field(v, "worlds")?)?
        .into_iter()
        .map(str::to_owned)
        .collect();
    let mut by_name: BTreeMap<&str, WorldId> = BTreeMap::new();
    for (i, name) in worlds.iter().enumerate() {
        if by_name.insert(name, i).is_some() {
            bail!("duplicate world name `{name}`");
        }
    }
    let world = |name: &str| -> Result<WorldId> {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| anyhow!("unknown world `{name}`"))
    };

    let mut model = DsModel::empty(agents, choices, worlds.len());
    model.world_names = worlds.clone();
    let rel = field(v, "rel")?
        .as_array()
        .ok_or_else(|| anyhow!("field `rel` must be an array"))?;
    if rel.len() != agents as usize {
        bail!("field `rel` must have one entry per agent");
    }
    for (i, pairs) in rel.iter().enumerate() {
        let pairs = pairs
            .as_array()
            .ok_or_else(|| anyhow!("rel[{i}] must be an array of pairs"))?;
        for pair in pairs {
            let pair = str_list(pair)?;
            let [from, to] = pair.as_slice() else {
                bail!("rel[{i}]: each entry is a [from, to] pair");
            };
            model.choice_rel[i].insert((world(from)?, world(to)?));
        }
    }
    let ideal = field(v, "ideal")?
        .as_array()
        .ok_or_else(|| anyhow!("field `ideal` must be an array"))?;
    if ideal.len() != agents as usize {
        bail!("field `ideal` must have one entry per agent");
    }
    for (i, set) in ideal.iter().enumerate() {
        for name in str_list(set)? {
            model.ideal[i].insert(world(name)?);
        }
    }
    let val = field(v, "val")?
        .as_object()
        .ok_or_else(|| anyhow!("field `val` must be an object"))?;
    for (var, set) in val {
        let worlds_of = set
            .as_array()
            .ok_or_else(|| anyhow!("val[{var}] must be an array"))?
            .iter()
            .map(|x| {
                x.as_str()
                    .ok_or_else(|| anyhow!("val[{var}]: world names are strings"))
                    .and_then(world)
            })
            .collect::<Result<_>>()?;
        model.valuation.insert(var.clone(), worlds_of);
    }

    let falsifies = match (v.get("formula"), v.get("world")) {
        (None, None) => None,
        (Some(_), Some(_)) => {
            let f = get_formula(v, "formula", agents)?;
            let w = world(get_str(v, "world")?)?;
            Some((f, w))
        }
        _ => bail!("`formula` and `world` must be given together"),
    };
    Ok(ModelFile { model, falsifies })
}
