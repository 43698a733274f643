//! Normative reasoning tasks over a knowledge base of norms and facts.
//!
//! A [`KnowledgeBase`] collects obligations ("norms") and circumstances
//! ("facts") as formulas; the three queries phrase normative questions as
//! validity problems and hand them to [`prove`]:
//!
//! * [`duty_check`] — does the base commit agent `i` to `goal`? Decides
//!   `⋀KB -> O[i] goal`; a positive answer carries the proof, a negative
//!   one a countermodel realizing the base without the duty.
//! * [`compliance_check`] — may agent `i` do `act` without violating an
//!   obligation? Decides `⋀KB -> O[i] ~act` and answers positively when
//!   that contrary duty is *not* entailed, so the certificate polarity is
//!   flipped: compliance comes with a countermodel, a violation with the
//!   proof of the contrary duty.
//! * [`joint_fulfillment_check`] — can all obligations be realized at
//!   once under the stated facts? Decides `⋀KB -> false`; fulfillable
//!   means invalid, and the countermodel is a scenario realizing every
//!   duty. A negative answer proves the base inconsistent.
//!
//! Norms and facts are treated uniformly by the logic; the split only
//! structures files and reports. The conjunction is left-folded, norms
//! first, then facts, each group in input order, so repeated runs decide
//! byte-identical question formulas. An empty base contributes `true` as
//! the antecedent.
//!
//! The text format for knowledge bases is line-oriented:
//!
//! ```text
//! # groceries
//! agents: 1
//! choices: 0
//! norm: O[0] n
//! fact: dia [0] f & dia [0] car
//! ```
//!
//! `agents:`/`choices:` headers may appear anywhere and apply to the whole
//! file (at most once each); missing headers default to one agent and an
//! unconstrained choice bound. Blank lines and `#` comments are skipped.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::calculus::Derivation;
use crate::search::{prove, ProveConfig, SearchError, Verdict};
use crate::semantics::{DsModel, WorldId};
use crate::syntax::{parse, AgentId, Formula};

use core::fmt;

// ---------------------------------------------------------------------------
// Knowledge bases
// ---------------------------------------------------------------------------

/// A set of obligations and circumstances, with the signature they are
/// read under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    /// Number of agents `n >= 1`; formulas may mention `0..n`.
    pub agents: u32,
    /// Choice bound `k`; `0` means unconstrained.
    pub choices: u32,
    /// The obligations, in input order.
    pub norms: Vec<Formula>,
    /// The circumstances, in input order.
    pub facts: Vec<Formula>,
}

impl KnowledgeBase {
    /// An empty base over `agents`/`choices`.
    pub fn empty(agents: u32, choices: u32) -> KnowledgeBase {
        KnowledgeBase {
            agents,
            choices,
            norms: Vec::new(),
            facts: Vec::new(),
        }
    }

    /// The conjunction of the whole base: norms first, then facts, each in
    /// input order, folded to the left; `true` when the base is empty.
    pub fn conjunction(&self) -> Formula {
        let mut items = self.norms.iter().chain(self.facts.iter()).cloned();
        match items.next() {
            None => Formula::top(),
            Some(first) => items.fold(first, |acc, f| {
                Formula::And(acc.into(), f.into())
            }),
        }
    }

    /// Parses the line-oriented text format. Headers may appear anywhere;
    /// formula lines are parsed under the final agent count.
    pub fn parse(text: &str) -> Result<KnowledgeBase, KbError> {
        KnowledgeBase::parse_with(text, None, None)
    }

    /// [`KnowledgeBase::parse`] with the headers overridden: an override
    /// takes effect even when the file also carries the header.
    pub fn parse_with(
        text: &str,
        agents: Option<u32>,
        choices: Option<u32>,
    ) -> Result<KnowledgeBase, KbError> {
        // First pass: headers. Formulas must be read under the final agent
        // count, and a header is allowed below a formula line.
        let mut file_agents: Option<u32> = None;
        let mut file_choices: Option<u32> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let slot = match key.trim() {
                "agents" => &mut file_agents,
                "choices" => &mut file_choices,
                _ => continue,
            };
            let parsed: u32 = value.trim().parse().map_err(|_| KbError {
                line: idx + 1,
                msg: format!("`{}` wants a natural number, got `{}`", key.trim(), value.trim()),
            })?;
            if slot.replace(parsed).is_some() {
                return Err(KbError {
                    line: idx + 1,
                    msg: format!("duplicate `{}` header", key.trim()),
                });
            }
        }
        let agents = agents.or(file_agents).unwrap_or(1);
        let choices = choices.or(file_choices).unwrap_or(0);
        if agents == 0 {
            return Err(KbError {
                line: 0,
                msg: "agent count must be at least 1".to_string(),
            });
        }

        let mut kb = KnowledgeBase::empty(agents, choices);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                return Err(KbError {
                    line: idx + 1,
                    msg: format!("expected `norm:`, `fact:`, or a header, got `{line}`"),
                });
            };
            let bucket = match key.trim() {
                "norm" => &mut kb.norms,
                "fact" => &mut kb.facts,
                "agents" | "choices" => continue,
                other => {
                    return Err(KbError {
                        line: idx + 1,
                        msg: format!("unknown line kind `{other}`"),
                    })
                }
            };
            let f = parse(value.trim(), agents).map_err(|e| KbError {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            bucket.push(f);
        }
        Ok(kb)
    }
}

/// A malformed knowledge-base file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbError {
    /// 1-based line number; 0 for file-level problems.
    pub line: usize,
    /// Human-readable description.
    pub msg: String,
}

impl fmt::Display for KbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "knowledge base: {}", self.msg)
        } else {
            write!(f, "knowledge base line {}: {}", self.line, self.msg)
        }
    }
}

impl core::error::Error for KbError {}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

/// Evidence backing a task answer; which side carries which kind is fixed
/// per task (see the module docs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskCertificate {
    /// A derivation of the question formula.
    Proof(Derivation),
    /// A model falsifying the question formula at the given world.
    Countermodel(DsModel, WorldId),
}

/// The decided answer together with its evidence and the exact formula
/// whose validity was decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskVerdict {
    /// The task's answer (`true` = duty holds / compliant / fulfillable).
    pub answer: bool,
    /// Proof or countermodel, polarity fixed per task.
    pub certificate: TaskCertificate,
    /// The validity question that was decided.
    pub question: Formula,
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

fn decide(kb: &KnowledgeBase, question: Formula, cfg: &ProveConfig) -> Result<(bool, TaskCertificate), SearchError> {
    let mut cfg = cfg.clone();
    cfg.agents = kb.agents;
    cfg.choices = kb.choices;
    let report = prove(&question, &cfg)?;
    Ok(match report.verdict {
        Verdict::Valid(d) => (true, TaskCertificate::Proof(d)),
        Verdict::Invalid { model, world } => {
            (false, TaskCertificate::Countermodel(model, world))
        }
    })
}

fn check_agent(kb: &KnowledgeBase, agent: AgentId) -> Result<(), SearchError> {
    if agent.0 >= kb.agents {
        return Err(SearchError::AgentOutOfRange {
            agent,
            agents: kb.agents,
        });
    }
    Ok(())
}

/// Whether the base commits `agent` to `goal`: decides
/// `⋀KB -> O[agent] goal`. Answer `true` means the duty holds, with the
/// proof as certificate; `false` carries a countermodel realizing the base
/// while the duty fails.
pub fn duty_check(
    kb: &KnowledgeBase,
    agent: AgentId,
    goal: &Formula,
    cfg: &ProveConfig,
) -> Result<TaskVerdict, SearchError> {
    check_agent(kb, agent)?;
    let question = kb
        .conjunction()
        .imp(Formula::Ought(agent, goal.clone().into()));
    let (answer, certificate) = decide(kb, question.clone(), cfg)?;
    Ok(TaskVerdict {
        answer,
        certificate,
        question,
    })
}

/// Whether doing `act` is open to `agent` without violating the base:
/// decides `⋀KB -> O[agent] ~act` and answers `true` ("compliant") exactly
/// when that contrary duty is not entailed. Compliance carries the
/// countermodel; a violation carries the proof of the contrary duty.
///
/// An inconsistent base entails every contrary duty, so nothing is
/// compliant with it; callers who want to rule that out first can ask
/// [`joint_fulfillment_check`].
pub fn compliance_check(
    kb: &KnowledgeBase,
    agent: AgentId,
    act: &Formula,
    cfg: &ProveConfig,
) -> Result<TaskVerdict, SearchError> {
    check_agent(kb, agent)?;
    let question = kb
        .conjunction()
        .imp(Formula::Ought(agent, act.negate().into()));
    let (entailed, certificate) = decide(kb, question.clone(), cfg)?;
    Ok(TaskVerdict {
        answer: !entailed,
        certificate,
        question,
    })
}

/// Whether every obligation in the base can be realized at once under its
/// facts: decides `⋀KB -> false`. Answer `true` ("fulfillable") comes with
/// a countermodel — a scenario where the whole base holds; `false` comes
/// with a proof that the base is inconsistent.
pub fn joint_fulfillment_check(
    kb: &KnowledgeBase,
    cfg: &ProveConfig,
) -> Result<TaskVerdict, SearchError> {
    let question = kb.conjunction().imp(Formula::bot());
    let (inconsistent, certificate) = decide(kb, question.clone(), cfg)?;
    Ok(TaskVerdict {
        answer: !inconsistent,
        certificate,
        question,
    })
}
