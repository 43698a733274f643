//! `dstit` — decide validity in multi-agent deontic STIT logics and check
//! the evidence.
//!
//! Subcommands: `prove` decides a formula and emits a proof or a
//! countermodel; `check-proof` and `check-model` re-verify emitted (or
//! hand-written) certificates; `mc` evaluates a formula on a model file;
//! `duty`, `comply`, and `fulfill` answer normative questions about a
//! knowledge-base file.
//!
//! Exit codes: 0 — the positive answer (valid / verifies / satisfied /
//! duty holds / compliant / fulfillable); 1 — the negative answer; 2 —
//! malformed input or configuration; 3 — internal errors, oracle
//! disagreements, and runs stopped by a resource limit.

mod json;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dstit_core::calculus::{check_derivation, CheckOptions};
use dstit_core::search::{prove, ProveConfig, SearchError, SearchStats, Verdict};
use dstit_core::semantics::{find_countermodel_bounded, ConditionReport, DsModel, WorldId};
use dstit_core::syntax::{parse, AgentId, Formula};
use dstit_core::tasks::{
    compliance_check, duty_check, joint_fulfillment_check, KnowledgeBase, TaskCertificate,
    TaskVerdict,
};

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "dstit")]
#[command(about = "Decision procedure for multi-agent deontic STIT logics")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutMode {
    /// Plain text for reading.
    Human,
    /// One JSON object on stdout; byte-deterministic for a fixed input.
    Structured,
}

/// Options shared by every deciding command.
#[derive(Args)]
struct RunOpts {
    /// Number of agents n >= 1 (for `duty`/`comply`/`fulfill` this
    /// overrides the knowledge base's `agents:` header).
    #[arg(long)]
    agents: Option<u32>,

    /// Choice bound k; 0 means unconstrained (overrides the `choices:`
    /// header for knowledge-base commands).
    #[arg(long)]
    choices: Option<u32>,

    /// Output mode.
    #[arg(long, value_enum, default_value_t = OutMode::Human)]
    out: OutMode,

    /// Write the certificate (proof or countermodel) to this file as JSON.
    #[arg(long)]
    cert: Option<PathBuf>,

    /// Log every applied rule to stderr (human mode) or into the report
    /// (structured mode).
    #[arg(long)]
    trace: bool,

    /// Abort when the search would create more than this many labels.
    #[arg(long, default_value_t = 10_000)]
    label_cap: u32,

    /// Cross-check the verdict against brute-force countermodel search up
    /// to this many worlds; disagreement is an internal error (exit 3).
    #[arg(long)]
    oracle_bound: Option<usize>,

    /// Disable ancestor-loop blocking (proof search may diverge; pair with
    /// --budget).
    #[arg(long)]
    no_loopcheck: bool,

    /// Stop after this many rule applications (exit 3).
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide validity of a formula; emits a proof or a countermodel.
    Prove {
        /// The formula, e.g. "O[0] p -> dia [0] p".
        formula: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Verify a proof certificate against the formula it claims.
    CheckProof {
        /// Path to a proof JSON file written by `prove --cert`.
        path: PathBuf,
        /// Reject generalized axiom leaves on non-literals.
        #[arg(long)]
        expand_genid: bool,
        /// Output mode.
        #[arg(long, value_enum, default_value_t = OutMode::Human)]
        out: OutMode,
    },
    /// Verify that a model file satisfies the frame conditions and
    /// falsifies a formula at a world.
    CheckModel {
        /// Path to a model JSON file.
        path: PathBuf,
        /// The formula the model claims to falsify.
        formula: String,
        /// World name where it must fail, e.g. "w0".
        world: String,
        /// Output mode.
        #[arg(long, value_enum, default_value_t = OutMode::Human)]
        out: OutMode,
    },
    /// Evaluate a formula on a model file at a world (exit 0 iff it
    /// holds).
    Mc {
        /// Path to a model JSON file.
        path: PathBuf,
        /// The formula to evaluate.
        formula: String,
        /// World name to evaluate at.
        world: String,
        /// Output mode.
        #[arg(long, value_enum, default_value_t = OutMode::Human)]
        out: OutMode,
    },
    /// Is the agent committed to the goal by the knowledge base?
    Duty {
        /// Path to a knowledge-base file.
        kb: PathBuf,
        /// The agent whose duty is queried.
        agent: u32,
        /// The goal formula.
        goal: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// May the agent do the act without violating the knowledge base?
    Comply {
        /// Path to a knowledge-base file.
        kb: PathBuf,
        /// The acting agent.
        agent: u32,
        /// The act in question.
        act: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Can every obligation in the knowledge base be realized at once?
    Fulfill {
        /// Path to a knowledge-base file.
        kb: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

/// An error that aborts the command, with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

/// Malformed input or configuration (exit 2).
fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

/// A bug or an oracle disagreement (exit 3).
fn internal(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Proof search recurses on branching rules; give it room on inputs with
/// deep conjunction structure.
const STACK_SIZE: usize = 256 << 20;

fn run(cmd: Cmd) -> CmdResult {
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .name("dstit".into())
            .stack_size(STACK_SIZE)
            .spawn_scoped(scope, || dispatch(cmd))
            .expect("spawning the worker thread")
            .join()
            .expect("worker thread panicked")
    })
}

fn dispatch(cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::Prove { formula, opts } => cmd_prove(&formula, &opts),
        Cmd::CheckProof {
            path,
            expand_genid,
            out,
        } => cmd_check_proof(&path, expand_genid, out),
        Cmd::CheckModel {
            path,
            formula,
            world,
            out,
        } => cmd_check_model(&path, &formula, &world, out),
        Cmd::Mc {
            path,
            formula,
            world,
            out,
        } => cmd_mc(&path, &formula, &world, out),
        Cmd::Duty {
            kb,
            agent,
            goal,
            opts,
        } => cmd_task(&kb, &opts, Task::Duty { agent, goal }),
        Cmd::Comply {
            kb,
            agent,
            act,
            opts,
        } => cmd_task(&kb, &opts, Task::Comply { agent, act }),
        Cmd::Fulfill { kb, opts } => cmd_task(&kb, &opts, Task::Fulfill),
    }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

fn prove_config(opts: &RunOpts, agents: u32, choices: u32) -> ProveConfig {
    ProveConfig {
        agents,
        choices,
        label_cap: opts.label_cap,
        loop_check: !opts.no_loopcheck,
        budget: opts.budget,
        trace: opts.trace,
    }
}

fn write_cert(path: &Path, cert: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(cert).expect("serializing certificate");
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("writing certificate to {}", path.display()))
        .map_err(usage)
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)
}

fn print_trace(out: OutMode, report_trace: &[dstit_core::search::TraceStep]) {
    if out == OutMode::Human {
        for step in report_trace {
            eprintln!("{step}");
        }
    }
}

fn trace_json(report_trace: &[dstit_core::search::TraceStep]) -> Value {
    json!(report_trace.iter().map(|s| s.to_string()).collect::<Vec<_>>())
}

fn stats_json(stats: &SearchStats) -> Value {
    json!({
        "steps": stats.steps,
        "max_labels": stats.max_labels,
        "rule_fires": stats
            .rule_fires
            .iter()
            .map(|(rule, n)| (rule.as_str().to_owned(), json!(n)))
            .collect::<serde_json::Map<_, _>>(),
    })
}

fn choice_edges_json(stats: &SearchStats) -> Value {
    json!(stats
        .choice_edges
        .iter()
        .map(|e| {
            json!({
                "parent": e.parent.to_string(),
                "agent": e.agent.0,
                "child": e.child.to_string(),
            })
        })
        .collect::<Vec<_>>())
}

/// Renders and reports a search stopped by a resource limit (exit 3). The
/// choice-expansion edges go into the report: on divergent inputs their
/// generation pattern is the evidence of what grew without bound.
fn resource_stop(
    out: OutMode,
    command: &str,
    what: &str,
    limit_field: (&str, u64),
    stats: &SearchStats,
) -> CmdResult {
    match out {
        OutMode::Human => {
            eprintln!("search stopped: {what}");
            eprintln!("steps: {}", stats.steps);
            eprintln!("peak labels: {}", stats.max_labels);
            for e in &stats.choice_edges {
                eprintln!("choice edge: {} -[{}]-> {}", e.parent, e.agent, e.child);
            }
        }
        OutMode::Structured => {
            let report = json!({
                "command": command,
                "error": what,
                limit_field.0: limit_field.1,
                "stats": stats_json(stats),
                "choice_edges": choice_edges_json(stats),
            });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        }
    }
    Ok(ExitCode::from(3))
}

/// Runs the verdict/oracle cross-check when `--oracle-bound` asks for it.
fn oracle_guard(
    opts: &RunOpts,
    formula: &Formula,
    agents: u32,
    choices: u32,
    found_valid: bool,
) -> Result<(), Failure> {
    let Some(bound) = opts.oracle_bound else {
        return Ok(());
    };
    let hit = find_countermodel_bounded(formula, agents, choices, bound)
        .map_err(|e| usage(anyhow!(e.to_string())))?;
    match (found_valid, hit) {
        (true, Some((_, w))) => Err(internal(anyhow!(
            "oracle disagreement: proved valid, but a countermodel with at most {bound} \
             worlds exists (fails at world index {w})"
        ))),
        (false, None) => Err(internal(anyhow!(
            "oracle disagreement: refuted, but no countermodel with at most {bound} worlds \
             exists"
        ))),
        _ => Ok(()),
    }
}

/// The choice cells of one agent, rendered `{w0, w1} {w2}`.
fn render_cells(model: &DsModel, agent: usize) -> String {
    let mut seen = vec![false; model.world_count()];
    let mut cells = Vec::new();
    for w in 0..model.world_count() {
        if seen[w] {
            continue;
        }
        let cell: Vec<&str> = (0..model.world_count())
            .filter(|&v| model.choice_rel[agent].contains(&(w, v)))
            .inspect(|&v| seen[v] = true)
            .map(|v| model.world_names[v].as_str())
            .collect();
        seen[w] = true;
        cells.push(format!("{{{}}}", cell.join(", ")));
    }
    cells.join(" ")
}

fn print_model(model: &DsModel, world: WorldId) {
    println!("worlds: {}", model.world_names.join(" "));
    for i in 0..model.agents as usize {
        println!("choice cells [{i}]: {}", render_cells(model, i));
        let ideal: Vec<&str> = model.ideal[i]
            .iter()
            .map(|&w| model.world_names[w].as_str())
            .collect();
        println!("ideal [{i}]: {{{}}}", ideal.join(", "));
    }
    for (var, set) in &model.valuation {
        let worlds: Vec<&str> = set.iter().map(|&w| model.world_names[w].as_str()).collect();
        println!("val {var}: {{{}}}", worlds.join(", "));
    }
    println!("falsified at: {}", model.world_names[world]);
}

// ---------------------------------------------------------------------------
// prove
// ---------------------------------------------------------------------------

fn cmd_prove(formula_text: &str, opts: &RunOpts) -> CmdResult {
    let agents = opts.agents.unwrap_or(1);
    let choices = opts.choices.unwrap_or(0);
    let formula = parse(formula_text, agents).map_err(|e| usage(anyhow!(e.to_string())))?;
    let cfg = prove_config(opts, agents, choices);

    let report = match prove(&formula, &cfg) {
        Ok(report) => report,
        Err(SearchError::BudgetExhausted { budget, stats }) => {
            return resource_stop(
                opts.out,
                "prove",
                "budget-exhausted",
                ("budget", budget),
                &stats,
            );
        }
        Err(SearchError::LabelCapExceeded { cap, stats }) => {
            return resource_stop(
                opts.out,
                "prove",
                "label-cap-exceeded",
                ("label_cap", cap as u64),
                &stats,
            );
        }
        Err(e @ SearchError::Internal { .. }) => return Err(internal(anyhow!(e.to_string()))),
        Err(e) => return Err(usage(anyhow!(e.to_string()))),
    };
    print_trace(opts.out, &report.trace);

    let (valid, cert) = match &report.verdict {
        Verdict::Valid(d) => (true, json::proof_to_json(&formula, agents, choices, d)),
        Verdict::Invalid { model, world } => {
            (false, json::model_to_json(model, Some((&formula, *world))))
        }
    };
    oracle_guard(opts, &formula, agents, choices, valid)?;
    if let Some(path) = &opts.cert {
        write_cert(path, &cert)?;
    }

    match opts.out {
        OutMode::Human => match &report.verdict {
            Verdict::Valid(d) => {
                println!("VALID");
                println!("proof: {} steps", d.size());
            }
            Verdict::Invalid { model, world } => {
                println!("INVALID");
                print_model(model, *world);
            }
        },
        OutMode::Structured => {
            let mut v = json!({
                "command": "prove",
                "formula": formula.to_string(),
                "agents": agents,
                "choices": choices,
                "verdict": if valid { "valid" } else { "invalid" },
                "certificate": cert,
                "stats": stats_json(&report.stats),
            });
            if opts.trace {
                v["trace"] = trace_json(&report.trace);
            }
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    if let Some(path) = &opts.cert {
        if opts.out == OutMode::Human {
            println!("certificate: {}", path.display());
        }
    }
    Ok(ExitCode::from(if valid { 0 } else { 1 }))
}

// ---------------------------------------------------------------------------
// check-proof / check-model / mc
// ---------------------------------------------------------------------------

fn cmd_check_proof(path: &Path, expand_genid: bool, out: OutMode) -> CmdResult {
    let file = json::proof_from_json(&read_json(path)?)
        .with_context(|| format!("reading proof file {}", path.display()))
        .map_err(usage)?;
    let opts = CheckOptions {
        agents: file.agents,
        choices: file.choices,
        expand_genid,
    };

    // The root must prove exactly the claimed formula, and every node must
    // be a legal rule instance.
    let goal = dstit_core::sequent::Sequent::goal(file.formula.clone());
    let failure: Option<String> = if file.derivation.sequent != goal {
        Some("the root sequent does not match the claimed formula".to_owned())
    } else {
        check_derivation(&file.derivation, &opts).err().map(|e| e.to_string())
    };

    let ok = failure.is_none();
    match out {
        OutMode::Human => match &failure {
            None => println!(
                "proof verifies: {} ({} steps)",
                file.formula,
                file.derivation.size()
            ),
            Some(err) => println!("proof rejected: {err}"),
        },
        OutMode::Structured => {
            let v = json!({
                "command": "check-proof",
                "formula": file.formula.to_string(),
                "agents": file.agents,
                "choices": file.choices,
                "ok": ok,
                "error": failure,
            });
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    Ok(ExitCode::from(if ok { 0 } else { 1 }))
}

fn frame_report_json(report: &ConditionReport) -> Value {
    json!(report
        .entries
        .iter()
        .map(|e| {
            json!({
                "condition": e.condition.to_string(),
                "agent": e.agent.map(|a| a.0),
                "ok": e.ok,
                "witness": e.witness,
            })
        })
        .collect::<Vec<_>>())
}

/// Loads a model file and resolves a world name; shared by `check-model`
/// and `mc`. Warns when the file records a different falsification claim
/// than the one being queried.
fn load_model(path: &Path, formula_text: &str, world: &str) -> Result<(DsModel, Formula, WorldId), Failure> {
    let file = json::model_from_json(&read_json(path)?)
        .with_context(|| format!("reading model file {}", path.display()))
        .map_err(usage)?;
    let model = file.model;
    let formula =
        parse(formula_text, model.agents).map_err(|e| usage(anyhow!(e.to_string())))?;
    let world = model
        .world_names
        .iter()
        .position(|n| n == world)
        .ok_or_else(|| usage(anyhow!("the model has no world named `{world}`")))?;
    if let Some((f, w)) = &file.falsifies {
        if *f != formula || *w != world {
            eprintln!(
                "note: the file records a falsification of `{f}` at {}, not the query",
                model.world_names[*w]
            );
        }
    }
    Ok((model, formula, world))
}

fn cmd_check_model(path: &Path, formula_text: &str, world: &str, out: OutMode) -> CmdResult {
    let (model, formula, world) = load_model(path, formula_text, world)?;
    let report = model
        .validate_frame()
        .map_err(|e| usage(anyhow!(e.to_string())))?;
    let frame_ok = report.all_ok();
    let falsified = frame_ok
        && !model
            .satisfies(world, &formula)
            .map_err(|e| usage(anyhow!(e.to_string())))?;
    let ok = frame_ok && falsified;

    match out {
        OutMode::Human => {
            if frame_ok {
                println!("frame: ok");
                println!(
                    "falsifies the formula at {}: {}",
                    model.world_names[world],
                    if falsified { "yes" } else { "no" }
                );
            } else {
                for e in report.entries.iter().filter(|e| !e.ok) {
                    let agent = e.agent.map(|a| format!(" (agent {a})")).unwrap_or_default();
                    let witness = e
                        .witness
                        .as_deref()
                        .map(|w| format!(": {w}"))
                        .unwrap_or_default();
                    println!("frame violation: {}{agent}{witness}", e.condition);
                }
            }
        }
        OutMode::Structured => {
            let v = json!({
                "command": "check-model",
                "formula": formula.to_string(),
                "world": model.world_names[world],
                "frame": frame_report_json(&report),
                "frame_ok": frame_ok,
                "falsified": falsified,
                "ok": ok,
            });
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    Ok(ExitCode::from(if ok { 0 } else { 1 }))
}

fn cmd_mc(path: &Path, formula_text: &str, world: &str, out: OutMode) -> CmdResult {
    let (model, formula, world) = load_model(path, formula_text, world)?;
    let holds = model
        .satisfies(world, &formula)
        .map_err(|e| usage(anyhow!(e.to_string())))?;
    match out {
        OutMode::Human => println!("{}", if holds { "TRUE" } else { "FALSE" }),
        OutMode::Structured => {
            let v = json!({
                "command": "mc",
                "formula": formula.to_string(),
                "world": model.world_names[world],
                "satisfied": holds,
            });
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    Ok(ExitCode::from(if holds { 0 } else { 1 }))
}

// ---------------------------------------------------------------------------
// duty / comply / fulfill
// ---------------------------------------------------------------------------

enum Task {
    Duty { agent: u32, goal: String },
    Comply { agent: u32, act: String },
    Fulfill,
}

impl Task {
    fn command(&self) -> &'static str {
        match self {
            Task::Duty { .. } => "duty",
            Task::Comply { .. } => "comply",
            Task::Fulfill => "fulfill",
        }
    }

    /// The human-facing answer words, positive and negative.
    fn phrasing(&self) -> (&'static str, &'static str, &'static str) {
        match self {
            Task::Duty { .. } => ("duty", "yes", "no"),
            Task::Comply { .. } => ("compliant", "yes", "no"),
            Task::Fulfill => ("fulfillable", "yes", "no"),
        }
    }
}

fn cmd_task(kb_path: &Path, opts: &RunOpts, task: Task) -> CmdResult {
    let text = fs::read_to_string(kb_path)
        .with_context(|| format!("reading {}", kb_path.display()))
        .map_err(usage)?;
    let kb = KnowledgeBase::parse_with(&text, opts.agents, opts.choices)
        .map_err(|e| usage(anyhow!(e.to_string())))?;
    let cfg = prove_config(opts, kb.agents, kb.choices);

    let run = |q: Result<TaskVerdict, SearchError>| -> Result<TaskVerdict, Failure> {
        match q {
            Ok(v) => Ok(v),
            Err(e @ SearchError::Internal { .. }) => Err(internal(anyhow!(e.to_string()))),
            Err(e @ (SearchError::BudgetExhausted { .. } | SearchError::LabelCapExceeded { .. })) => {
                Err(Failure {
                    code: 3,
                    error: anyhow!(e.to_string()),
                })
            }
            Err(e) => Err(usage(anyhow!(e.to_string()))),
        }
    };
    let verdict = match &task {
        Task::Duty { agent, goal } => {
            let goal = parse(goal, kb.agents).map_err(|e| usage(anyhow!(e.to_string())))?;
            run(duty_check(&kb, AgentId(*agent), &goal, &cfg))?
        }
        Task::Comply { agent, act } => {
            let act = parse(act, kb.agents).map_err(|e| usage(anyhow!(e.to_string())))?;
            run(compliance_check(&kb, AgentId(*agent), &act, &cfg))?
        }
        Task::Fulfill => run(joint_fulfillment_check(&kb, &cfg))?,
    };

    // The oracle cross-checks the decided question: valid iff no bounded
    // countermodel.
    let question_valid = matches!(verdict.certificate, TaskCertificate::Proof(_));
    oracle_guard(opts, &verdict.question, kb.agents, kb.choices, question_valid)?;

    let cert = match &verdict.certificate {
        TaskCertificate::Proof(d) => {
            json::proof_to_json(&verdict.question, kb.agents, kb.choices, d)
        }
        TaskCertificate::Countermodel(model, world) => {
            json::model_to_json(model, Some((&verdict.question, *world)))
        }
    };
    if let Some(path) = &opts.cert {
        write_cert(path, &cert)?;
    }

    match opts.out {
        OutMode::Human => {
            let (label, yes, no) = task.phrasing();
            println!("question: {}", verdict.question);
            println!("{label}: {}", if verdict.answer { yes } else { no });
            match &verdict.certificate {
                TaskCertificate::Proof(d) => println!("proof: {} steps", d.size()),
                TaskCertificate::Countermodel(model, world) => print_model(model, *world),
            }
            if let Some(path) = &opts.cert {
                println!("certificate: {}", path.display());
            }
        }
        OutMode::Structured => {
            let mut v = json!({
                "command": task.command(),
                "question": verdict.question.to_string(),
                "agents": kb.agents,
                "choices": kb.choices,
                "answer": verdict.answer,
                "certificate": cert,
            });
            match &task {
                Task::Duty { agent, goal } => {
                    v["agent"] = json!(agent);
                    v["goal"] = json!(goal);
                }
                Task::Comply { agent, act } => {
                    v["agent"] = json!(agent);
                    v["act"] = json!(act);
                }
                Task::Fulfill => {}
            }
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    Ok(ExitCode::from(if verdict.answer { 0 } else { 1 }))
}
