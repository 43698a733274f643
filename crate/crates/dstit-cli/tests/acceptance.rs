//! The acceptance gate: ten end-to-end checks of the decision procedure,
//! its certificates, and its termination instrumentation, with pinned time
//! and size tolerances. Prints exactly one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use dstit_core::calculus::{check_derivation, CheckOptions, Derivation, RuleName};
use dstit_core::search::{prove, ProveConfig, SearchStats, Verdict};
use dstit_core::semantics::{find_countermodel_bounded, DsModel, WorldId};
use dstit_core::syntax::{parse, AgentId, Formula};
use dstit_core::tasks::{compliance_check, joint_fulfillment_check, KnowledgeBase, TaskCertificate};

fn main() {
    let corpus = build_corpus();
    let criteria: Vec<(u32, Result<String, String>)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7(&corpus)),
        (8, criterion_8(&corpus)),
        (9, criterion_9(&corpus)),
        (10, criterion_10(&corpus)),
    ];
    let mut failed = 0;
    for (n, outcome) in &criteria {
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn dstit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstit"))
        .args(args)
        .output()
        .expect("running the dstit binary")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("the binary was signalled")
}

fn config(agents: u32, choices: u32) -> ProveConfig {
    ProveConfig {
        agents,
        choices,
        ..ProveConfig::default()
    }
}

fn decide(text: &str, agents: u32, choices: u32) -> (Formula, Verdict, Duration) {
    let f = parse(text, agents).expect("acceptance fixture parses");
    let start = Instant::now();
    let report = prove(&f, &config(agents, choices)).expect("acceptance fixture decides");
    (f, report.verdict, start.elapsed())
}

fn rules_of(d: &Derivation, out: &mut BTreeSet<RuleName>) {
    out.insert(d.rule.name());
    for p in &d.premises {
        rules_of(p, out);
    }
}

fn recheck(d: &Derivation, agents: u32, choices: u32) -> Result<(), String> {
    let opts = CheckOptions {
        agents,
        choices,
        expand_genid: false,
    };
    check_derivation(d, &opts).map_err(|e| format!("proof fails re-checking: {e}"))
}

fn recheck_model(model: &DsModel, world: WorldId, f: &Formula) -> Result<(), String> {
    let report = model
        .validate_frame()
        .map_err(|e| format!("malformed model: {e}"))?;
    if !report.all_ok() {
        return Err("the model violates a frame condition".to_owned());
    }
    match model.satisfies(world, f) {
        Ok(false) => Ok(()),
        Ok(true) => Err("the model does not falsify the formula at the root".to_owned()),
        Err(e) => Err(format!("evaluation failed: {e}")),
    }
}

/// A random formula of complexity at most `budget` (>= 1) over `agents`
/// agents and the variables p, q, r.
fn random_formula(rng: &mut ChaCha8Rng, budget: u64, agents: u32) -> Formula {
    let var = |rng: &mut ChaCha8Rng| ["p", "q", "r"][rng.gen_range(0..3)].to_owned();
    let agent = AgentId(rng.gen_range(0..agents));
    let kind_cap = match budget {
        0..=1 => 0,
        2 => 7,
        _ => 9,
    };
    match rng.gen_range(0..=kind_cap) {
        0 => Formula::Atom(var(rng)),
        1 => Formula::NegAtom(var(rng)),
        2 => Formula::Box(random_formula(rng, budget - 1, agents).into()),
        3 => Formula::Dia(random_formula(rng, budget - 1, agents).into()),
        4 => Formula::AgBox(agent, random_formula(rng, budget - 1, agents).into()),
        5 => Formula::AgDia(agent, random_formula(rng, budget - 1, agents).into()),
        6 => Formula::Ought(agent, random_formula(rng, budget - 1, agents).into()),
        7 => Formula::Perm(agent, random_formula(rng, budget - 1, agents).into()),
        kind => {
            let left_budget = rng.gen_range(1..=budget - 2);
            let left = random_formula(rng, left_budget, agents);
            let right = random_formula(rng, budget - 1 - left_budget, agents);
            if kind == 8 {
                Formula::And(left.into(), right.into())
            } else {
                Formula::Or(left.into(), right.into())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The shared corpus (criteria 7-10)
// ---------------------------------------------------------------------------

const CORPUS_SIZE: usize = 600;

struct CorpusRun {
    formula: Formula,
    agents: u32,
    choices: u32,
    outcome: Result<(Verdict, SearchStats), String>,
}

fn build_corpus() -> Vec<CorpusRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5717_ACCE);
    (0..CORPUS_SIZE)
        .map(|_| {
            let agents = rng.gen_range(1..=2);
            let choices = rng.gen_range(0..=2);
            let budget = rng.gen_range(1..=6);
            let formula = random_formula(&mut rng, budget, agents);
            assert!(formula.complexity() <= 6);
            let outcome = prove(&formula, &config(agents, choices))
                .map(|r| (r.verdict, r.stats))
                .map_err(|e| e.to_string());
            CorpusRun {
                formula,
                agents,
                choices,
                outcome,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

/// Obligation implies ability: valid fast, and the emitted proof re-checks
/// using only the small expected rule set.
fn criterion_1() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cert = dir.path().join("proof.json");
    let cert_str = cert.to_str().unwrap();

    let start = Instant::now();
    let out = dstit(&["prove", "O[0] p -> dia [0] p", "--cert", cert_str]);
    let elapsed = start.elapsed();
    if exit_code(&out) != 0 {
        return Err(format!("expected VALID (exit 0), got exit {}", exit_code(&out)));
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}, tolerance is < 1s"));
    }
    let check = dstit(&["check-proof", cert_str]);
    if exit_code(&check) != 0 {
        return Err("the emitted proof does not pass check-proof".to_owned());
    }

    let (_, verdict, _) = decide("O[0] p -> dia [0] p", 1, 0);
    let Verdict::Valid(d) = verdict else {
        return Err("library verdict flipped to invalid".to_owned());
    };
    let mut used = BTreeSet::new();
    rules_of(&d, &mut used);
    let allowed: BTreeSet<RuleName> = [
        RuleName::Id,
        RuleName::GenId,
        RuleName::Or,
        RuleName::D2,
        RuleName::Dia,
        RuleName::AgBox,
        RuleName::D3,
        RuleName::Perm,
    ]
    .into_iter()
    .collect();
    if let Some(extra) = used.difference(&allowed).next() {
        return Err(format!("the proof uses rule {extra}, outside the expected set"));
    }
    Ok(format!(
        "obligation-implies-ability proved valid in {elapsed:?} (< 1s); \
         proof re-checks and stays within the expected rule set"
    ))
}

/// Duty check with a weak premise: invalid, with the expected 4-world
/// countermodel shape.
fn criterion_2() -> Result<String, String> {
    let text = "(O[0] n & dia [0] ~n & dia [0] f & box (f -> n)) -> O[0] f";
    let (f, verdict, elapsed) = decide(text, 1, 0);
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}, tolerance is < 5s"));
    }
    let Verdict::Invalid { model, world } = verdict else {
        return Err("expected INVALID".to_owned());
    };
    recheck_model(&model, world, &f)?;
    if model.world_count() != 4 {
        return Err(format!("expected exactly 4 worlds, got {}", model.world_count()));
    }
    let ideal = &model.ideal[0];
    if ideal.len() != 1 {
        return Err(format!("expected a singleton ideal set, got {} worlds", ideal.len()));
    }
    let w = *ideal.iter().next().unwrap();
    let holds = |var: &str| model.valuation.get(var).is_some_and(|s| s.contains(&w));
    if !holds("n") || holds("f") {
        return Err("at the ideal world, n should hold and f should fail".to_owned());
    }

    // The emitted certificate passes the file-level checker too.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cert = dir.path().join("model.json");
    let cert_str = cert.to_str().unwrap();
    let out = dstit(&["prove", text, "--cert", cert_str]);
    if exit_code(&out) != 1 {
        return Err("the command-line run disagrees with the library".to_owned());
    }
    let check = dstit(&["check-model", cert_str, text, "w0"]);
    if exit_code(&check) != 0 {
        return Err("the emitted model does not pass check-model".to_owned());
    }
    Ok(format!(
        "weak-premise duty refuted in {elapsed:?} (< 5s); the 4-world countermodel \
         re-checks, with a singleton ideal cell where n holds and f fails"
    ))
}

/// Duty check with a strong premise: necessity in the other direction
/// makes the duty valid.
fn criterion_3() -> Result<String, String> {
    let text = "(O[0] n & dia [0] ~n & dia [0] f & box (n -> f)) -> O[0] f";
    let (_, verdict, elapsed) = decide(text, 1, 0);
    let Verdict::Valid(d) = verdict else {
        return Err("expected VALID after strengthening the premise".to_owned());
    };
    recheck(&d, 1, 0)?;
    Ok(format!(
        "strong-premise duty proved valid in {elapsed:?}; proof re-checks"
    ))
}

/// Joint fulfillment: obligations on provably incompatible choices are
/// not jointly fulfillable.
fn criterion_4() -> Result<String, String> {
    let kb = KnowledgeBase::parse(
        "norm: O[0] n\nnorm: O[0] p\nfact: dia [0] n\nfact: dia [0] ~n\n\
         fact: dia [0] p\nfact: dia [0] ~p\nfact: box ([0] n -> ! [0] p)\n",
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let verdict = joint_fulfillment_check(&kb, &config(1, 0)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if verdict.answer {
        return Err("expected the norm base to be unfulfillable".to_owned());
    }
    let TaskCertificate::Proof(d) = &verdict.certificate else {
        return Err("expected an inconsistency proof certificate".to_owned());
    };
    recheck(d, 1, 0)?;
    Ok(format!(
        "the seven-part norm base is unfulfillable, decided in {elapsed:?}; \
         the inconsistency proof re-checks"
    ))
}

/// Compliance: taking the car is consistent with the errand obligation.
fn criterion_5() -> Result<String, String> {
    let kb = KnowledgeBase::parse("norm: O[0] n\nfact: dia [0] f & dia [0] car\n")
        .map_err(|e| e.to_string())?;
    let act = parse("car", 1).unwrap();
    let start = Instant::now();
    let verdict =
        compliance_check(&kb, AgentId(0), &act, &config(1, 0)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !verdict.answer {
        return Err("expected the act to be compliant".to_owned());
    }
    let TaskCertificate::Countermodel(model, world) = &verdict.certificate else {
        return Err("expected a countermodel certificate".to_owned());
    };
    recheck_model(model, *world, &verdict.question)?;
    Ok(format!(
        "taking the car is compliant, decided in {elapsed:?}; \
         the countermodel re-checks"
    ))
}

/// Loop checking is what makes the search terminate: with it the choice
/// disjunction is refuted small and fast; without it the same input runs
/// away and the step budget stops it, with the runaway visible as a chain
/// of alternating-agent choice expansions.
fn criterion_6() -> Result<String, String> {
    let text = "dia [0] p | dia [1] q";
    let f = parse(text, 2).unwrap();
    let start = Instant::now();
    let report = prove(&f, &config(2, 2)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(30) {
        return Err(format!("took {elapsed:?}, tolerance is < 30s"));
    }
    if !matches!(report.verdict, Verdict::Invalid { .. }) {
        return Err("expected INVALID".to_owned());
    }
    let labels = report.stats.max_labels;
    if labels > 200 {
        return Err(format!("used {labels} labels, tolerance is <= 200"));
    }

    let out = dstit(&[
        "prove", text, "--agents", "2", "--choices", "2",
        "--no-loopcheck", "--budget", "5000", "--out", "structured",
    ]);
    if exit_code(&out) != 3 {
        return Err(format!(
            "expected the unchecked run to stop on the budget (exit 3), got exit {}",
            exit_code(&out)
        ));
    }
    let v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    if v["error"] != "budget-exhausted" {
        return Err(format!("expected a budget-exhausted report, got {}", v["error"]));
    }
    // Reconstruct the deepest generation chain from the choice edges and
    // check it alternates between the two agents.
    let edges = v["choice_edges"].as_array().ok_or("missing choice_edges")?;
    let parsed: Vec<(String, u64, String)> = edges
        .iter()
        .map(|e| {
            (
                e["parent"].as_str().unwrap_or_default().to_owned(),
                e["agent"].as_u64().unwrap_or(u64::MAX),
                e["child"].as_str().unwrap_or_default().to_owned(),
            )
        })
        .collect();
    let (_, mut agent, deepest) = parsed.last().ok_or("no choice edges recorded")?.clone();
    let mut chain = 1usize;
    let mut at = deepest;
    while let Some((parent, a, _)) = parsed.iter().find(|(_, _, c)| *c == at) {
        at = parent.clone();
        if chain > 1 && *a == agent {
            return Err(format!(
                "the generation chain repeats agent {agent} instead of alternating"
            ));
        }
        agent = *a;
        chain += 1;
    }
    if chain < 10 {
        return Err(format!(
            "expected a long runaway generation chain, found depth {chain}"
        ));
    }
    Ok(format!(
        "choice disjunction refuted in {elapsed:?} (< 30s) with {labels} labels (<= 200); \
         without loop checking the budget of 5000 stops a depth-{chain} chain of \
         alternating-agent expansions"
    ))
}

/// The search agrees with brute-force countermodel enumeration over the
/// random corpus.
fn criterion_7(corpus: &[CorpusRun]) -> Result<String, String> {
    let start = Instant::now();
    let mut refuted = 0usize;
    for (i, run) in corpus.iter().enumerate() {
        let (verdict, _) = run
            .outcome
            .as_ref()
            .map_err(|e| format!("corpus run {i} failed: {e}"))?;
        let bound = match verdict {
            Verdict::Valid(_) => 4,
            Verdict::Invalid { model, .. } => model.world_count().max(4),
        };
        let hit = find_countermodel_bounded(&run.formula, run.agents, run.choices, bound)
            .map_err(|e| format!("oracle failed on corpus run {i}: {e}"))?;
        match (verdict, hit) {
            (Verdict::Valid(_), Some(_)) => {
                return Err(format!(
                    "corpus run {i}: proved valid but the oracle found a countermodel \
                     ({} agents, bound {bound}): {}",
                    run.agents, run.formula
                ));
            }
            (Verdict::Invalid { .. }, None) => {
                return Err(format!(
                    "corpus run {i}: refuted but the oracle found no countermodel \
                     within bound {bound}: {}",
                    run.formula
                ));
            }
            (Verdict::Invalid { .. }, Some(_)) => refuted += 1,
            (Verdict::Valid(_), None) => {}
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(600) {
        return Err(format!("oracle pass took {elapsed:?}, tolerance is < 10min"));
    }
    Ok(format!(
        "verdicts agree with bounded enumeration on all {} random formulas \
         ({refuted} refuted) in {elapsed:?} (< 10min)",
        corpus.len()
    ))
}

/// Every certificate from the corpus re-verifies.
fn criterion_8(corpus: &[CorpusRun]) -> Result<String, String> {
    let (mut proofs, mut models) = (0usize, 0usize);
    for (i, run) in corpus.iter().enumerate() {
        let (verdict, _) = run
            .outcome
            .as_ref()
            .map_err(|e| format!("corpus run {i} failed: {e}"))?;
        match verdict {
            Verdict::Valid(d) => {
                recheck(d, run.agents, run.choices)
                    .map_err(|e| format!("corpus run {i}: {e}"))?;
                proofs += 1;
            }
            Verdict::Invalid { model, world } => {
                recheck_model(model, *world, &run.formula)
                    .map_err(|e| format!("corpus run {i}: {e}"))?;
                models += 1;
            }
        }
    }
    Ok(format!(
        "all corpus certificates re-verify: {proofs} proofs and {models} countermodels"
    ))
}

/// Proving a formula valid refutes its negation, and evaluation commutes
/// with negation on random triples.
fn criterion_9(corpus: &[CorpusRun]) -> Result<String, String> {
    let mut flipped = 0usize;
    for (i, run) in corpus.iter().enumerate() {
        let Ok((Verdict::Valid(_), _)) = &run.outcome else {
            continue;
        };
        let negated = run.formula.negate();
        let report = prove(&negated, &config(run.agents, run.choices))
            .map_err(|e| format!("negation of corpus run {i} failed: {e}"))?;
        if !matches!(report.verdict, Verdict::Invalid { .. }) {
            return Err(format!(
                "corpus run {i}: both {} and its negation proved valid",
                run.formula
            ));
        }
        flipped += 1;
    }

    // Negation duality on random (model, world, formula) triples; the
    // models are the countermodels the corpus produced.
    let pool: Vec<(&DsModel, u32)> = corpus
        .iter()
        .filter_map(|run| match &run.outcome {
            Ok((Verdict::Invalid { model, .. }, _)) => Some((model, run.agents)),
            _ => None,
        })
        .collect();
    if pool.is_empty() {
        return Err("the corpus produced no models to sample".to_owned());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5717_D0A1);
    for _ in 0..1000 {
        let (model, agents) = pool[rng.gen_range(0..pool.len())];
        let world = rng.gen_range(0..model.world_count());
        let budget = rng.gen_range(1..=6);
        let f = random_formula(&mut rng, budget, agents);
        let straight = model.satisfies(world, &f).map_err(|e| e.to_string())?;
        let negated = model.satisfies(world, &f.negate()).map_err(|e| e.to_string())?;
        if straight == negated {
            return Err(format!(
                "negation duality fails at world {world}: {f} and its negation \
                 both evaluate to {straight}"
            ));
        }
    }
    Ok(format!(
        "negating any of the {flipped} proved formulas flips the verdict; negation \
         duality holds on 1000 random model/world/formula triples"
    ))
}

/// Termination instrumentation: no run hits the label cap, and the
/// once-per-thread rules never refire.
fn criterion_10(corpus: &[CorpusRun]) -> Result<String, String> {
    let mut peak_labels = 0u32;
    for (i, run) in corpus.iter().enumerate() {
        let (_, stats) = run
            .outcome
            .as_ref()
            .map_err(|e| format!("corpus run {i} hit a resource stop: {e}"))?;
        peak_labels = peak_labels.max(stats.max_labels);
        if stats.max_box_fires_per_formula > 1 {
            return Err(format!(
                "corpus run {i}: a necessity expanded {} times on one branch",
                stats.max_box_fires_per_formula
            ));
        }
        if stats.max_ought_fires_per_formula > 1 {
            return Err(format!(
                "corpus run {i}: an obligation expanded {} times on one branch \
                 (agents {}, choices {}): {}",
                stats.max_ought_fires_per_formula, run.agents, run.choices, run.formula
            ));
        }
        if stats.max_d2_fires_per_agent > 1 {
            return Err(format!(
                "corpus run {i}: seriality fired {} times for one agent on one branch",
                stats.max_d2_fires_per_agent
            ));
        }
    }
    Ok(format!(
        "no corpus run hit the label cap (peak {peak_labels} labels); necessity, \
         obligation, and seriality each fired at most once per branch"
    ))
}
