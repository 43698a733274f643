//! End-to-end tests of the `dstit` binary: exit codes, certificate
//! round-trips, tamper detection, knowledge-base commands, and output
//! determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dstit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstit"))
        .args(args)
        .output()
        .expect("running the dstit binary")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("the binary was signalled")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("writing a fixture file");
}

/// `prove` on a validity exits 0 and the emitted proof certificate passes
/// `check-proof`, including with generalized axiom leaves rejected.
#[test]
fn valid_proofs_round_trip_through_check_proof() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("proof.json");
    let cert_str = cert.to_str().unwrap();

    let out = dstit(&["prove", "O[0] p -> dia [0] p", "--cert", cert_str]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("VALID"));

    let check = dstit(&["check-proof", cert_str]);
    assert_eq!(exit_code(&check), 0, "stderr: {}", stderr(&check));
    assert!(stdout(&check).contains("proof verifies"));

    let strict = dstit(&["check-proof", cert_str, "--expand-genid"]);
    assert_eq!(exit_code(&strict), 0, "stderr: {}", stderr(&strict));
}

/// `prove` on an invalidity exits 1 and the emitted model certificate
/// passes `check-model` against the same formula and recorded world.
#[test]
fn countermodels_round_trip_through_check_model() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("model.json");
    let cert_str = cert.to_str().unwrap();
    let formula = "(O[0] n & dia [0] ~n & dia [0] f & box (f -> n)) -> O[0] f";

    let out = dstit(&["prove", formula, "--cert", cert_str]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("INVALID"));

    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let world = file["world"].as_str().unwrap().to_owned();

    let check = dstit(&["check-model", cert_str, formula, &world]);
    assert_eq!(exit_code(&check), 0, "stderr: {}", stderr(&check));
    assert!(stdout(&check).contains("falsifies the formula at w0: yes"));
}

/// Editing one rule name to another (field-compatible) rule makes
/// `check-proof` reject the file with exit 1; an unknown rule name is a
/// malformed file, exit 2.
#[test]
fn tampered_proofs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("proof.json");
    let cert_str = cert.to_str().unwrap();
    let out = dstit(&["prove", "O[0] p -> dia [0] p", "--cert", cert_str]);
    assert_eq!(exit_code(&out), 0);

    let original = std::fs::read_to_string(&cert).unwrap();
    let mut file: Value = serde_json::from_str(&original).unwrap();

    // `or` and `and` carry identical fields, so the edit still parses but
    // no longer checks.
    let nodes = file["nodes"].as_array_mut().unwrap();
    let target = nodes
        .iter_mut()
        .find(|n| n["rule"]["name"] == "or")
        .expect("the proof uses the disjunction rule");
    target["rule"]["name"] = Value::from("and");
    write(&cert, &file.to_string());
    let check = dstit(&["check-proof", cert_str]);
    assert_eq!(exit_code(&check), 1, "stderr: {}", stderr(&check));
    assert!(stdout(&check).contains("proof rejected"));

    let mut garbage: Value = serde_json::from_str(&original).unwrap();
    garbage["nodes"][0]["rule"]["name"] = Value::from("bogus");
    write(&cert, &garbage.to_string());
    let check = dstit(&["check-proof", cert_str]);
    assert_eq!(exit_code(&check), 2, "stderr: {}", stderr(&check));
    assert!(stderr(&check).contains("unknown rule name"));
}

/// A model tampered into breaking a frame condition is rejected.
#[test]
fn tampered_models_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("model.json");
    let cert_str = cert.to_str().unwrap();
    let formula = "dia [0] p -> O[0] p";
    let out = dstit(&["prove", formula, "--cert", cert_str]);
    assert_eq!(exit_code(&out), 1);

    let mut file: Value =
        serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    // Empty the ideal set of agent 0: seriality of ideality fails.
    file["ideal"][0] = Value::from(Vec::<Value>::new());
    write(&cert, &file.to_string());

    let check = dstit(&["check-model", cert_str, formula, "w0"]);
    assert_eq!(exit_code(&check), 1, "stderr: {}", stderr(&check));
    assert!(stdout(&check).contains("frame violation"));
}

/// The duty question from a knowledge base: promising a walk does not
/// commit the agent to walking when the necessitation runs the wrong way,
/// and does when it runs the right way.
#[test]
fn duty_answers_depend_on_the_direction_of_necessity() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.txt");
    let kb_str = kb.to_str().unwrap();

    write(
        &kb,
        "norm: O[0] n\nfact: dia [0] ~n\nfact: dia [0] f\nfact: box (f -> n)\n",
    );
    let out = dstit(&["duty", kb_str, "0", "f"]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("duty: no"));

    write(
        &kb,
        "norm: O[0] n\nfact: dia [0] ~n\nfact: dia [0] f\nfact: box (n -> f)\n",
    );
    let out = dstit(&["duty", kb_str, "0", "f"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("duty: yes"));
}

/// Compliance and joint fulfillment over knowledge-base files, with
/// certificates that re-verify.
#[test]
fn comply_and_fulfill_emit_checkable_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.txt");
    let kb_str = kb.to_str().unwrap();
    let cert = dir.path().join("cert.json");
    let cert_str = cert.to_str().unwrap();

    // Taking the car is compatible with the errand obligation.
    write(&kb, "norm: O[0] n\nfact: dia [0] f & dia [0] car\n");
    let out = dstit(&["comply", kb_str, "0", "car", "--cert", cert_str]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("compliant: yes"));

    // The countermodel certificate re-verifies against the question the
    // command reports.
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(file["kind"], "model");
    let question = file["formula"].as_str().unwrap().to_owned();
    let world = file["world"].as_str().unwrap().to_owned();
    let check = dstit(&["check-model", cert_str, &question, &world]);
    assert_eq!(exit_code(&check), 0, "stderr: {}", stderr(&check));

    // Two obligations on incompatible choices cannot both be fulfilled.
    write(
        &kb,
        "norm: O[0] a\nnorm: O[0] b\nfact: dia [0] a\nfact: dia [0] ~a\n\
         fact: dia [0] b\nfact: dia [0] ~b\nfact: box ([0] a -> ! [0] b)\n",
    );
    let out = dstit(&["fulfill", kb_str, "--cert", cert_str]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("fulfillable: no"));
    let check = dstit(&["check-proof", cert_str]);
    assert_eq!(exit_code(&check), 0, "stderr: {}", stderr(&check));

    // Without the conflict the base is fulfillable.
    write(&kb, "norm: O[0] a\nnorm: O[0] b\n");
    let out = dstit(&["fulfill", kb_str]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("fulfillable: yes"));
}

/// Command-line agent/choice flags override knowledge-base headers.
#[test]
fn cli_flags_override_kb_headers() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.txt");
    let kb_str = kb.to_str().unwrap();
    write(&kb, "agents: 1\nnorm: O[0] p\n");

    // Agent 1 is out of range under the header, in range under the flag.
    let out = dstit(&["duty", kb_str, "1", "p"]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr(&out));
    let out = dstit(&["duty", kb_str, "1", "p", "--agents", "2"]);
    assert_ne!(exit_code(&out), 2, "stderr: {}", stderr(&out));
}

/// `mc` evaluates at a named world: exit 0 when the formula holds, 1 when
/// it fails, 2 when the world does not exist.
#[test]
fn mc_evaluates_formulas_on_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("model.json");
    let cert_str = cert.to_str().unwrap();
    let out = dstit(&["prove", "dia [0] p -> O[0] p", "--cert", cert_str]);
    assert_eq!(exit_code(&out), 1);

    // The certificate records the falsified world; the implication fails
    // there, so its antecedent holds and its consequent fails.
    let out = dstit(&["mc", cert_str, "dia [0] p", "w0"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("TRUE"));
    let out = dstit(&["mc", cert_str, "O[0] p", "w0"]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("FALSE"));
    let out = dstit(&["mc", cert_str, "p", "w99"]);
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr(&out));
}

/// Structured output is byte-identical across runs of the same input.
#[test]
fn structured_output_is_deterministic() {
    let args = [
        "prove",
        "dia [0] p | dia [1] q",
        "--agents",
        "2",
        "--choices",
        "2",
        "--out",
        "structured",
    ];
    let first = dstit(&args);
    let second = dstit(&args);
    assert_eq!(exit_code(&first), 1);
    assert_eq!(first.stdout, second.stdout);

    // And it parses as one JSON object with the pieces a consumer needs.
    let v: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(v["command"], "prove");
    assert_eq!(v["verdict"], "invalid");
    assert_eq!(v["certificate"]["kind"], "model");
    assert!(v["stats"]["steps"].as_u64().unwrap() > 0);
}

/// Syntax errors, bad agent indices, and malformed files exit 2.
#[test]
fn malformed_inputs_exit_2() {
    let out = dstit(&["prove", "p &"]);
    assert_eq!(exit_code(&out), 2);
    let out = dstit(&["prove", "O[3] p", "--agents", "1"]);
    assert_eq!(exit_code(&out), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    write(&bad, "{\"kind\": \"proof\"}");
    let out = dstit(&["check-proof", bad.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let out = dstit(&["check-model", bad.to_str().unwrap(), "p", "w0"]);
    assert_eq!(exit_code(&out), 2);

    let kb = dir.path().join("kb.txt");
    write(&kb, "norm: p &\n");
    let out = dstit(&["fulfill", kb.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("line 1"));
}

/// With loop checking off and a step budget, a divergent search stops at
/// exit 3 and reports the choice-expansion edges that grew.
#[test]
fn budget_exhaustion_reports_choice_edges() {
    let out = dstit(&[
        "prove",
        "dia [0] p | dia [1] q",
        "--agents",
        "2",
        "--choices",
        "2",
        "--no-loopcheck",
        "--budget",
        "5000",
        "--out",
        "structured",
    ]);
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["error"], "budget-exhausted");
    assert_eq!(v["budget"], 5000);
    assert!(!v["choice_edges"].as_array().unwrap().is_empty());
}

/// The brute-force oracle cross-check passes on both verdict polarities.
#[test]
fn oracle_cross_check_agrees() {
    let out = dstit(&["prove", "O[0] p -> dia [0] p", "--oracle-bound", "4"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let out = dstit(&["prove", "dia [0] p -> O[0] p", "--oracle-bound", "4"]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr(&out));
}

/// `--trace` logs each applied rule to stderr in human mode and embeds
/// the steps in structured mode.
#[test]
fn trace_shows_applied_rules() {
    let out = dstit(&["prove", "O[0] p -> dia [0] p", "--trace"]);
    assert_eq!(exit_code(&out), 0);
    assert!(stderr(&out).contains("step 1:"));

    let out = dstit(&[
        "prove",
        "O[0] p -> dia [0] p",
        "--trace",
        "--out",
        "structured",
    ]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(!v["trace"].as_array().unwrap().is_empty());
}
