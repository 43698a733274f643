use dstit_core::calculus::{
    check_derivation, check_step, CheckOptions, Derivation, RuleApp, RuleName, StepError,
};
use dstit_core::sequent::{Label, RelAtom, Sequent};
use dstit_core::syntax::{parse, AgentId, Formula};

fn w(n: u32) -> Label {
    Label(n)
}

fn ag(i: u32) -> AgentId {
    AgentId(i)
}

fn opts(agents: u32, choices: u32) -> CheckOptions {
    CheckOptions {
        agents,
        choices,
        expand_genid: false,
    }
}

fn seq(rel: &[RelAtom], gamma: &[(Label, Formula)]) -> Sequent {
    Sequent {
        rel: rel.iter().cloned().collect(),
        gamma: gamma.iter().cloned().collect(),
    }
}

fn f(text: &str) -> Formula {
    parse(text, 2).unwrap()
}

/// The textbook derivation showing an obligation implies a realizable
/// choice: `O[0] p -> <> [0] p`, driven through permission, seriality, and
/// ideal-set closure. Exercises both principal-keeping and
/// principal-dropping premise shapes.
fn ought_implies_can_derivation() -> Derivation {
    let perm_np = f("P[0] ~p");
    let diabox = f("dia [0] p");
    let agbox = f("[0] p");
    let goal = f("P[0] ~p | dia [0] p");

    let i1 = RelAtom::ideal(ag(0), w(1));
    let i2 = RelAtom::ideal(ag(0), w(2));
    let r12 = RelAtom::choice(ag(0), w(1), w(2));

    let seq0 = seq(&[], &[(w(0), goal)]);
    let seq1 = seq(&[], &[(w(0), perm_np.clone()), (w(0), diabox.clone())]);
    let seq2 = seq(&[i1], &[(w(0), perm_np.clone()), (w(0), diabox.clone())]);
    let seq3 = seq(
        &[i1],
        &[
            (w(0), perm_np.clone()),
            (w(0), diabox.clone()),
            (w(1), agbox),
        ],
    );
    let seq4 = seq(
        &[i1, r12],
        &[
            (w(0), perm_np.clone()),
            (w(0), diabox.clone()),
            (w(2), f("p")),
        ],
    );
    let seq5 = seq(
        &[i1, r12, i2],
        &[
            (w(0), perm_np.clone()),
            (w(0), diabox.clone()),
            (w(2), f("p")),
        ],
    );
    let seq6 = seq(
        &[i1, r12, i2],
        &[
            (w(0), perm_np),
            (w(0), diabox),
            (w(2), f("p")),
            (w(2), f("~p")),
        ],
    );

    let leaf = Derivation {
        sequent: seq6,
        rule: RuleApp::Id {
            label: w(2),
            var: "p".into(),
        },
        premises: vec![],
    };
    let perm = Derivation {
        sequent: seq5,
        rule: RuleApp::Perm {
            agent: ag(0),
            label: w(0),
            body: f("~p"),
            target: w(2),
        },
        premises: vec![leaf],
    };
    let d3 = Derivation {
        sequent: seq4,
        rule: RuleApp::D3 {
            agent: ag(0),
            from: w(1),
            to: w(2),
        },
        premises: vec![perm],
    };
    let agb = Derivation {
        sequent: seq3,
        rule: RuleApp::AgBox {
            agent: ag(0),
            label: w(1),
            body: f("p"),
            fresh: w(2),
        },
        premises: vec![d3],
    };
    let dia = Derivation {
        sequent: seq2,
        rule: RuleApp::Dia {
            label: w(0),
            body: f("[0] p"),
            target: w(1),
        },
        premises: vec![agb],
    };
    let d2 = Derivation {
        sequent: seq1,
        rule: RuleApp::D2 {
            agent: ag(0),
            fresh: w(1),
        },
        premises: vec![dia],
    };
    Derivation {
        sequent: seq0,
        rule: RuleApp::Or {
            label: w(0),
            left: f("P[0] ~p"),
            right: f("dia [0] p"),
        },
        premises: vec![d2],
    }
}

#[test]
fn ought_implies_can_proof_checks() {
    let d = ought_implies_can_derivation();
    assert_eq!(d.sequent, Sequent::goal(f("P[0] ~p | dia [0] p")));
    check_derivation(&d, &opts(1, 0)).unwrap();
    assert_eq!(d.size(), 7);
    let expected: std::collections::BTreeSet<_> = [
        RuleName::Id,
        RuleName::Or,
        RuleName::D2,
        RuleName::Dia,
        RuleName::AgBox,
        RuleName::D3,
        RuleName::Perm,
    ]
    .into_iter()
    .collect();
    assert_eq!(d.rule_names(), expected);
}

#[test]
fn tampered_additions_are_rejected_with_a_path() {
    let mut d = ought_implies_can_derivation();
    // Corrupt the deepest premise: flip the closing literal's label.
    let mut node = &mut d;
    while !node.premises.is_empty() {
        node = &mut node.premises[0];
    }
    let bad = (w(0), f("~p"));
    let original = (w(2), f("~p"));
    node.sequent.gamma.remove(&original);
    node.sequent.gamma.insert(bad);

    let err = check_derivation(&d, &opts(1, 0)).unwrap_err();
    assert_eq!(err.path, vec![0, 0, 0, 0, 0]);
    assert!(matches!(err.error, StepError::PremiseShape { .. }));
}

#[test]
fn eigenvariables_must_be_globally_fresh_in_the_conclusion() {
    let conclusion = seq(&[], &[(w(0), f("box p"))]);
    let premise = seq(&[], &[(w(0), f("p"))]);
    let rule = RuleApp::Box {
        label: w(0),
        body: f("p"),
        fresh: w(0),
    };
    let err = check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap_err();
    assert!(matches!(err, StepError::Requirement { .. }), "{err}");
}

#[test]
fn side_condition_atoms_are_required() {
    // Permission needs the ideal flag on the target.
    let conclusion = seq(&[], &[(w(0), f("P[0] p"))]);
    let premise = seq(&[], &[(w(0), f("P[0] p")), (w(0), f("p"))]);
    let rule = RuleApp::Perm {
        agent: ag(0),
        label: w(0),
        body: f("p"),
        target: w(0),
    };
    let err = check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap_err();
    assert!(err.to_string().contains("side-condition"), "{err}");
}

#[test]
fn principal_formula_must_be_present() {
    let conclusion = seq(&[], &[(w(0), f("p"))]);
    let premise = seq(&[], &[(w(0), f("p")), (w(0), f("q")), (w(0), f("r"))]);
    let rule = RuleApp::Or {
        label: w(0),
        left: f("q"),
        right: f("r"),
    };
    let err = check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap_err();
    assert!(err.to_string().contains("principal"), "{err}");
}

#[test]
fn premise_counts_are_enforced() {
    let conclusion = seq(&[], &[(w(0), f("p & q"))]);
    let premise = seq(&[], &[(w(0), f("p & q")), (w(0), f("p"))]);
    let rule = RuleApp::And {
        label: w(0),
        left: f("p"),
        right: f("q"),
    };
    let err = check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap_err();
    assert_eq!(
        err,
        StepError::PremiseCount {
            rule: RuleName::And,
            expected: 2,
            found: 1
        }
    );
}

#[test]
fn conjunction_accepts_keep_and_drop_premises() {
    let conj = f("p & q");
    let conclusion = seq(&[], &[(w(0), conj.clone())]);
    let keep_left = seq(&[], &[(w(0), conj.clone()), (w(0), f("p"))]);
    let drop_right = seq(&[], &[(w(0), f("q"))]);
    let rule = RuleApp::And {
        label: w(0),
        left: f("p"),
        right: f("q"),
    };
    check_step(&conclusion, &rule, &[&keep_left, &drop_right], &opts(1, 0)).unwrap();

    // Swapped premise order is a different (wrong) instance.
    let err = check_step(&conclusion, &rule, &[&drop_right, &keep_left], &opts(1, 0)).unwrap_err();
    assert!(matches!(err, StepError::PremiseShape { .. }));
}

#[test]
fn agent_indices_are_range_checked() {
    let conclusion = seq(&[], &[(w(0), f("[1] p"))]);
    let premise = seq(
        &[RelAtom::choice(ag(1), w(0), w(1))],
        &[(w(0), f("[1] p")), (w(1), f("p"))],
    );
    let rule = RuleApp::AgBox {
        agent: ag(1),
        label: w(0),
        body: f("p"),
        fresh: w(1),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(2, 0)).unwrap();
    let err = check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap_err();
    assert!(matches!(err, StepError::AgentOutOfRange { .. }));
}

#[test]
fn generalized_axioms_close_on_any_complementary_pair() {
    let phi = f("box (p | ~q)");
    let conclusion = seq(&[], &[(w(0), phi.clone()), (w(0), phi.negate())]);
    let rule = RuleApp::GenId {
        label: w(0),
        formula: phi.clone(),
    };
    check_step(&conclusion, &rule, &[], &opts(1, 0)).unwrap();

    // Under expand-genid only literal clashes may close a branch.
    let strict = CheckOptions {
        agents: 1,
        choices: 0,
        expand_genid: true,
    };
    let err = check_step(&conclusion, &rule, &[], &strict).unwrap_err();
    assert!(err.to_string().contains("expand-genid"), "{err}");

    let lit = seq(&[], &[(w(0), f("p")), (w(0), f("~p"))]);
    let rule = RuleApp::GenId {
        label: w(0),
        formula: f("p"),
    };
    check_step(&lit, &rule, &[], &strict).unwrap();
}

#[test]
fn relabelling_rules_move_world_independent_formulas() {
    let boxed = f("box p");
    let conclusion = seq(&[], &[(w(3), boxed.clone()), (w(3), f("q"))]);
    let moved = seq(&[], &[(w(0), boxed.clone()), (w(3), f("q"))]);
    let rule = RuleApp::BoxStar {
        from: w(3),
        to: w(0),
        body: f("p"),
    };
    check_step(&conclusion, &rule, &[&moved], &opts(1, 0)).unwrap();

    let kept = seq(&[], &[(w(0), boxed.clone()), (w(3), boxed), (w(3), f("q"))]);
    check_step(&conclusion, &rule, &[&kept], &opts(1, 0)).unwrap();

    let ought = f("O[0] p");
    let conclusion = seq(&[], &[(w(2), ought.clone())]);
    let moved = seq(&[], &[(w(0), ought.clone())]);
    let rule = RuleApp::OughtStar {
        agent: ag(0),
        from: w(2),
        to: w(0),
        body: f("p"),
    };
    check_step(&conclusion, &rule, &[&moved], &opts(1, 0)).unwrap();
}

#[test]
fn refreshed_choice_box_attaches_to_the_relating_label() {
    let agbox = f("[0] p");
    let r = RelAtom::choice(ag(0), w(1), w(2));
    let conclusion = seq(&[r], &[(w(2), agbox.clone())]);
    let premise = seq(
        &[r, RelAtom::choice(ag(0), w(1), w(3))],
        &[(w(2), agbox.clone()), (w(3), f("p"))],
    );
    let rule = RuleApp::AgBoxStar {
        agent: ag(0),
        parent: w(1),
        label: w(2),
        body: f("p"),
        fresh: w(3),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();

    // The new atom must come from the parent, not from the principal label.
    let wrong = seq(
        &[r, RelAtom::choice(ag(0), w(2), w(3))],
        &[(w(2), agbox), (w(3), f("p"))],
    );
    let err = check_step(&conclusion, &rule, &[&wrong], &opts(1, 0)).unwrap_err();
    assert!(matches!(err, StepError::PremiseShape { .. }));
}

#[test]
fn duplicating_choice_diamond_copies_itself_to_the_target() {
    let dia = f("<0> p");
    let r = RelAtom::choice(ag(0), w(0), w(1));
    let conclusion = seq(&[r], &[(w(0), dia.clone())]);
    let premise = seq(
        &[r],
        &[(w(0), dia.clone()), (w(1), f("p")), (w(1), dia.clone())],
    );
    let rule = RuleApp::AgDiaStar {
        agent: ag(0),
        label: w(0),
        body: f("p"),
        target: w(1),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();

    // The plain variant adds only the body.
    let plain = seq(&[r], &[(w(0), dia.clone()), (w(1), f("p"))]);
    let rule = RuleApp::AgDia {
        agent: ag(0),
        label: w(0),
        body: f("p"),
        target: w(1),
    };
    check_step(&conclusion, &rule, &[&plain], &opts(1, 0)).unwrap();
}

#[test]
fn relational_closure_rules_check_their_sources() {
    let r01 = RelAtom::choice(ag(0), w(0), w(1));
    let r02 = RelAtom::choice(ag(0), w(0), w(2));
    let conclusion = seq(&[r01, r02], &[(w(0), f("p"))]);

    let premise = seq(
        &[r01, r02, RelAtom::choice(ag(0), w(1), w(2))],
        &[(w(0), f("p"))],
    );
    let rule = RuleApp::Euc {
        agent: ag(0),
        source: w(0),
        left: w(1),
        right: w(2),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();

    let missing = RuleApp::Euc {
        agent: ag(0),
        source: w(1),
        left: w(0),
        right: w(2),
    };
    assert!(check_step(&conclusion, &missing, &[&premise], &opts(1, 0)).is_err());

    let premise = seq(&[r01, r02, RelAtom::choice(ag(0), w(1), w(1))], &[(w(0), f("p"))]);
    let rule = RuleApp::Ref {
        agent: ag(0),
        label: w(1),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();

    let i0 = RelAtom::ideal(ag(0), w(0));
    let conclusion = seq(&[r01, i0], &[(w(0), f("p"))]);
    let premise = seq(&[r01, i0, RelAtom::ideal(ag(0), w(1))], &[(w(0), f("p"))]);
    let rule = RuleApp::D3 {
        agent: ag(0),
        from: w(0),
        to: w(1),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();
}

#[test]
fn admissible_symmetry_and_transitivity_check() {
    let r01 = RelAtom::choice(ag(0), w(0), w(1));
    let r12 = RelAtom::choice(ag(0), w(1), w(2));
    let conclusion = seq(&[r01, r12], &[(w(0), f("p"))]);

    let premise = seq(&[r01, r12, RelAtom::choice(ag(0), w(1), w(0))], &[(w(0), f("p"))]);
    check_step(
        &conclusion,
        &RuleApp::Sym {
            agent: ag(0),
            from: w(0),
            to: w(1),
        },
        &[&premise],
        &opts(1, 0),
    )
    .unwrap();

    let premise = seq(&[r01, r12, RelAtom::choice(ag(0), w(0), w(2))], &[(w(0), f("p"))]);
    check_step(
        &conclusion,
        &RuleApp::Tra {
            agent: ag(0),
            a: w(0),
            b: w(1),
            c: w(2),
        },
        &[&premise],
        &opts(1, 0),
    )
    .unwrap();
}

#[test]
fn substitution_maps_premise_onto_conclusion() {
    let premise = seq(
        &[RelAtom::choice(ag(0), w(0), w(5)), RelAtom::ideal(ag(0), w(5))],
        &[(w(5), f("p"))],
    );
    let conclusion = premise.substitute(w(5), w(0));
    let rule = RuleApp::Sub {
        replaced: w(5),
        replacement: w(0),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 0)).unwrap();

    let wrong = seq(&[], &[(w(1), f("p"))]);
    assert!(check_step(&wrong, &rule, &[&premise], &opts(1, 0)).is_err());
}

#[test]
fn weakening_accepts_componentwise_subsets() {
    let conclusion = seq(
        &[RelAtom::choice(ag(0), w(0), w(1))],
        &[(w(0), f("p")), (w(1), f("q"))],
    );
    let premise = seq(&[], &[(w(0), f("p"))]);
    check_step(&conclusion, &RuleApp::Wk, &[&premise], &opts(1, 0)).unwrap();

    let not_subset = seq(&[], &[(w(0), f("r"))]);
    assert!(check_step(&conclusion, &RuleApp::Wk, &[&not_subset], &opts(1, 0)).is_err());
}

#[test]
fn independence_introduces_one_joint_successor() {
    let r0 = RelAtom::choice(ag(0), w(0), w(0));
    let conclusion = seq(&[r0], &[(w(0), f("p")), (w(1), f("q"))]);
    let premise = seq(
        &[
            r0,
            RelAtom::choice(ag(0), w(0), w(7)),
            RelAtom::choice(ag(1), w(1), w(7)),
        ],
        &[(w(0), f("p")), (w(1), f("q"))],
    );
    let rule = RuleApp::Ioa {
        tuple: vec![w(0), w(1)],
        fresh: w(7),
    };
    check_step(&conclusion, &rule, &[&premise], &opts(2, 0)).unwrap();

    // Arity must match the agent count.
    let err = check_step(&conclusion, &rule, &[&premise], &opts(3, 0)).unwrap_err();
    assert!(err.to_string().contains("agent count"), "{err}");

    // Tuple labels must exist in the conclusion.
    let rule = RuleApp::Ioa {
        tuple: vec![w(0), w(9)],
        fresh: w(7),
    };
    assert!(check_step(&conclusion, &rule, &[&premise], &opts(2, 0)).is_err());
}

#[test]
fn batched_independence_adds_all_atoms_at_once() {
    let conclusion = seq(&[], &[(w(0), f("p")), (w(1), f("q"))]);
    let steps = vec![
        (vec![w(0), w(1)], w(2)),
        (vec![w(1), w(0)], w(3)),
    ];
    let premise = seq(
        &[
            RelAtom::choice(ag(0), w(0), w(2)),
            RelAtom::choice(ag(1), w(1), w(2)),
            RelAtom::choice(ag(0), w(1), w(3)),
            RelAtom::choice(ag(1), w(0), w(3)),
        ],
        &[(w(0), f("p")), (w(1), f("q"))],
    );
    let rule = RuleApp::IoaOp { steps };
    check_step(&conclusion, &rule, &[&premise], &opts(2, 0)).unwrap();

    // Reusing a fresh label across batch entries is rejected.
    let rule = RuleApp::IoaOp {
        steps: vec![(vec![w(0), w(1)], w(2)), (vec![w(1), w(0)], w(2))],
    };
    assert!(check_step(&conclusion, &rule, &[&premise], &opts(2, 0)).is_err());
}

#[test]
fn choice_bound_branching_enumerates_ordered_pairs() {
    let gamma = [(w(0), f("p"))];
    let conclusion = seq(&[], &gamma);

    // k = 1: two labels, a single premise relating them.
    let premise = seq(&[RelAtom::choice(ag(0), w(0), w(1))], &gamma);
    let rule = RuleApp::Apc {
        agent: ag(0),
        labels: vec![w(0), w(1)],
    };
    check_step(&conclusion, &rule, &[&premise], &opts(1, 1)).unwrap();

    // k = 2: three labels, three premises in lexicographic pair order.
    let rule = RuleApp::Apc {
        agent: ag(0),
        labels: vec![w(0), w(1), w(2)],
    };
    let p01 = seq(&[RelAtom::choice(ag(0), w(0), w(1))], &gamma);
    let p02 = seq(&[RelAtom::choice(ag(0), w(0), w(2))], &gamma);
    let p12 = seq(&[RelAtom::choice(ag(0), w(1), w(2))], &gamma);
    check_step(&conclusion, &rule, &[&p01, &p02, &p12], &opts(1, 2)).unwrap();

    // Premise order is part of the instance.
    assert!(check_step(&conclusion, &rule, &[&p02, &p01, &p12], &opts(1, 2)).is_err());

    // Without a bound the rule does not exist.
    let err = check_step(&conclusion, &rule, &[&p01, &p02, &p12], &opts(1, 0)).unwrap_err();
    assert!(matches!(err, StepError::PremiseCount { .. }));
}

#[test]
fn rule_names_round_trip_through_text() {
    for rule in [
        RuleName::Id,
        RuleName::GenId,
        RuleName::And,
        RuleName::Or,
        RuleName::Box,
        RuleName::BoxStar,
        RuleName::Dia,
        RuleName::AgBox,
        RuleName::AgBoxStar,
        RuleName::AgDia,
        RuleName::AgDiaStar,
        RuleName::Ought,
        RuleName::OughtStar,
        RuleName::Perm,
        RuleName::Ref,
        RuleName::Euc,
        RuleName::D2,
        RuleName::D3,
        RuleName::Ioa,
        RuleName::IoaOp,
        RuleName::Apc,
        RuleName::Sym,
        RuleName::Tra,
        RuleName::Sub,
        RuleName::Wk,
    ] {
        assert_eq!(RuleName::from_str_name(rule.as_str()), Some(rule));
    }
    assert_eq!(RuleName::from_str_name("mystery"), None);
}
