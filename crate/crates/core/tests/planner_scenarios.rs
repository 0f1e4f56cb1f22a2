mod support;

use zeittafel_core::planner::{
    generate_category_orders, plan, AutoDecline, NegotiationDecision, PlanError, PlanOutcome,
    PlanRequest, PlanRun, ScriptedNegotiator, SearchMode, TieBreak,
};
use zeittafel_core::registry::{AvailabilityWindow, ServiceMatrix};
use zeittafel_core::scenario::Scenario;

use support::{brute_force_feasible, oracle_best, random_instance};

fn safari(deadline: f64) -> (ServiceMatrix, PlanRequest) {
    let s = Scenario::web_safari();
    (
        s.matrix().unwrap(),
        PlanRequest::from_scenario(&s, Some(deadline)).unwrap(),
    )
}

fn window(start: f64, end: f64) -> AvailabilityWindow {
    AvailabilityWindow::new(start, end).unwrap()
}

fn assert_sound(
    plan: &zeittafel_core::planner::CandidatePlan,
    matrix: &ServiceMatrix,
    deadline: f64,
) {
    assert!(plan.duration() <= deadline);
    for slot in &plan.slots {
        let offer = matrix.offer(&slot.service_id).unwrap();
        assert!(
            offer.fits_slot(slot.start, slot.end),
            "{slot:?} outside windows"
        );
    }
}

#[test]
fn case_study_selects_fastest_providers() {
    let (m, req) = safari(450.0);
    let report = plan(req, &m, &mut AutoDecline).unwrap();
    let chosen = report.outcome.selected().expect("plan selected");
    assert_eq!(chosen.duration(), 410.0);
    assert_eq!(chosen.probability(), 1.0);
    assert_eq!(
        chosen.combination.service_tuple(),
        ["C1-WS3", "C2-WS1", "C3-WS1", "C4-WS3", "C5-WS3", "C6-WS1"]
    );
    assert_eq!(
        chosen.analysis.critical_path,
        ["C1", "C2", "C3", "C4", "C5", "C6"]
    );
    assert_eq!(report.orders_tried.len(), 6);
    assert!(report.transcript.is_empty());
    assert_sound(chosen, &m, 450.0);
}

#[test]
fn blocked_first_slot_forces_reorder() {
    let (m, req) = safari(450.0);
    let m = m.block_category("C4", window(180.0, 221.0)).unwrap();
    let report = plan(req, &m, &mut AutoDecline).unwrap();
    let chosen = report
        .outcome
        .selected()
        .expect("reordering rescues the plan");
    let order = &chosen.combination.category_order;
    let pos = |c: &str| order.iter().position(|x| x == c).unwrap();
    assert!(pos("C4") > pos("C5") || pos("C4") > pos("C6"));
    assert_eq!(chosen.duration(), 410.0);
    assert_sound(chosen, &m, 450.0);

    assert_eq!(
        report.orders_tried[0].feasible, 0,
        "identity order must fail"
    );
    let swapped_order = report
        .orders_tried
        .iter()
        .find(|a| a.order[3..] == ["C5", "C4", "C6"])
        .unwrap();
    assert!(swapped_order.feasible > 0);
}

/// C4 only bookable in [221, 340] and C5 only until 240: of the six tails,
/// only C5, C4, C6 works, and it is not a rotation of C4, C5, C6.
fn only_non_rotation_works() -> (ServiceMatrix, PlanRequest) {
    let (m, req) = safari(450.0);
    let m = m
        .block_category("C4", window(0.0, 221.0))
        .unwrap()
        .block_category("C4", window(340.0, 1440.0))
        .unwrap()
        .block_category("C5", window(240.0, 1440.0))
        .unwrap();
    (m, req)
}

#[test]
fn permutation_search_finds_what_rotations_miss() {
    let (m, mut req) = only_non_rotation_works();
    let report = plan(req.clone(), &m, &mut AutoDecline).unwrap();
    let chosen = report.outcome.selected().unwrap();
    assert_eq!(chosen.combination.category_order[3..], ["C5", "C4", "C6"]);
    assert_sound(chosen, &m, 450.0);
    let feasible_orders: Vec<_> = report
        .orders_tried
        .iter()
        .filter(|a| a.feasible > 0)
        .collect();
    assert_eq!(feasible_orders.len(), 1);

    req.search_mode = SearchMode::RotationsOnly;
    let report = plan(req, &m, &mut AutoDecline).unwrap();
    assert!(report.outcome.is_failure(), "{:?}", report.outcome.kind());
    assert_eq!(report.orders_tried.len(), 3);
}

#[test]
fn tight_deadline_prompts_then_fails_on_refusal() {
    let (m, req) = safari(100.0);
    let mut run = PlanRun::start(req, m).unwrap();
    let PlanOutcome::NegotiationNeeded { prompt } = run.outcome().clone() else {
        panic!("expected negotiation");
    };
    assert_eq!(prompt.withdrawable, ["C4", "C5", "C6"]);
    assert_eq!(prompt.shortest_duration, Some(410.0));
    assert!(prompt.deadline_violations > 0);

    run.negotiate(NegotiationDecision::refuse()).unwrap();
    let PlanOutcome::Failure { report } = run.outcome() else {
        panic!("expected failure");
    };
    assert_eq!(report.orders_tried.len(), 6);
    assert_eq!(report.categories.len(), 6);
}

#[test]
fn withdrawal_replans_without_the_category() {
    let (m, req) = safari(380.0);
    let mut negotiator = |_: &_| NegotiationDecision::withdraw(["C4"]);
    let report = plan(req, &m, &mut negotiator).unwrap();
    let chosen = report.outcome.selected().unwrap();
    assert_eq!(chosen.duration(), 325.0);
    assert!(!chosen.combination.choices.contains_key("C4"));
    assert_eq!(report.withdrawn, ["C4"]);
    assert_eq!(report.transcript.len(), 2);
}

#[test]
fn empty_column_prompts_for_that_category() {
    let (m, req) = safari(450.0);
    let m = m.block_category("C4", window(0.0, 1440.0)).unwrap();
    let mut run = PlanRun::start(req, m).unwrap();
    let PlanOutcome::NegotiationNeeded { prompt } = run.outcome().clone() else {
        panic!("expected negotiation");
    };
    assert_eq!(prompt.withdrawable, ["C4"]);
    assert!(prompt
        .diagnostics
        .iter()
        .any(|d| d.category_id == "C4" && d.empty));

    assert!(matches!(
        run.negotiate(NegotiationDecision::withdraw(["C5"])),
        Err(PlanError::InvalidDecision(_))
    ));
    assert!(matches!(run.choose(0), Err(PlanError::NotAwaiting { .. })));
    run.negotiate(NegotiationDecision::withdraw(["C4"]))
        .unwrap();
    assert_eq!(run.outcome().selected().unwrap().duration(), 325.0);
}

#[test]
fn fixed_categories_need_approval() {
    let (m, mut req) = safari(450.0);
    req.allow_fixed_withdrawal = true;
    let m = m.block_category("C2", window(0.0, 1440.0)).unwrap();
    let mut run = PlanRun::start(req, m).unwrap();
    assert!(
        matches!(run.outcome(), PlanOutcome::NegotiationNeeded { prompt } if prompt.withdrawable == ["C2"])
    );
    assert!(run
        .negotiate(NegotiationDecision::withdraw(["C2"]))
        .is_err());
    let approved = NegotiationDecision {
        withdraw: vec!["C2".into()],
        approve_fixed: true,
    };
    run.negotiate(approved).unwrap();
    assert_eq!(run.outcome().selected().unwrap().duration(), 390.0);
}

#[test]
fn fixed_only_failure_does_not_prompt() {
    let (m, req) = safari(450.0);
    let m = m.block_category("C1", window(0.0, 1440.0)).unwrap();
    let run = PlanRun::start(req, m).unwrap();
    assert!(run.outcome().is_failure());
}

#[test]
fn replay_reproduces_report_bytes() {
    let (m, req) = safari(380.0);
    let mut n = ScriptedNegotiator::new([NegotiationDecision::withdraw(["C6"])]);
    let first = plan(req.clone(), &m, &mut n).unwrap();
    let replayed = PlanRun::replay(req.clone(), m.clone(), &first.transcript)
        .unwrap()
        .report();
    assert_eq!(first.to_json(), replayed.to_json());
    let again = plan(
        req,
        &m,
        &mut ScriptedNegotiator::from_transcript(&first.transcript),
    )
    .unwrap();
    assert_eq!(first.to_json(), again.to_json());
}

#[test]
fn external_tie_choice() {
    let mut s = Scenario::web_safari();
    let mut twin = s.offers[0].clone();
    twin.id = "C1-WS0".into();
    twin.estimate = s.offers[2].estimate;
    s.offers.push(twin);
    let m = s.matrix().unwrap();
    let mut req = PlanRequest::from_scenario(&s, None).unwrap();
    req.search_mode = SearchMode::NoBacktracking;
    req.tie_break = TieBreak::External;
    let mut run = PlanRun::start(req.clone(), m.clone()).unwrap();
    let PlanOutcome::Tie { candidates } = run.outcome().clone() else {
        panic!("expected tie, got {}", run.outcome().kind());
    };
    assert_eq!(candidates.len(), 2);
    assert_eq!(candidates[0].combination.choices["C1"], "C1-WS0");
    run.choose(1).unwrap();
    assert_eq!(
        run.outcome().selected().unwrap().combination.choices["C1"],
        "C1-WS3"
    );
    assert!(run.choose(0).is_err());

    req.tie_break = TieBreak::Deterministic;
    let report = plan(req, &m, &mut AutoDecline).unwrap();
    assert_eq!(
        report.outcome.selected().unwrap().combination.choices["C1"],
        "C1-WS0"
    );
}

#[test]
fn rotations_emit_one_order_per_free_category() {
    for q in 1..=5 {
        let nc: Vec<String> = (0..q).map(|i| format!("N{i}")).collect();
        let orders = generate_category_orders(&["F".into()], &nc, SearchMode::RotationsOnly);
        assert_eq!(orders.len(), q);
        let all = generate_category_orders(&["F".into()], &nc, SearchMode::AllPermutations);
        assert_eq!(all.len(), (1..=q).product::<usize>());
        assert_eq!(&all[..q], &orders[..]);
    }
}

#[test]
fn requests_are_validated() {
    let (m, req) = safari(450.0);
    let mut bad = req.clone();
    bad.deadline = 0.0;
    assert!(PlanRun::start(bad, m.clone()).is_err());
    let mut bad = req.clone();
    bad.nc_set.push("C1".into());
    assert!(PlanRun::start(bad, m.clone()).is_err());
    let mut bad = req.clone();
    bad.nc_set.pop();
    assert!(PlanRun::start(bad, m.clone()).is_err());
    let mut bad = req.clone();
    bad.precedence_template = Some(vec![("C1".into(), "C2".into()), ("C2".into(), "C1".into())]);
    assert!(PlanRun::start(bad, m.clone()).is_err());
    let empty = ServiceMatrix::new(vec![]).unwrap();
    assert!(PlanRun::start(PlanRequest::new(10.0, vec![], vec![]), empty).is_err());
}

#[test]
fn candidate_cap_truncates_search() {
    let (m, mut req) = safari(450.0);
    req.candidate_cap = 10;
    req.search_mode = SearchMode::NoBacktracking;
    let report = plan(req, &m, &mut AutoDecline).unwrap();
    assert!(report.orders_tried[0].truncated);
    assert_eq!(report.orders_tried[0].examined, 10);
}

#[test]
fn random_instances_match_brute_force() {
    let mut feasible_seen = 0;
    for seed in 0..200 {
        let (m, req) = random_instance(seed);
        let feasible = brute_force_feasible(&m, &req);
        let report = plan(req.clone(), &m, &mut AutoDecline).unwrap();
        match oracle_best(&feasible) {
            Some(best) => {
                feasible_seen += 1;
                let chosen = report
                    .outcome
                    .selected()
                    .unwrap_or_else(|| panic!("seed {seed}: no plan"));
                assert!(
                    (chosen.probability() - best.probability).abs() <= 1e-9,
                    "seed {seed}"
                );
                let tuple: Vec<String> = chosen
                    .combination
                    .service_tuple()
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                assert_eq!(tuple, best.services, "seed {seed}");
                assert_eq!(chosen.combination.category_order, best.order, "seed {seed}");
                assert_sound(chosen, &m, req.deadline);
            }
            None => assert!(
                report.outcome.selected().is_none(),
                "seed {seed}: plan found where oracle has none"
            ),
        }
    }
    assert!(feasible_seen > 50, "generator too strict: {feasible_seen}");
}

#[test]
fn identical_inputs_give_identical_reports() {
    let (m, req) = only_non_rotation_works();
    let a = plan(req.clone(), &m, &mut AutoDecline).unwrap().to_json();
    let b = plan(req, &m, &mut AutoDecline).unwrap().to_json();
    assert_eq!(a, b);
}
