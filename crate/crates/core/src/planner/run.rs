use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::search::{enumerate_combinations, evaluate, schedule_offers, select, Infeasibility};
use super::{
    generate_category_orders, CandidatePlan, CategoryDiagnostic, FailureReport,
    NegotiationDecision, NegotiationPrompt, OrderAttempt, PlanError, PlanOutcome, PlanRequest,
};
use crate::composer::Itinerary;
use crate::pert::Minutes;
use crate::registry::{CategoryKind, ServiceMatrix};

/// Source of answers to negotiation prompts.
pub trait Negotiator {
    fn decide(&mut self, prompt: &NegotiationPrompt) -> NegotiationDecision;
}

impl<F> Negotiator for F
where
    F: FnMut(&NegotiationPrompt) -> NegotiationDecision,
{
    fn decide(&mut self, prompt: &NegotiationPrompt) -> NegotiationDecision {
        self(prompt)
    }
}

/// Refuses every withdrawal.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoDecline;

impl Negotiator for AutoDecline {
    fn decide(&mut self, _: &NegotiationPrompt) -> NegotiationDecision {
        NegotiationDecision::refuse()
    }
}

/// Replays recorded decisions, refusing once they run out.
#[derive(Debug, Clone, Default)]
pub struct ScriptedNegotiator {
    decisions: VecDeque<NegotiationDecision>,
}

impl ScriptedNegotiator {
    pub fn new(decisions: impl IntoIterator<Item = NegotiationDecision>) -> Self {
        Self {
            decisions: decisions.into_iter().collect(),
        }
    }

    pub fn from_transcript(transcript: &[TranscriptEntry]) -> Self {
        Self::new(transcript.iter().filter_map(|e| match e {
            TranscriptEntry::Decision { decision } => Some(decision.clone()),
            _ => None,
        }))
    }
}

impl Negotiator for ScriptedNegotiator {
    fn decide(&mut self, _: &NegotiationPrompt) -> NegotiationDecision {
        self.decisions.pop_front().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Prompt { prompt: NegotiationPrompt },
    Decision { decision: NegotiationDecision },
    TieChoice { index: usize },
}

/// The plan report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub request: PlanRequest,
    pub withdrawn: Vec<String>,
    pub outcome: PlanOutcome,
    pub orders_tried: Vec<OrderAttempt>,
    pub transcript: Vec<TranscriptEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itinerary: Option<Itinerary>,
}

impl PlanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A resumable planning run: pauses on negotiation prompts and external tie
/// choices, resumes on decisions.
#[derive(Debug, Clone)]
pub struct PlanRun {
    original: PlanRequest,
    current: PlanRequest,
    matrix: ServiceMatrix,
    round: usize,
    withdrawn: Vec<String>,
    attempts: Vec<OrderAttempt>,
    transcript: Vec<TranscriptEntry>,
    outcome: PlanOutcome,
}

impl PlanRun {
    /// Validates the request and runs the first search round.
    pub fn start(request: PlanRequest, matrix: ServiceMatrix) -> Result<Self, PlanError> {
        request.validate(&matrix)?;
        let mut run = PlanRun {
            current: request.clone(),
            original: request,
            matrix,
            round: 1,
            withdrawn: Vec::new(),
            attempts: Vec::new(),
            transcript: Vec::new(),
            outcome: PlanOutcome::Failure {
                report: FailureReport {
                    reason: "not started".into(),
                    categories: vec![],
                    orders_tried: vec![],
                },
            },
        };
        run.outcome = run.search_round();
        Ok(run)
    }

    /// Starts a run and applies recorded decisions and tie choices in order.
    pub fn replay(
        request: PlanRequest,
        matrix: ServiceMatrix,
        transcript: &[TranscriptEntry],
    ) -> Result<Self, PlanError> {
        let mut run = Self::start(request, matrix)?;
        for entry in transcript {
            match entry {
                TranscriptEntry::Prompt { .. } => {}
                TranscriptEntry::Decision { decision } => {
                    run.negotiate(decision.clone())?;
                }
                TranscriptEntry::TieChoice { index } => {
                    run.choose(*index)?;
                }
            }
        }
        Ok(run)
    }

    pub fn outcome(&self) -> &PlanOutcome {
        &self.outcome
    }

    /// The request as reduced by withdrawals so far.
    pub fn current_request(&self) -> &PlanRequest {
        &self.current
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn orders_tried(&self) -> &[OrderAttempt] {
        &self.attempts
    }

    pub fn report(&self) -> PlanReport {
        PlanReport {
            request: self.original.clone(),
            withdrawn: self.withdrawn.clone(),
            outcome: self.outcome.clone(),
            orders_tried: self.attempts.clone(),
            transcript: self.transcript.clone(),
            itinerary: None,
        }
    }

    /// Answers a pending negotiation prompt. A refusal ends the run with a
    /// failure report; a withdrawal restarts the search without those categories.
    pub fn negotiate(&mut self, decision: NegotiationDecision) -> Result<&PlanOutcome, PlanError> {
        let PlanOutcome::NegotiationNeeded { prompt } = &self.outcome else {
            return Err(PlanError::NotAwaiting {
                expected: "a negotiation decision",
            });
        };
        if decision.is_refusal() {
            let report = FailureReport {
                reason: "no feasible plan and the client declined to withdraw categories".into(),
                categories: prompt.diagnostics.clone(),
                orders_tried: self.attempts.iter().map(|a| a.order.clone()).collect(),
            };
            self.transcript.push(TranscriptEntry::Decision { decision });
            self.outcome = PlanOutcome::Failure { report };
            return Ok(&self.outcome);
        }

        let mut set = BTreeSet::new();
        for id in &decision.withdraw {
            if !prompt.withdrawable.contains(id) {
                return Err(PlanError::InvalidDecision(format!(
                    "`{id}` was not offered for withdrawal"
                )));
            }
            if !set.insert(id.clone()) {
                return Err(PlanError::InvalidDecision(format!(
                    "`{id}` withdrawn twice"
                )));
            }
            if self.current.kind_of(id) == CategoryKind::Fixed && !decision.approve_fixed {
                return Err(PlanError::InvalidDecision(format!(
                    "`{id}` is a fixed category; withdrawing it needs approve_fixed"
                )));
            }
        }

        self.withdrawn.extend(decision.withdraw.iter().cloned());
        self.transcript.push(TranscriptEntry::Decision { decision });
        self.current = self.current.without(&set);
        self.round += 1;
        self.outcome = self.search_round();
        Ok(&self.outcome)
    }

    /// Resolves a pending tie by index into its candidate list.
    pub fn choose(&mut self, index: usize) -> Result<&PlanOutcome, PlanError> {
        let PlanOutcome::Tie { candidates } = &self.outcome else {
            return Err(PlanError::NotAwaiting {
                expected: "a tie choice",
            });
        };
        let plan = candidates.get(index).cloned().ok_or_else(|| {
            PlanError::InvalidDecision(format!(
                "tie index {index} out of range ({})",
                candidates.len()
            ))
        })?;
        self.transcript.push(TranscriptEntry::TieChoice { index });
        self.outcome = PlanOutcome::Selected { plan };
        Ok(&self.outcome)
    }

    fn search_round(&mut self) -> PlanOutcome {
        let request = self.current.clone();
        let categories = request.categories();
        if categories.is_empty() {
            return PlanOutcome::Failure {
                report: FailureReport {
                    reason: "every category has been withdrawn".into(),
                    categories: vec![],
                    orders_tried: self.attempts.iter().map(|a| a.order.clone()).collect(),
                },
            };
        }

        let w = self
            .matrix
            .restrict_to(&categories)
            .expect("request categories are validated against the matrix")
            .available_submatrix(&request.constraints);

        let mut tally = Tally::new(&categories, &w.empty_categories);
        let mut candidates: Vec<CandidatePlan> = Vec::new();

        if !w.empty_categories.is_empty() {
            // Emptiness does not depend on the order; the first one settles it.
            self.attempts.push(OrderAttempt {
                round: self.round,
                order: categories.clone(),
                examined: 0,
                truncated: false,
                feasible: 0,
            });
        } else {
            for order in
                generate_category_orders(&request.fc_order, &request.nc_set, request.search_mode)
            {
                let mut combos = enumerate_combinations(&w.matrix, &order, request.candidate_cap)
                    .expect("no column of W is empty");
                let (mut examined, mut feasible) = (0, 0);
                while let Some(offers) = combos.next_offers() {
                    examined += 1;
                    match schedule_offers(&order, &offers, &request) {
                        Ok((analysis, slots)) => {
                            feasible += 1;
                            candidates.push(CandidatePlan {
                                combination: combos.combination_of(&offers),
                                analysis,
                                completion: None,
                                slots,
                            });
                        }
                        Err(why) => tally.record(&why),
                    }
                }
                self.attempts.push(OrderAttempt {
                    round: self.round,
                    truncated: combos.is_truncated(),
                    order,
                    examined,
                    feasible,
                });
            }
        }

        if !candidates.is_empty() {
            let evaluated = candidates
                .into_iter()
                .map(|c| evaluate(c, request.deadline).expect("deadline is validated"))
                .collect();
            return select(evaluated, request.tie_break).expect("candidate list is non-empty");
        }

        let diagnostics = tally.diagnostics(&request);
        let allowed = |d: &&CategoryDiagnostic| {
            d.kind == CategoryKind::NonFixed || request.allow_fixed_withdrawal
        };
        let mut withdrawable: Vec<String> = diagnostics
            .iter()
            .filter(|d| d.empty || d.unavailable_slots > 0)
            .filter(allowed)
            .map(|d| d.category_id.clone())
            .collect();
        let stuck = diagnostics.iter().any(|d| d.empty && !allowed(&d));
        if withdrawable.is_empty() && !stuck {
            // Deadline-only failures: any category could shorten the plan.
            withdrawable = diagnostics
                .iter()
                .filter(allowed)
                .map(|d| d.category_id.clone())
                .collect();
        }
        if withdrawable.is_empty() || stuck {
            return PlanOutcome::Failure {
                report: FailureReport {
                    reason: if stuck {
                        "a category that may not be withdrawn has no available offers".into()
                    } else {
                        "no feasible plan and no category may be withdrawn".into()
                    },
                    categories: diagnostics,
                    orders_tried: self.attempts.iter().map(|a| a.order.clone()).collect(),
                },
            };
        }
        let prompt = NegotiationPrompt {
            round: self.round,
            withdrawable,
            diagnostics,
            deadline_violations: tally.deadline_violations,
            shortest_duration: tally.shortest_duration,
        };
        self.transcript.push(TranscriptEntry::Prompt {
            prompt: prompt.clone(),
        });
        PlanOutcome::NegotiationNeeded { prompt }
    }
}

/// Per-round bookkeeping of why combinations were rejected.
struct Tally {
    order: Vec<String>,
    empty: BTreeSet<String>,
    unavailable: BTreeMap<String, usize>,
    deadline_violations: usize,
    shortest_duration: Option<Minutes>,
}

impl Tally {
    fn new(categories: &[String], empty: &[String]) -> Self {
        Tally {
            order: categories.to_vec(),
            empty: empty.iter().cloned().collect(),
            unavailable: BTreeMap::new(),
            deadline_violations: 0,
            shortest_duration: None,
        }
    }

    fn record(&mut self, why: &Infeasibility) {
        match why {
            Infeasibility::Deadline { duration, .. } => {
                self.deadline_violations += 1;
                self.shortest_duration = Some(
                    self.shortest_duration
                        .map_or(*duration, |d| d.min(*duration)),
                );
            }
            Infeasibility::Unavailable { category_id, .. } => {
                *self.unavailable.entry(category_id.clone()).or_default() += 1;
            }
        }
    }

    fn diagnostics(&self, request: &PlanRequest) -> Vec<CategoryDiagnostic> {
        self.order
            .iter()
            .map(|id| {
                let empty = self.empty.contains(id);
                let unavailable_slots = self.unavailable.get(id).copied().unwrap_or(0);
                let reason = if empty {
                    "no service satisfies the constraints or has any availability".to_string()
                } else if unavailable_slots > 0 {
                    format!("{unavailable_slots} scheduled slot(s) fell outside every availability window")
                } else if self.deadline_violations > 0 {
                    "no availability conflict; combinations exceeded the deadline".to_string()
                } else {
                    "not examined".to_string()
                };
                CategoryDiagnostic {
                    category_id: id.clone(),
                    kind: request.kind_of(id),
                    empty,
                    unavailable_slots,
                    reason,
                }
            })
            .collect()
    }
}

/// Runs the full search, consulting `negotiator` whenever no feasible plan
/// exists. Each accepted withdrawal removes at least one category, so the
/// loop ends after at most as many rounds as there are categories.
pub fn plan(
    request: PlanRequest,
    matrix: &ServiceMatrix,
    negotiator: &mut dyn Negotiator,
) -> Result<PlanReport, PlanError> {
    let mut run = PlanRun::start(request, matrix.clone())?;
    while let PlanOutcome::NegotiationNeeded { prompt } = run.outcome() {
        let decision = negotiator.decide(prompt);
        run.negotiate(decision)?;
    }
    Ok(run.report())
}
