//! Deadline-constrained selection of one service per category.
//!
//! A [`PlanRun`] filters the registry, walks category orders (fixed prefix
//! plus an arrangement of the free categories), schedules every combination
//! as a PERT network, keeps the feasible ones and picks the plan with the
//! highest probability of finishing by the deadline. When no order yields a
//! feasible plan the run pauses with a [`NegotiationPrompt`] so the client can
//! withdraw categories.

mod orders;
mod run;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pert::{CompletionProbability, Minutes, PertError, ScheduleAnalysis};
use crate::registry::{CategoryKind, ConstraintSet, RegistryError, ServiceMatrix};
use crate::scenario::Scenario;

pub use orders::{generate_category_orders, next_permutation};
pub use run::{
    plan, AutoDecline, Negotiator, PlanReport, PlanRun, ScriptedNegotiator, TranscriptEntry,
};
pub use search::{
    enumerate_combinations, evaluate, schedule_and_check, select, Combinations, EmptyCategory,
    Infeasibility, PROBABILITY_TIE_TOLERANCE,
};

pub const DEFAULT_CANDIDATE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid plan request: {0}")]
    Validation(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Pert(#[from] PertError),
    #[error("invalid negotiation decision: {0}")]
    InvalidDecision(String),
    #[error("run is not awaiting {expected}")]
    NotAwaiting { expected: &'static str },
    #[error("candidate list is empty")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Only the given order; no backtracking.
    NoBacktracking,
    /// The given order and its left rotations of the free categories.
    RotationsOnly,
    /// Rotations first, then every remaining permutation.
    #[default]
    AllPermutations,
}

impl SearchMode {
    pub const ALL: [SearchMode; 3] = [
        SearchMode::NoBacktracking,
        SearchMode::RotationsOnly,
        SearchMode::AllPermutations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::NoBacktracking => "no_backtracking",
            SearchMode::RotationsOnly => "rotations_only",
            SearchMode::AllPermutations => "all_permutations",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_backtracking" | "none" => Ok(SearchMode::NoBacktracking),
            "rotations_only" | "rotations" => Ok(SearchMode::RotationsOnly),
            "all_permutations" | "permutations" => Ok(SearchMode::AllPermutations),
            other => Err(format!("unknown search mode `{other}`")),
        }
    }
}

/// How ties that survive probability and duration are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest service-id tuple wins.
    #[default]
    Deterministic,
    /// Surface the tie for an external choice.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub deadline: Minutes,
    pub fc_order: Vec<String>,
    pub nc_set: Vec<String>,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precedence_template: Option<Vec<(String, String)>>,
    #[serde(default)]
    pub search_mode: SearchMode,
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Lets negotiation offer fixed categories for withdrawal.
    #[serde(default)]
    pub allow_fixed_withdrawal: bool,
}

fn default_cap() -> usize {
    DEFAULT_CANDIDATE_CAP
}

impl PlanRequest {
    pub fn new(deadline: Minutes, fc_order: Vec<String>, nc_set: Vec<String>) -> Self {
        Self {
            deadline,
            fc_order,
            nc_set,
            constraints: ConstraintSet::default(),
            precedence_template: None,
            search_mode: SearchMode::default(),
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            tie_break: TieBreak::default(),
            allow_fixed_withdrawal: false,
        }
    }

    /// The scenario's default request; `deadline` overrides the scenario's.
    pub fn from_scenario(
        scenario: &Scenario,
        deadline: Option<Minutes>,
    ) -> Result<Self, PlanError> {
        let deadline = deadline
            .or(scenario.deadline)
            .ok_or_else(|| PlanError::Validation("no deadline given".into()))?;
        let mut request = Self::new(deadline, scenario.fixed_order(), scenario.non_fixed_set());
        request.constraints = scenario.constraints.clone();
        request.precedence_template = scenario.precedence_template.clone();
        Ok(request)
    }

    /// All categories: the fixed prefix followed by the free set.
    pub fn categories(&self) -> Vec<String> {
        self.fc_order.iter().chain(&self.nc_set).cloned().collect()
    }

    pub fn validate(&self, matrix: &ServiceMatrix) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::Validation(msg));
        if !(self.deadline.is_finite() && self.deadline > 0.0) {
            return bad(format!("deadline must be positive, got {}", self.deadline));
        }
        if self.candidate_cap == 0 {
            return bad("candidate_cap must be positive".into());
        }
        if self.constraints.party_size < 1 {
            return bad("party_size must be >= 1".into());
        }
        if matrix.categories().is_empty() {
            return bad("the registry has no categories".into());
        }
        let mut seen = BTreeSet::new();
        for id in self.fc_order.iter().chain(&self.nc_set) {
            if matrix.category(id).is_none() {
                return bad(format!("unknown category `{id}`"));
            }
            if !seen.insert(id.as_str()) {
                return bad(format!(
                    "category `{id}` listed twice across fc_order and nc_set"
                ));
            }
        }
        for c in matrix.categories() {
            if !seen.contains(c.id.as_str()) {
                return bad(format!(
                    "category `{}` is in neither fc_order nor nc_set",
                    c.id
                ));
            }
        }
        if let Some(edges) = &self.precedence_template {
            for (from, to) in edges {
                for id in [from, to] {
                    if !seen.contains(id.as_str()) {
                        return bad(format!(
                            "precedence_template references unknown category `{id}`"
                        ));
                    }
                }
            }
            search::template_network_check(&self.categories(), edges)?;
        }
        Ok(())
    }

    /// The request with `withdrawn` categories removed everywhere.
    pub(crate) fn without(&self, withdrawn: &BTreeSet<String>) -> PlanRequest {
        let keep = |ids: &[String]| {
            ids.iter()
                .filter(|c| !withdrawn.contains(*c))
                .cloned()
                .collect()
        };
        let mut next = self.clone();
        next.fc_order = keep(&self.fc_order);
        next.nc_set = keep(&self.nc_set);
        next.precedence_template = self.precedence_template.as_ref().map(|edges| {
            edges
                .iter()
                .filter(|(a, b)| !withdrawn.contains(a) && !withdrawn.contains(b))
                .cloned()
                .collect()
        });
        next
    }

    pub(crate) fn kind_of(&self, category_id: &str) -> CategoryKind {
        if self.fc_order.iter().any(|c| c == category_id) {
            CategoryKind::Fixed
        } else {
            CategoryKind::NonFixed
        }
    }
}

/// One service per category, under a specific category order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combination {
    pub category_order: Vec<String>,
    /// Category id to service id.
    pub choices: BTreeMap<String, String>,
}

impl Combination {
    /// Chosen service ids in category order.
    pub fn service_tuple(&self) -> Vec<&str> {
        self.category_order
            .iter()
            .map(|c| self.choices[c].as_str())
            .collect()
    }
}

/// A scheduled booking `[start, end)` for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub category_id: String,
    pub service_id: String,
    pub start: Minutes,
    pub end: Minutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePlan {
    pub combination: Combination,
    pub analysis: ScheduleAnalysis,
    /// Filled in by [`evaluate`].
    pub completion: Option<CompletionProbability>,
    /// In category order.
    pub slots: Vec<Slot>,
}

impl CandidatePlan {
    /// Completion probability, 0 until evaluated.
    pub fn probability(&self) -> f64 {
        self.completion.map_or(0.0, |c| c.probability)
    }

    pub fn duration(&self) -> Minutes {
        self.analysis.project_duration
    }

    /// Slots sorted by start time (category order breaks ties).
    pub fn slots_in_time_order(&self) -> Vec<&Slot> {
        let mut slots: Vec<&Slot> = self.slots.iter().collect();
        slots.sort_by(|a, b| a.start.total_cmp(&b.start));
        slots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDiagnostic {
    pub category_id: String,
    pub kind: CategoryKind,
    /// No offer survived filtering.
    pub empty: bool,
    /// Schedule checks that failed because this category's slot was unavailable.
    pub unavailable_slots: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationPrompt {
    pub round: usize,
    /// Categories the client may withdraw.
    pub withdrawable: Vec<String>,
    pub diagnostics: Vec<CategoryDiagnostic>,
    /// Schedule checks that exceeded the deadline.
    pub deadline_violations: usize,
    /// Shortest expected duration seen among rejected combinations.
    pub shortest_duration: Option<Minutes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NegotiationDecision {
    /// Categories to withdraw; empty refuses.
    #[serde(default)]
    pub withdraw: Vec<String>,
    /// Required to withdraw a fixed category.
    #[serde(default)]
    pub approve_fixed: bool,
}

impl NegotiationDecision {
    pub fn refuse() -> Self {
        Self::default()
    }

    pub fn withdraw(ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            withdraw: ids.into_iter().map(Into::into).collect(),
            approve_fixed: false,
        }
    }

    pub fn is_refusal(&self) -> bool {
        self.withdraw.is_empty()
    }
}

/// One category order examined during search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderAttempt {
    pub round: usize,
    pub order: Vec<String>,
    pub examined: usize,
    pub truncated: bool,
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub reason: String,
    pub categories: Vec<CategoryDiagnostic>,
    pub orders_tried: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanOutcome {
    Selected { plan: CandidatePlan },
    Tie { candidates: Vec<CandidatePlan> },
    NegotiationNeeded { prompt: NegotiationPrompt },
    Failure { report: FailureReport },
}

impl PlanOutcome {
    pub fn selected(&self) -> Option<&CandidatePlan> {
        match self {
            PlanOutcome::Selected { plan } => Some(plan),
            _ => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, PlanOutcome::Failure { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PlanOutcome::Selected { .. } => "selected",
            PlanOutcome::Tie { .. } => "tie",
            PlanOutcome::NegotiationNeeded { .. } => "negotiation_needed",
            PlanOutcome::Failure { .. } => "failure",
        }
    }
}
