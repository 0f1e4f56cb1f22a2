//! Randomized comparison of search modes under random service outages.
//!
//! Each trial independently blocks categories (all offers of a blocked
//! category lose a window around that category's slot in the unreordered
//! plan), then plans once per search mode with negotiation declined.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pert::{self, Activity, Minutes, PertNetwork};
use crate::planner::{
    self, AutoDecline, PlanError, PlanOutcome, PlanRequest, SearchMode, PROBABILITY_TIE_TOLERANCE,
};
use crate::registry::{AvailabilityWindow, CategoryKind, RegistryError, ServiceMatrix};
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "trial,mode,success,orders_tried,wall_us,probability";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Which categories may be blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockScope {
    #[default]
    NonFixed,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum WindowModel {
    /// Block `[center - half_width, center + half_width]` around the slot
    /// midpoint, shifted by a uniform draw from `[-jitter, jitter]`.
    Centered {
        half_width: Minutes,
        jitter: Minutes,
    },
    /// Block everything the registry ever offers.
    FullHorizon,
}

impl Default for WindowModel {
    fn default() -> Self {
        WindowModel::Centered {
            half_width: 60.0,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Overrides the scenario deadline.
    pub deadline: Option<Minutes>,
    pub trials: usize,
    pub block_probability: f64,
    pub scope: BlockScope,
    pub window_model: WindowModel,
    pub seed: u64,
    pub modes: Vec<SearchMode>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, trials: usize, block_probability: f64, seed: u64) -> Self {
        Self {
            scenario,
            deadline: None,
            trials,
            block_probability,
            scope: BlockScope::default(),
            window_model: WindowModel::default(),
            seed,
            modes: SearchMode::ALL.to_vec(),
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.trials < 1 {
            return bad("trials must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.block_probability) {
            return bad("block probability must lie in [0, 1]");
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required");
        }
        if let WindowModel::Centered { half_width, jitter } = self.window_model {
            if !(half_width.is_finite() && half_width > 0.0)
                || !(jitter.is_finite() && jitter >= 0.0)
            {
                return bad("half_width must be positive and jitter non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub mode: SearchMode,
    pub success: bool,
    pub orders_tried: usize,
    pub wall_us: u64,
    pub probability: Option<f64>,
    pub reason: Option<String>,
    pub blocked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: SearchMode,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_wall_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Ordered by trial, then by configured mode order.
    pub results: Vec<TrialResult>,
    pub summary: Vec<ModeSummary>,
}

impl ExperimentResult {
    pub fn summary_for(&self, mode: SearchMode) -> Option<&ModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }

    /// The result table as CSV. Without timing, `wall_us` is written as 0 so
    /// the output is reproducible byte for byte.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.results {
            let probability = r.probability.map(|p| p.to_string()).unwrap_or_default();
            let wall = if include_timing { r.wall_us } else { 0 };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.trial,
                r.mode.as_str(),
                r.success,
                r.orders_tried,
                wall,
                probability
            )
            .expect("writing to a String");
        }
        out
    }

    /// Trials where the no-backtracking baseline succeeded but some other
    /// mode failed or found a less probable plan.
    pub fn dominance_violations(&self) -> Vec<usize> {
        let mut bad = Vec::new();
        for trial in self
            .results
            .iter()
            .map(|r| r.trial)
            .collect::<std::collections::BTreeSet<_>>()
        {
            let rows: Vec<&TrialResult> =
                self.results.iter().filter(|r| r.trial == trial).collect();
            let Some(base) = rows
                .iter()
                .find(|r| r.mode == SearchMode::NoBacktracking && r.success)
            else {
                continue;
            };
            let base_p = base.probability.unwrap_or(0.0);
            let dominated = rows
                .iter()
                .filter(|r| r.mode != SearchMode::NoBacktracking)
                .all(|r| {
                    r.success && r.probability.unwrap_or(0.0) >= base_p - PROBABILITY_TIE_TOLERANCE
                });
            if !dominated {
                bad.push(trial);
            }
        }
        bad
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        for s in &self.summary {
            writeln!(
                out,
                "{:<17} success {:>4}/{:<4} ({:>6.2}%)  mean wall {:>10.1} us",
                s.mode.as_str(),
                s.successes,
                s.trials,
                100.0 * s.success_rate,
                s.mean_wall_us
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Slot midpoints (category id, midpoint) of the unreordered plan built from
/// each category's fastest offer.
fn identity_slot_centers(
    matrix: &ServiceMatrix,
    request: &PlanRequest,
) -> Result<Vec<(String, Minutes)>, BenchError> {
    let order = request.categories();
    let mut activities = Vec::with_capacity(order.len());
    for cat in &order {
        let fastest = matrix
            .column(cat)?
            .iter()
            .min_by(|a, b| {
                a.estimate
                    .mean()
                    .total_cmp(&b.estimate.mean())
                    .then(a.id.cmp(&b.id))
            })
            .ok_or_else(|| BenchError::Config(format!("category `{cat}` has no offers")))?;
        activities.push(
            Activity::new(cat.clone(), fastest.id.clone(), fastest.estimate)
                .map_err(PlanError::from)?,
        );
    }
    let network = match &request.precedence_template {
        Some(edges) => pert::build_network(activities, edges.clone()),
        None => PertNetwork::chain(activities),
    }
    .map_err(PlanError::from)?;
    let analysis = pert::analyze(&network);
    Ok(analysis
        .activities
        .iter()
        .map(|a| {
            (
                a.id.clone(),
                request.constraints.plan_epoch + (a.earliest_start + a.earliest_finish) / 2.0,
            )
        })
        .collect())
}

fn horizon(matrix: &ServiceMatrix) -> Minutes {
    matrix
        .offers()
        .flat_map(|o| o.windows.iter().map(|w| w.end))
        .fold(0.0, f64::max)
}

/// Draws this trial's outages and returns the blocked matrix and categories.
fn draw_outages(
    config: &ExperimentConfig,
    base: &ServiceMatrix,
    request: &PlanRequest,
    centers: &[(String, Minutes)],
    trial: usize,
) -> Result<(ServiceMatrix, Vec<String>), BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let mut matrix = base.clone();
    let mut blocked = Vec::new();
    for (cat, center) in centers {
        if config.scope == BlockScope::NonFixed && request.kind_of(cat) == CategoryKind::Fixed {
            continue;
        }
        let hit = rng.random_bool(config.block_probability);
        let window = match config.window_model {
            WindowModel::Centered { half_width, jitter } => {
                let shift = if jitter > 0.0 {
                    rng.random_range(-jitter..=jitter)
                } else {
                    0.0
                };
                let start = (center - half_width + shift).max(0.0);
                AvailabilityWindow {
                    start,
                    end: (center + half_width + shift).max(start + f64::EPSILON),
                }
            }
            WindowModel::FullHorizon => AvailabilityWindow {
                start: 0.0,
                end: horizon(base).max(1.0),
            },
        };
        if hit {
            matrix = matrix.block_category(cat, window)?;
            blocked.push(cat.clone());
        }
    }
    Ok((matrix, blocked))
}

fn run_trial(
    config: &ExperimentConfig,
    base: &ServiceMatrix,
    request: &PlanRequest,
    centers: &[(String, Minutes)],
    trial: usize,
) -> Result<Vec<TrialResult>, BenchError> {
    let (matrix, blocked) = draw_outages(config, base, request, centers, trial)?;
    config
        .modes
        .iter()
        .map(|&mode| {
            let mut req = request.clone();
            req.search_mode = mode;
            let started = Instant::now();
            let report = planner::plan(req, &matrix, &mut AutoDecline)?;
            let wall_us = started.elapsed().as_micros() as u64;
            let (success, probability, reason) = match &report.outcome {
                PlanOutcome::Selected { plan } => (true, Some(plan.probability()), None),
                PlanOutcome::Failure { report } => (false, None, Some(report.reason.clone())),
                other => (
                    false,
                    None,
                    Some(format!("unexpected outcome `{}`", other.kind())),
                ),
            };
            Ok(TrialResult {
                trial,
                mode,
                success,
                orders_tried: report.orders_tried.iter().filter(|a| a.round == 1).count(),
                wall_us,
                probability,
                reason,
                blocked: blocked.clone(),
            })
        })
        .collect()
}

/// Runs every trial (in parallel, one RNG stream per trial) and summarizes
/// success rate and mean planning time per mode.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, BenchError> {
    config.validate()?;
    let base = config.scenario.matrix()?;
    let request = PlanRequest::from_scenario(&config.scenario, config.deadline)?;
    request.validate(&base)?;
    let centers = identity_slot_centers(&base, &request)?;

    let per_trial: Vec<Vec<TrialResult>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &base, &request, &centers, t))
        .collect::<Result<_, _>>()?;
    let results: Vec<TrialResult> = per_trial.into_iter().flatten().collect();

    let summary = config
        .modes
        .iter()
        .map(|&mode| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.mode == mode).collect();
            let successes = rows.iter().filter(|r| r.success).count();
            let total_us: f64 = rows.iter().map(|r| r.wall_us as f64).sum();
            ModeSummary {
                mode,
                trials: rows.len(),
                successes,
                success_rate: successes as f64 / rows.len() as f64,
                mean_wall_us: total_us / rows.len() as f64,
            }
        })
        .collect();
    Ok(ExperimentResult { results, summary })
}
