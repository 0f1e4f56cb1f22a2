use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CandidatePlan, Combination, PlanError, PlanOutcome, PlanRequest, Slot, TieBreak};
use crate::pert::{self, Activity, Minutes, PertNetwork, ThreePointEstimate};
use crate::registry::{ServiceMatrix, ServiceOffer};

/// Probabilities closer than this are considered equal during selection.
pub const PROBABILITY_TIE_TOLERANCE: f64 = 1e-9;

/// A category with no offers left in the filtered matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyCategory(pub String);

impl fmt::Display for EmptyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "category `{}` has no available service", self.0)
    }
}

impl std::error::Error for EmptyCategory {}

/// Cartesian product of the offers of each category in `order`, in
/// lexicographic service-id order (last category varies fastest), capped.
#[derive(Debug, Clone)]
pub struct Combinations<'a> {
    order: Vec<String>,
    columns: Vec<Vec<&'a ServiceOffer>>,
    cursor: Vec<usize>,
    emitted: usize,
    cap: usize,
    total: u128,
    done: bool,
}

impl<'a> Combinations<'a> {
    /// Size of the full product, before the cap.
    pub fn total(&self) -> u128 {
        self.total
    }

    /// Whether the cap cut the product short.
    pub fn is_truncated(&self) -> bool {
        self.total > self.cap as u128
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    /// Advances and returns the chosen offers, one per category in order.
    pub(crate) fn next_offers(&mut self) -> Option<Vec<&'a ServiceOffer>> {
        if self.done || self.emitted >= self.cap {
            return None;
        }
        let current = self
            .cursor
            .iter()
            .zip(&self.columns)
            .map(|(&i, col)| col[i])
            .collect();
        self.emitted += 1;
        // Odometer increment, last position fastest.
        let mut pos = self.cursor.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.cursor[pos] += 1;
            if self.cursor[pos] < self.columns[pos].len() {
                break;
            }
            self.cursor[pos] = 0;
        }
        Some(current)
    }

    pub(crate) fn combination_of(&self, offers: &[&ServiceOffer]) -> Combination {
        Combination {
            category_order: self.order.clone(),
            choices: self
                .order
                .iter()
                .cloned()
                .zip(offers.iter().map(|o| o.id.clone()))
                .collect(),
        }
    }
}

impl Iterator for Combinations<'_> {
    type Item = Combination;

    fn next(&mut self) -> Option<Combination> {
        let offers = self.next_offers()?;
        Some(self.combination_of(&offers))
    }
}

/// Enumerates one-offer-per-category combinations of `w` under `order`.
pub fn enumerate_combinations<'a>(
    w: &'a ServiceMatrix,
    order: &[String],
    cap: usize,
) -> Result<Combinations<'a>, EmptyCategory> {
    let mut columns = Vec::with_capacity(order.len());
    for category in order {
        let mut col: Vec<&ServiceOffer> = w
            .column(category)
            .map(|c| c.iter().collect())
            .unwrap_or_default();
        if col.is_empty() {
            return Err(EmptyCategory(category.clone()));
        }
        col.sort_by(|a, b| a.id.cmp(&b.id));
        columns.push(col);
    }
    let total = columns
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    Ok(Combinations {
        order: order.to_vec(),
        cursor: vec![0; columns.len()],
        columns,
        emitted: 0,
        cap,
        total,
        done: false,
    })
}

/// Why a combination cannot be scheduled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    Deadline {
        duration: Minutes,
        deadline: Minutes,
    },
    Unavailable {
        category_id: String,
        service_id: String,
        start: Minutes,
        end: Minutes,
    },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::Deadline { duration, deadline } => {
                write!(
                    f,
                    "expected duration {duration} exceeds deadline {deadline}"
                )
            }
            Infeasibility::Unavailable {
                category_id,
                service_id,
                start,
                end,
            } => {
                write!(
                    f,
                    "{category_id}: {service_id} unavailable for slot [{start}, {end})"
                )
            }
        }
    }
}

fn network_for(
    order: &[String],
    offers: &[&ServiceOffer],
    template: Option<&[(String, String)]>,
) -> PertNetwork {
    let activities: Vec<Activity> = order
        .iter()
        .zip(offers)
        .map(|(cat, offer)| {
            Activity::new(cat.clone(), offer.id.clone(), offer.estimate)
                .expect("offers are validated")
        })
        .collect();
    match template {
        Some(edges) => pert::build_network(activities, edges.to_vec()),
        None => PertNetwork::chain(activities),
    }
    .expect("precedence template is validated against the request")
}

/// Rejects precedence templates that do not form a DAG over `categories`.
pub(crate) fn template_network_check(
    categories: &[String],
    edges: &[(String, String)],
) -> Result<(), PlanError> {
    let zero = ThreePointEstimate::fixed(0.0).expect("zero is a valid duration");
    let activities = categories
        .iter()
        .map(|c| Activity::new(c.clone(), c.clone(), zero))
        .collect::<Result<_, _>>()?;
    pert::build_network(activities, edges.to_vec())
        .map(|_| ())
        .map_err(|e| PlanError::Validation(format!("precedence_template: {e}")))
}

pub(crate) fn schedule_offers(
    order: &[String],
    offers: &[&ServiceOffer],
    request: &PlanRequest,
) -> Result<(pert::ScheduleAnalysis, Vec<Slot>), Infeasibility> {
    if request.precedence_template.is_none() {
        chain_precheck(order, offers, request)?;
    }
    let network = network_for(order, offers, request.precedence_template.as_deref());
    let analysis = pert::analyze(&network);
    if analysis.project_duration > request.deadline {
        return Err(Infeasibility::Deadline {
            duration: analysis.project_duration,
            deadline: request.deadline,
        });
    }
    let epoch = request.constraints.plan_epoch;
    let mut slots = Vec::with_capacity(order.len());
    for ((cat, offer), sched) in order.iter().zip(offers).zip(&analysis.activities) {
        let (start, end) = (epoch + sched.earliest_start, epoch + sched.earliest_finish);
        if !offer.fits_slot(start, end) {
            return Err(Infeasibility::Unavailable {
                category_id: cat.clone(),
                service_id: offer.id.clone(),
                start,
                end,
            });
        }
        slots.push(Slot {
            category_id: cat.clone(),
            service_id: offer.id.clone(),
            start,
            end,
        });
    }
    Ok((analysis, slots))
}

/// Serial-chain screen using prefix sums, so that rejected combinations never
/// build a network. Same additions in the same order as the forward pass.
fn chain_precheck(
    order: &[String],
    offers: &[&ServiceOffer],
    request: &PlanRequest,
) -> Result<(), Infeasibility> {
    let times: Vec<Minutes> = offers.iter().map(|o| o.estimate.mean()).collect();
    let duration = times.iter().fold(0.0, |acc, t| acc + t);
    if duration > request.deadline {
        return Err(Infeasibility::Deadline {
            duration,
            deadline: request.deadline,
        });
    }
    let epoch = request.constraints.plan_epoch;
    let mut es = 0.0;
    for ((cat, offer), t) in order.iter().zip(offers).zip(times) {
        let (start, end) = (epoch + es, epoch + (es + t));
        if !offer.fits_slot(start, end) {
            return Err(Infeasibility::Unavailable {
                category_id: cat.clone(),
                service_id: offer.id.clone(),
                start,
                end,
            });
        }
        es += t;
    }
    Ok(())
}

/// Schedules `combination` at earliest times and checks the deadline and
/// each slot against its service's availability windows.
pub fn schedule_and_check(
    combination: &Combination,
    w: &ServiceMatrix,
    request: &PlanRequest,
) -> Result<Result<CandidatePlan, Infeasibility>, PlanError> {
    let mut offers = Vec::with_capacity(combination.category_order.len());
    for category in &combination.category_order {
        let service = combination.choices.get(category).ok_or_else(|| {
            PlanError::Validation(format!("combination has no choice for `{category}`"))
        })?;
        let offer = w
            .offer(service)
            .filter(|o| &o.category_id == category)
            .ok_or_else(|| {
                PlanError::Validation(format!("`{service}` is not an offer of `{category}` in W"))
            })?;
        offers.push(offer);
    }
    if combination.choices.len() != offers.len() {
        return Err(PlanError::Validation(
            "combination has choices outside its category order".into(),
        ));
    }
    Ok(
        schedule_offers(&combination.category_order, &offers, request).map(|(analysis, slots)| {
            CandidatePlan {
                combination: combination.clone(),
                analysis,
                completion: None,
                slots,
            }
        }),
    )
}

/// Attaches the completion probability for deadline `deadline`.
pub fn evaluate(mut plan: CandidatePlan, deadline: Minutes) -> Result<CandidatePlan, PlanError> {
    plan.completion = Some(pert::completion_probability(&plan.analysis, deadline)?);
    Ok(plan)
}

fn tuple_order(a: &CandidatePlan, b: &CandidatePlan) -> Ordering {
    a.combination
        .service_tuple()
        .cmp(&b.combination.service_tuple())
        .then_with(|| {
            a.combination
                .category_order
                .cmp(&b.combination.category_order)
        })
}

/// Highest probability wins; then shortest duration; remaining ties go to
/// the caller when `tie_break` is external, else the smallest service-id tuple.
pub fn select(
    candidates: Vec<CandidatePlan>,
    tie_break: TieBreak,
) -> Result<PlanOutcome, PlanError> {
    let best = candidates
        .iter()
        .map(CandidatePlan::probability)
        .max_by(f64::total_cmp)
        .ok_or(PlanError::NoCandidates)?;
    let top: Vec<CandidatePlan> = candidates
        .into_iter()
        .filter(|c| c.probability() >= best - PROBABILITY_TIE_TOLERANCE)
        .collect();
    let shortest = top
        .iter()
        .map(CandidatePlan::duration)
        .fold(f64::INFINITY, f64::min);
    let tol = pert::float_tolerance(shortest);
    let mut tied: Vec<CandidatePlan> = top
        .into_iter()
        .filter(|c| c.duration() <= shortest + tol)
        .collect();
    tied.sort_by(tuple_order);

    if tied.len() > 1 && tie_break == TieBreak::External {
        return Ok(PlanOutcome::Tie { candidates: tied });
    }
    let plan = tied
        .into_iter()
        .next()
        .expect("at least the best candidate survives");
    Ok(PlanOutcome::Selected { plan })
}
