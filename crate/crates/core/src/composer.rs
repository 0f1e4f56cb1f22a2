//! Sequential execution of a selected plan against per-service endpoints,
//! with rollback of earlier bookings when one invocation fails.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pert::Minutes;
use crate::planner::{CandidatePlan, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookingStatus {
    Confirmed,
    RolledBack,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingRecord {
    pub service_id: String,
    pub category_id: String,
    pub start: Minutes,
    pub end: Minutes,
    pub status: BookingStatus,
    /// Confirmation code, kept after rollback for reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmation: Option<String>,
}

/// Confirmed bookings in slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub records: Vec<BookingRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposeError {
    #[error("plan has no slots to book")]
    EmptyPlan,
    #[error("booking {service_id} failed: {reason}")]
    Invocation {
        service_id: String,
        reason: String,
        /// Attempted bookings: earlier ones rolled back, the last one failed.
        records: Vec<BookingRecord>,
    },
}

/// An endpoint able to book and cancel one service slot.
pub trait ServiceInvoker {
    /// Returns a confirmation code or a failure reason.
    fn book(&mut self, slot: &Slot) -> Result<String, String>;
    fn cancel(&mut self, slot: &Slot, confirmation: &str);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invocation {
    Book(String),
    Cancel(String),
}

/// In-process stand-in for remote services; fails for configured ids.
#[derive(Debug, Clone, Default)]
pub struct MockInvoker {
    failing: BTreeSet<String>,
    log: Vec<Invocation>,
    issued: usize,
}

impl MockInvoker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing(ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            failing: ids.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn log(&self) -> &[Invocation] {
        &self.log
    }
}

impl ServiceInvoker for MockInvoker {
    fn book(&mut self, slot: &Slot) -> Result<String, String> {
        self.log.push(Invocation::Book(slot.service_id.clone()));
        if self.failing.contains(&slot.service_id) {
            return Err("service rejected the reservation".into());
        }
        self.issued += 1;
        Ok(format!("BK{:04}-{}", self.issued, slot.service_id))
    }

    fn cancel(&mut self, slot: &Slot, _confirmation: &str) {
        self.log.push(Invocation::Cancel(slot.service_id.clone()));
    }
}

/// Books every slot once, in time order. On the first failure all earlier
/// bookings are cancelled and the partial ledger is returned in the error.
pub fn compose(
    plan: &CandidatePlan,
    invoker: &mut dyn ServiceInvoker,
) -> Result<Itinerary, ComposeError> {
    let slots = plan.slots_in_time_order();
    if slots.is_empty() {
        return Err(ComposeError::EmptyPlan);
    }
    let mut records: Vec<BookingRecord> = Vec::with_capacity(slots.len());
    for (i, slot) in slots.iter().enumerate() {
        match invoker.book(slot) {
            Ok(code) => records.push(record(slot, BookingStatus::Confirmed, Some(code))),
            Err(reason) => {
                for (done, rec) in slots[..i].iter().zip(records.iter_mut()).rev() {
                    invoker.cancel(done, rec.confirmation.as_deref().unwrap_or_default());
                    rec.status = BookingStatus::RolledBack;
                }
                records.push(record(slot, BookingStatus::Failed, None));
                return Err(ComposeError::Invocation {
                    service_id: slot.service_id.clone(),
                    reason,
                    records,
                });
            }
        }
    }
    Ok(Itinerary { records })
}

fn record(slot: &Slot, status: BookingStatus, confirmation: Option<String>) -> BookingRecord {
    BookingRecord {
        service_id: slot.service_id.clone(),
        category_id: slot.category_id.clone(),
        start: slot.start,
        end: slot.end,
        status,
        confirmation,
    }
}
