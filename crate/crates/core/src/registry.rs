//! The service matrix: categories (columns) of offers (rows), each offer
//! carrying a three-point duration estimate, QoS attributes and the time
//! windows during which it can be booked.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pert::{Minutes, PertError, ThreePointEstimate};

/// Slack allowed when comparing slot and window boundaries.
pub const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),
    #[error("service `{0}` is already registered under another category")]
    ServiceCategoryClash(String),
    #[error("service `{id}`: {reason}")]
    InvalidOffer { id: String, reason: String },
    #[error("invalid window [{start}, {end}): {reason}")]
    InvalidWindow {
        start: f64,
        end: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Fixed,
    NonFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    pub kind: CategoryKind,
}

/// Half-open interval `[start, end)` in minutes from the plan epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityWindow {
    pub start: Minutes,
    pub end: Minutes,
}

impl AvailabilityWindow {
    pub fn new(start: Minutes, end: Minutes) -> Result<Self, RegistryError> {
        let w = Self { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let err = |reason| {
            Err(RegistryError::InvalidWindow {
                start: self.start,
                end: self.end,
                reason,
            })
        };
        if !self.start.is_finite() || !self.end.is_finite() {
            return err("bounds must be finite");
        }
        if self.start < 0.0 {
            return err("start must be >= 0");
        }
        if self.start >= self.end {
            return err("start must be < end");
        }
        Ok(())
    }

    /// Whether the slot `[start, end)` lies within this window.
    pub fn contains_slot(&self, start: Minutes, end: Minutes) -> bool {
        self.start <= start + TIME_EPSILON && end <= self.end + TIME_EPSILON
    }

    pub fn overlaps(&self, other: &AvailabilityWindow) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Sorts, merges overlapping or touching windows and drops empty ones.
pub fn normalize_windows(windows: &[AvailabilityWindow]) -> Vec<AvailabilityWindow> {
    let mut sorted: Vec<_> = windows
        .iter()
        .copied()
        .filter(|w| w.start < w.end)
        .collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut merged: Vec<AvailabilityWindow> = Vec::with_capacity(sorted.len());
    for w in sorted {
        match merged.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => merged.push(w),
        }
    }
    merged
}

/// `windows \ removed`, renormalized.
pub fn subtract_window(
    windows: &[AvailabilityWindow],
    removed: AvailabilityWindow,
) -> Vec<AvailabilityWindow> {
    let mut out = Vec::with_capacity(windows.len() + 1);
    for w in normalize_windows(windows) {
        if !w.overlaps(&removed) {
            out.push(w);
            continue;
        }
        if w.start < removed.start {
            out.push(AvailabilityWindow {
                start: w.start,
                end: removed.start,
            });
        }
        if removed.end < w.end {
            out.push(AvailabilityWindow {
                start: removed.end,
                end: w.end,
            });
        }
    }
    out
}

/// `windows ∪ {added}`, renormalized.
pub fn union_window(
    windows: &[AvailabilityWindow],
    added: AvailabilityWindow,
) -> Vec<AvailabilityWindow> {
    let mut all = windows.to_vec();
    all.push(added);
    normalize_windows(&all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceOffer {
    pub id: String,
    pub category_id: String,
    pub name: String,
    pub estimate: ThreePointEstimate,
    #[serde(default)]
    pub cost: f64,
    #[serde(default = "one")]
    pub capacity: u32,
    /// Empty means never available.
    #[serde(default)]
    pub windows: Vec<AvailabilityWindow>,
    /// Free-form QoS attributes, filtered by caller-supplied predicates.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

fn one() -> u32 {
    1
}

impl ServiceOffer {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: String| RegistryError::InvalidOffer {
            id: self.id.clone(),
            reason,
        };
        self.estimate
            .validate()
            .map_err(|e: PertError| invalid(format!("estimate: {e}")))?;
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(invalid(format!(
                "cost must be a non-negative number, got {}",
                self.cost
            )));
        }
        if self.capacity < 1 {
            return Err(invalid("capacity must be >= 1".into()));
        }
        for w in &self.windows {
            w.validate().map_err(|e| invalid(format!("windows: {e}")))?;
        }
        for pair in self.windows.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(invalid(
                    "windows must be sorted and pairwise disjoint".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn fits_slot(&self, start: Minutes, end: Minutes) -> bool {
        self.windows.iter().any(|w| w.contains_slot(start, end))
    }
}

/// User-side QoS constraints applied when filtering the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub max_cost: Option<f64>,
    #[serde(default = "one")]
    pub party_size: u32,
    #[serde(default)]
    pub plan_epoch: Minutes,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            max_cost: None,
            party_size: 1,
            plan_epoch: 0.0,
        }
    }
}

impl ConstraintSet {
    pub fn admits(&self, offer: &ServiceOffer) -> bool {
        self.max_cost.is_none_or(|max| offer.cost <= max) && offer.capacity >= self.party_size
    }
}

/// Categories in column order with the offers registered under each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServiceMatrix {
    categories: Vec<Category>,
    columns: Vec<Vec<ServiceOffer>>,
}

/// Result of filtering: the submatrix W and the categories left without offers.
#[derive(Debug, Clone, PartialEq)]
pub struct Availability {
    pub matrix: ServiceMatrix,
    pub empty_categories: Vec<String>,
}

impl ServiceMatrix {
    pub fn new(categories: Vec<Category>) -> Result<Self, RegistryError> {
        let mut seen = BTreeSet::new();
        for c in &categories {
            if !seen.insert(c.id.as_str()) {
                return Err(RegistryError::DuplicateCategory(c.id.clone()));
            }
        }
        let columns = vec![Vec::new(); categories.len()];
        Ok(Self {
            categories,
            columns,
        })
    }

    pub fn with_offers(
        categories: Vec<Category>,
        offers: impl IntoIterator<Item = ServiceOffer>,
    ) -> Result<Self, RegistryError> {
        let mut m = Self::new(categories)?;
        for offer in offers {
            m.insert(offer)?;
        }
        Ok(m)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category(&self, id: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    fn column_index(&self, category_id: &str) -> Result<usize, RegistryError> {
        self.categories
            .iter()
            .position(|c| c.id == category_id)
            .ok_or_else(|| RegistryError::UnknownCategory(category_id.to_string()))
    }

    /// Offers of one category in registration order.
    pub fn column(&self, category_id: &str) -> Result<&[ServiceOffer], RegistryError> {
        Ok(&self.columns[self.column_index(category_id)?])
    }

    pub fn offers(&self) -> impl Iterator<Item = &ServiceOffer> {
        self.columns.iter().flatten()
    }

    pub fn offer(&self, service_id: &str) -> Option<&ServiceOffer> {
        self.offers().find(|o| o.id == service_id)
    }

    fn insert(&mut self, offer: ServiceOffer) -> Result<(), RegistryError> {
        offer.validate()?;
        let col = self.column_index(&offer.category_id)?;
        if let Some(existing) = self.offer(&offer.id) {
            if existing.category_id != offer.category_id {
                return Err(RegistryError::ServiceCategoryClash(offer.id));
            }
        }
        let column = &mut self.columns[col];
        match column.iter_mut().find(|o| o.id == offer.id) {
            Some(slot) => *slot = offer,
            None => column.push(offer),
        }
        Ok(())
    }

    /// Appends `offer` to its category, replacing any offer with the same id.
    pub fn register(&self, offer: ServiceOffer) -> Result<ServiceMatrix, RegistryError> {
        let mut next = self.clone();
        next.insert(offer)?;
        Ok(next)
    }

    fn edit_windows(
        &self,
        service_id: &str,
        edit: impl FnOnce(&[AvailabilityWindow]) -> Vec<AvailabilityWindow>,
    ) -> Result<ServiceMatrix, RegistryError> {
        let mut next = self.clone();
        let offer = next
            .columns
            .iter_mut()
            .flatten()
            .find(|o| o.id == service_id)
            .ok_or_else(|| RegistryError::UnknownService(service_id.to_string()))?;
        offer.windows = edit(&offer.windows);
        Ok(next)
    }

    /// Removes `window` from the service's availability.
    pub fn block(
        &self,
        service_id: &str,
        window: AvailabilityWindow,
    ) -> Result<ServiceMatrix, RegistryError> {
        window.validate()?;
        self.edit_windows(service_id, |ws| subtract_window(ws, window))
    }

    /// Adds `window` back to the service's availability.
    pub fn unblock(
        &self,
        service_id: &str,
        window: AvailabilityWindow,
    ) -> Result<ServiceMatrix, RegistryError> {
        window.validate()?;
        self.edit_windows(service_id, |ws| union_window(ws, window))
    }

    /// Blocks `window` on every offer of a category.
    pub fn block_category(
        &self,
        category_id: &str,
        window: AvailabilityWindow,
    ) -> Result<ServiceMatrix, RegistryError> {
        let ids: Vec<String> = self
            .column(category_id)?
            .iter()
            .map(|o| o.id.clone())
            .collect();
        ids.iter()
            .try_fold(self.clone(), |m, id| m.block(id, window))
    }

    /// Keeps only the listed categories, in the listed order.
    pub fn restrict_to(&self, category_ids: &[String]) -> Result<ServiceMatrix, RegistryError> {
        let mut categories = Vec::with_capacity(category_ids.len());
        let mut columns = Vec::with_capacity(category_ids.len());
        for id in category_ids {
            let idx = self.column_index(id)?;
            categories.push(self.categories[idx].clone());
            columns.push(self.columns[idx].clone());
        }
        Ok(ServiceMatrix {
            categories,
            columns,
        })
    }

    /// The submatrix W of offers that satisfy `constraints` and have at least
    /// one availability window. Slot-level timing is checked by the planner.
    pub fn available_submatrix(&self, constraints: &ConstraintSet) -> Availability {
        self.available_submatrix_with(constraints, |_| true)
    }

    /// As [`available_submatrix`](Self::available_submatrix) with an extra
    /// predicate over offers (e.g. on their `attributes`).
    pub fn available_submatrix_with(
        &self,
        constraints: &ConstraintSet,
        extra: impl Fn(&ServiceOffer) -> bool,
    ) -> Availability {
        let columns: Vec<Vec<ServiceOffer>> = self
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .filter(|o| !o.windows.is_empty() && constraints.admits(o) && extra(o))
                    .cloned()
                    .collect()
            })
            .collect();
        let empty_categories = self
            .categories
            .iter()
            .zip(&columns)
            .filter(|(_, col)| col.is_empty())
            .map(|(c, _)| c.id.clone())
            .collect();
        Availability {
            matrix: ServiceMatrix {
                categories: self.categories.clone(),
                columns,
            },
            empty_categories,
        }
    }
}
