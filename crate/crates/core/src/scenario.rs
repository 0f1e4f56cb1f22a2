//! JSON scenario documents: the registry contents plus a default request.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pert::{Minutes, ThreePointEstimate};
use crate::registry::{
    AvailabilityWindow, Category, CategoryKind, ConstraintSet, RegistryError, ServiceMatrix,
    ServiceOffer,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(serde_json::Error),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub categories: Vec<Category>,
    pub offers: Vec<ServiceOffer>,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub fc_order: Vec<String>,
    #[serde(default)]
    pub nc_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Minutes>,
    /// Extra edges over category slots; replaces the serial chain when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precedence_template: Option<Vec<(String, String)>>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|error| ScenarioError::Io {
            path: path.display().to_string(),
            error,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(ScenarioError::Parse)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids = BTreeSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            if !ids.insert(c.id.as_str()) {
                return Err(invalid(
                    format!("categories[{i}].id"),
                    format!("duplicate category `{}`", c.id),
                ));
            }
        }
        let mut offer_ids = BTreeSet::new();
        for (i, o) in self.offers.iter().enumerate() {
            if !ids.contains(o.category_id.as_str()) {
                return Err(invalid(
                    format!("offers[{i}].category_id"),
                    format!("unknown category `{}`", o.category_id),
                ));
            }
            if !offer_ids.insert(o.id.as_str()) {
                return Err(invalid(
                    format!("offers[{i}].id"),
                    format!("duplicate service `{}`", o.id),
                ));
            }
            o.validate()
                .map_err(|e| invalid(format!("offers[{i}]"), e.to_string()))?;
        }
        if self.constraints.party_size < 1 {
            return Err(invalid("constraints.party_size", "must be >= 1"));
        }
        if let Some(g) = self.deadline {
            if !(g.is_finite() && g > 0.0) {
                return Err(invalid(
                    "deadline",
                    format!("must be a positive number, got {g}"),
                ));
            }
        }
        for (field, list) in [("fc_order", &self.fc_order), ("nc_set", &self.nc_set)] {
            for id in list {
                if !ids.contains(id.as_str()) {
                    return Err(invalid(field, format!("unknown category `{id}`")));
                }
            }
        }
        if let Some(edges) = &self.precedence_template {
            for (from, to) in edges {
                for id in [from, to] {
                    if !ids.contains(id.as_str()) {
                        return Err(invalid(
                            "precedence_template",
                            format!("unknown category `{id}`"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<ServiceMatrix, RegistryError> {
        ServiceMatrix::with_offers(self.categories.clone(), self.offers.iter().cloned())
    }

    /// Fixed categories in scenario order, unless `fc_order` is given.
    pub fn fixed_order(&self) -> Vec<String> {
        if !self.fc_order.is_empty() || !self.nc_set.is_empty() {
            return self.fc_order.clone();
        }
        self.ids_of(CategoryKind::Fixed)
    }

    /// Non-fixed categories in scenario order, unless `nc_set` is given.
    pub fn non_fixed_set(&self) -> Vec<String> {
        if !self.fc_order.is_empty() || !self.nc_set.is_empty() {
            return self.nc_set.clone();
        }
        self.ids_of(CategoryKind::NonFixed)
    }

    fn ids_of(&self, kind: CategoryKind) -> Vec<String> {
        self.categories
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.id.clone())
            .collect()
    }

    /// The six-category tour from the "Web Safari" case study: flight, taxi
    /// and hotel in fixed order, then three freely ordered tourist spots, each
    /// with three providers of deterministic duration (O = M = P).
    pub fn web_safari() -> Self {
        const HORIZON: Minutes = 1440.0;
        let table: [(&str, &str, CategoryKind, [f64; 3]); 6] = [
            ("C1", "flight", CategoryKind::Fixed, [180.0, 210.0, 150.0]),
            ("C2", "taxi", CategoryKind::Fixed, [20.0, 30.0, 25.0]),
            ("C3", "hotel", CategoryKind::Fixed, [10.0, 12.0, 15.0]),
            (
                "C4",
                "tourist spot 1",
                CategoryKind::NonFixed,
                [90.0, 100.0, 85.0],
            ),
            (
                "C5",
                "tourist spot 2",
                CategoryKind::NonFixed,
                [30.0, 30.0, 25.0],
            ),
            (
                "C6",
                "tourist spot 3",
                CategoryKind::NonFixed,
                [120.0, 135.0, 125.0],
            ),
        ];
        let categories = table
            .iter()
            .map(|(id, name, kind, _)| Category {
                id: id.to_string(),
                name: name.to_string(),
                kind: *kind,
            })
            .collect();
        let offers = table
            .iter()
            .flat_map(|(cat, name, _, minutes)| {
                minutes.iter().enumerate().map(move |(k, &m)| ServiceOffer {
                    id: format!("{cat}-WS{}", k + 1),
                    category_id: cat.to_string(),
                    name: format!("{name} provider {}", k + 1),
                    estimate: ThreePointEstimate::fixed(m).expect("table durations are valid"),
                    cost: 50.0 * (k + 1) as f64,
                    capacity: 10,
                    windows: vec![AvailabilityWindow {
                        start: 0.0,
                        end: HORIZON,
                    }],
                    attributes: Default::default(),
                })
            })
            .collect();
        Scenario {
            categories,
            offers,
            constraints: ConstraintSet::default(),
            fc_order: vec!["C1".into(), "C2".into(), "C3".into()],
            nc_set: vec!["C4".into(), "C5".into(), "C6".into()],
            deadline: Some(450.0),
            precedence_template: None,
        }
    }
}
