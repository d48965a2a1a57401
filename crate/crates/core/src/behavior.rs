//! Baby-behavior taxonomy: the closed label set, its four categories and the
//! policy class each label feeds into.
//!
//! The catalog ships as CSV (`label,category,policy_class,source`) and is
//! validated at load: exactly [`CATALOG_SIZE`] unique labels, and the nine
//! decision-tree labels in their fixed classes. Rows marked `figure` are the
//! labels the decision tree names; `extension` rows fill out the categories.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CATALOG_SIZE: usize = 23;

pub const DEFAULT_CATALOG_CSV: &str = include_str!("../data/behaviors.csv");

/// Labels the decision tree routes to its distress branch.
pub const FIGURE_DISTRESS: [&str; 3] = ["Vegetative", "Crying", "Fussing"];
/// Labels the decision tree routes to its engaged branch.
pub const FIGURE_ENGAGED: [&str; 6] = ["Attention", "Signs", "Waving", "Babbling", "Reaching", "Pointing"];

/// Label that triggers the social-referencing response.
pub const GAZE_TO_PARENT: &str = "GazeToParent";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BehaviorError {
    #[error("unknown baby behavior label `{0}`")]
    UnknownLabel(String),
    #[error("invalid behavior catalog: {0}")]
    InvalidCatalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorCategory {
    Vocalization,
    SocialCommunicativeGesture,
    SocialRoutine,
    SocialManualAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyClass {
    Distress,
    Engaged,
    Neutral,
}

impl fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Figure,
    Extension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub label: String,
    pub category: BehaviorCategory,
    pub policy_class: PolicyClass,
    pub source: LabelSource,
}

/// Where a behavior event came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Scripted,
    Operator,
}

/// Unvalidated observation: a timestamp and a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawBehavior {
    pub t: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BabyBehaviorEvent {
    pub t: u64,
    pub label: String,
    pub category: BehaviorCategory,
    pub policy_class: PolicyClass,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorCatalog {
    entries: Vec<CatalogEntry>,
    index: BTreeMap<String, usize>,
}

impl BehaviorCatalog {
    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Self, BehaviorError> {
        let invalid = |m: String| BehaviorError::InvalidCatalog(m);
        if entries.len() != CATALOG_SIZE {
            return Err(invalid(format!("expected {CATALOG_SIZE} labels, found {}", entries.len())));
        }
        let mut index = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.label.clone(), i).is_some() {
                return Err(invalid(format!("duplicate label `{}`", e.label)));
            }
        }
        let required = FIGURE_DISTRESS
            .iter()
            .map(|l| (l, PolicyClass::Distress))
            .chain(FIGURE_ENGAGED.iter().map(|l| (l, PolicyClass::Engaged)));
        for (label, class) in required {
            match index.get(*label).map(|&i| &entries[i]) {
                Some(e) if e.policy_class == class => {}
                Some(e) => {
                    return Err(invalid(format!("`{label}` must be {class}, found {}", e.policy_class)));
                }
                None => return Err(invalid(format!("required label `{label}` missing"))),
            }
        }
        Ok(Self { entries, index })
    }

    pub fn from_csv(text: &str) -> Result<Self, BehaviorError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let entries = reader
            .deserialize()
            .collect::<Result<Vec<CatalogEntry>, _>>()
            .map_err(|e| BehaviorError::InvalidCatalog(e.to_string()))?;
        Self::from_entries(entries)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    pub fn get(&self, label: &str) -> Result<&CatalogEntry, BehaviorError> {
        self.index
            .get(label)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| BehaviorError::UnknownLabel(label.to_string()))
    }

    pub fn policy_class(&self, label: &str) -> Result<PolicyClass, BehaviorError> {
        self.get(label).map(|e| e.policy_class)
    }

    /// Attaches category and policy class to a raw observation.
    pub fn validate_event(&self, raw: &RawBehavior, origin: Origin) -> Result<BabyBehaviorEvent, BehaviorError> {
        let e = self.get(&raw.label)?;
        Ok(BabyBehaviorEvent {
            t: raw.t,
            label: e.label.clone(),
            category: e.category,
            policy_class: e.policy_class,
            origin,
        })
    }
}

impl Default for BehaviorCatalog {
    fn default() -> Self {
        Self::from_csv(DEFAULT_CATALOG_CSV).expect("shipped catalog is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_catalog_shape() {
        let c = BehaviorCatalog::default();
        assert_eq!(c.entries().len(), 23);
        let figure = c.entries().iter().filter(|e| e.source == LabelSource::Figure).count();
        assert_eq!(figure, 9);
        let per_cat = |cat| c.entries().iter().filter(|e| e.category == cat).count();
        assert_eq!(per_cat(BehaviorCategory::Vocalization), 6);
        assert_eq!(per_cat(BehaviorCategory::SocialCommunicativeGesture), 7);
        assert_eq!(per_cat(BehaviorCategory::SocialRoutine), 5);
        assert_eq!(per_cat(BehaviorCategory::SocialManualAction), 5);
    }

    #[test]
    fn validate_known_and_unknown() {
        let c = BehaviorCatalog::default();
        let ev = c.validate_event(&RawBehavior { t: 1000, label: "Crying".into() }, Origin::Scripted).unwrap();
        assert_eq!(ev.category, BehaviorCategory::Vocalization);
        assert_eq!(ev.policy_class, PolicyClass::Distress);
        let ev = c.validate_event(&RawBehavior { t: 2000, label: "Pointing".into() }, Origin::Operator).unwrap();
        assert_eq!(ev.policy_class, PolicyClass::Engaged);
        assert_eq!(ev.origin, Origin::Operator);
        assert_eq!(
            c.validate_event(&RawBehavior { t: 3000, label: "Juggling".into() }, Origin::Scripted),
            Err(BehaviorError::UnknownLabel("Juggling".into()))
        );
    }

    #[test]
    fn policy_classes() {
        let c = BehaviorCatalog::default();
        assert_eq!(c.policy_class("Waving"), Ok(PolicyClass::Engaged));
        assert_eq!(c.policy_class("Vegetative"), Ok(PolicyClass::Distress));
        assert_eq!(c.policy_class("Yawning"), Ok(PolicyClass::Neutral));
        assert_eq!(c.policy_class("GazeToParent"), Ok(PolicyClass::Neutral));
        assert!(c.policy_class("Dancing").is_err());
    }

    #[test]
    fn catalog_checks() {
        let mut entries = BehaviorCatalog::default().entries().to_vec();
        entries.pop();
        assert!(BehaviorCatalog::from_entries(entries.clone()).is_err());
        entries.push(entries[0].clone());
        assert!(matches!(BehaviorCatalog::from_entries(entries), Err(BehaviorError::InvalidCatalog(m)) if m.contains("duplicate")));
        let mut entries = BehaviorCatalog::default().entries().to_vec();
        entries[0].policy_class = PolicyClass::Neutral; // Crying
        assert!(BehaviorCatalog::from_entries(entries).is_err());
        assert!(BehaviorCatalog::from_csv("label,category\nX,Y\n").is_err());
    }

    #[test]
    fn labels_round_trip_through_json() {
        let c = BehaviorCatalog::default();
        for e in c.entries() {
            let ev = c.validate_event(&RawBehavior { t: 1, label: e.label.clone() }, Origin::Scripted).unwrap();
            let back: BabyBehaviorEvent = serde_json::from_str(&serde_json::to_string(&ev).unwrap()).unwrap();
            assert_eq!(back, ev);
        }
    }
}
