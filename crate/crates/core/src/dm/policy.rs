//! Ordered first-match-wins policy rules and the exhaustive coverage check.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::plans::{EpisodeKind, PlanTemplate};
use super::DmError;
use crate::behavior::{BehaviorCatalog, PolicyClass};
use crate::gaze::Aoi;
use crate::thermal::{Readiness, ReadinessClass};

pub const DEFAULT_POLICY_TOML: &str = include_str!("../../data/policy.toml");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BehaviorMatcher {
    /// No triggering behavior.
    Absent,
    /// Any triggering behavior.
    Any,
    Class(PolicyClass),
    Label(String),
}

impl BehaviorMatcher {
    fn matches(&self, behavior: Option<&TriggerBehavior>) -> bool {
        match (self, behavior) {
            (BehaviorMatcher::Absent, None) => true,
            (BehaviorMatcher::Any, Some(_)) => true,
            (BehaviorMatcher::Class(c), Some(b)) => b.class == *c,
            (BehaviorMatcher::Label(l), Some(b)) => b.label == *l,
            _ => false,
        }
    }
}

impl FromStr for BehaviorMatcher {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "absent" => Ok(BehaviorMatcher::Absent),
            None if s == "any" => Ok(BehaviorMatcher::Any),
            Some(("class", c)) => match c {
                "Distress" => Ok(BehaviorMatcher::Class(PolicyClass::Distress)),
                "Engaged" => Ok(BehaviorMatcher::Class(PolicyClass::Engaged)),
                "Neutral" => Ok(BehaviorMatcher::Class(PolicyClass::Neutral)),
                other => Err(format!("unknown policy class `{other}`")),
            },
            Some(("label", l)) if !l.is_empty() => Ok(BehaviorMatcher::Label(l.to_string())),
            _ => Err(format!("bad behavior matcher `{s}` (absent | any | class:<C> | label:<L>)")),
        }
    }
}

impl fmt::Display for BehaviorMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BehaviorMatcher::Absent => f.write_str("absent"),
            BehaviorMatcher::Any => f.write_str("any"),
            BehaviorMatcher::Class(c) => write!(f, "class:{c}"),
            BehaviorMatcher::Label(l) => write!(f, "label:{l}"),
        }
    }
}

/// Conjunction of optional field constraints; an unset field matches anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Guard {
    pub aoi: Option<BTreeSet<Aoi>>,
    pub readiness: Option<BTreeSet<ReadinessClass>>,
    pub behavior: Option<Vec<BehaviorMatcher>>,
    pub episode: Option<BTreeSet<EpisodeKind>>,
    pub fixated: Option<bool>,
    pub idle_timeout: Option<bool>,
}

/// The behavior that triggered a selection, reduced to what guards inspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerBehavior {
    pub label: String,
    pub class: PolicyClass,
}

/// Everything a guard can look at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyInput {
    pub aoi: Aoi,
    pub readiness: ReadinessClass,
    pub behavior: Option<TriggerBehavior>,
    pub episode: EpisodeKind,
    pub fixated: bool,
    pub idle_timeout: bool,
}

impl Guard {
    pub fn matches(&self, input: &PolicyInput) -> bool {
        self.aoi.as_ref().is_none_or(|s| s.contains(&input.aoi))
            && self.readiness.as_ref().is_none_or(|s| s.contains(&input.readiness))
            && self.behavior.as_ref().is_none_or(|ms| ms.iter().any(|m| m.matches(input.behavior.as_ref())))
            && self.episode.as_ref().is_none_or(|s| s.contains(&input.episode))
            && self.fixated.is_none_or(|f| f == input.fixated)
            && self.idle_timeout.is_none_or(|f| f == input.idle_timeout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRule {
    pub id: String,
    pub guard: Guard,
    pub plan: PlanTemplate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: String,
    aoi: Option<Vec<Aoi>>,
    readiness: Option<Vec<ReadinessClass>>,
    behavior: Option<Vec<String>>,
    episode: Option<Vec<EpisodeKind>>,
    fixated: Option<bool>,
    idle_timeout: Option<bool>,
    plan: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    schema: u32,
    rule: Vec<RawRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    pub rules: Vec<PolicyRule>,
}

impl PolicyTable {
    /// Parses a rules file and checks labels against the behavior catalog.
    pub fn from_toml(text: &str, behaviors: &BehaviorCatalog) -> Result<Self, DmError> {
        let raw: RawPolicy = toml::from_str(text).map_err(|e| DmError::PolicyParse(e.to_string()))?;
        if raw.schema != 1 {
            return Err(DmError::PolicyParse(format!("unsupported schema {}", raw.schema)));
        }
        let mut ids = BTreeSet::new();
        let mut rules = Vec::with_capacity(raw.rule.len());
        for r in raw.rule {
            let bad = |m: String| DmError::PolicyParse(format!("rule `{}`: {m}", r.id));
            if !ids.insert(r.id.clone()) {
                return Err(bad("duplicate id".into()));
            }
            let behavior = match &r.behavior {
                None => None,
                Some(list) => {
                    let mut ms = Vec::with_capacity(list.len());
                    for s in list {
                        let m: BehaviorMatcher = s.parse().map_err(bad)?;
                        if let BehaviorMatcher::Label(l) = &m {
                            behaviors.get(l).map_err(|e| bad(e.to_string()))?;
                        }
                        ms.push(m);
                    }
                    Some(ms)
                }
            };
            let plan = r.plan.parse().map_err(|e: DmError| bad(e.to_string()))?;
            rules.push(PolicyRule {
                id: r.id.clone(),
                guard: Guard {
                    aoi: r.aoi.map(|v| v.into_iter().collect()),
                    readiness: r.readiness.map(|v| v.into_iter().collect()),
                    behavior,
                    episode: r.episode.map(|v| v.into_iter().collect()),
                    fixated: r.fixated,
                    idle_timeout: r.idle_timeout,
                },
                plan,
            });
        }
        Ok(Self { rules })
    }

    /// First rule whose guard matches.
    pub fn select(&self, input: &PolicyInput) -> Result<&PolicyRule, DmError> {
        self.rules
            .iter()
            .find(|r| r.guard.matches(input))
            .ok_or_else(|| DmError::NoMatchingRule(format!("{input:?}")))
    }

    pub fn templates(&self) -> BTreeSet<PlanTemplate> {
        self.rules.iter().map(|r| r.plan).collect()
    }
}

impl Default for PolicyTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_POLICY_TOML, &BehaviorCatalog::default()).expect("shipped policy parses")
    }
}

/// One enumerated (aoi, readiness, behavior) combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageRow {
    pub aoi: Aoi,
    pub readiness: Readiness,
    pub behavior: Option<String>,
    /// Rule matched in the baseline context (episode Idle, not fixated, no idle timeout).
    pub rule: Option<String>,
    /// Whether some rule matches in every episode/fixation/idle context.
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// aoi × readiness × behavior combinations, the behavior being present.
    pub baseline: usize,
}

impl CoverageReport {
    pub fn checked(&self) -> usize {
        self.rows.len()
    }

    pub fn covered(&self) -> usize {
        self.rows.iter().filter(|r| r.covered).count()
    }

    pub fn uncovered(&self) -> impl Iterator<Item = &CoverageRow> {
        self.rows.iter().filter(|r| !r.covered)
    }

    pub fn is_total(&self) -> bool {
        self.covered() == self.checked()
    }
}

/// Enumerates every (aoi, readiness, behavior-or-absent) combination and
/// records which rule fires for it.
pub fn check_policy_coverage(policy: &PolicyTable, catalog: &BehaviorCatalog) -> CoverageReport {
    let behaviors: Vec<Option<TriggerBehavior>> = catalog
        .entries()
        .iter()
        .map(|e| Some(TriggerBehavior { label: e.label.clone(), class: e.policy_class }))
        .chain(std::iter::once(None))
        .collect();
    let mut rows = Vec::with_capacity(Aoi::ALL.len() * Readiness::ALL.len() * behaviors.len());
    for aoi in Aoi::ALL {
        for readiness in Readiness::ALL {
            for behavior in &behaviors {
                let mut input = PolicyInput {
                    aoi,
                    readiness: readiness.class(),
                    behavior: behavior.clone(),
                    episode: EpisodeKind::Idle,
                    fixated: false,
                    idle_timeout: false,
                };
                let rule = policy.select(&input).ok().map(|r| r.id.clone());
                let mut covered = true;
                'ctx: for episode in EpisodeKind::ALL {
                    for fixated in [false, true] {
                        for idle_timeout in [false, true] {
                            input.episode = episode;
                            input.fixated = fixated;
                            input.idle_timeout = idle_timeout;
                            if policy.select(&input).is_err() {
                                covered = false;
                                break 'ctx;
                            }
                        }
                    }
                }
                rows.push(CoverageRow {
                    aoi,
                    readiness,
                    behavior: behavior.as_ref().map(|b| b.label.clone()),
                    rule,
                    covered,
                });
            }
        }
    }
    let baseline = Aoi::ALL.len() * Readiness::ALL.len() * catalog.entries().len();
    CoverageReport { rows, baseline }
}
