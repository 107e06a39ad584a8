//! Versioned data contracts and the contract registry.

mod schema;

pub use schema::{
    check_compatibility, classify_schema_change, CompatIssue, CompatViolation,
    CompatibilityMode, CompatibilityReport, FieldSpec, FieldType, Range, SchemaError,
    StructSchema, VersionBump,
};

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use semver::Version;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attrs::Classification;
use crate::mapping::CanonicalBaseline;

/// Default time a retired contract keeps being enforced.
pub const DEFAULT_GRACE_DAYS: i64 = 30;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldSemantics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampSemantics {
    Event,
    Ingestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingGuarantee {
    None,
    PerDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalRules {
    pub timestamp_semantics: TimestampSemantics,
    pub sample_rate_hz: f64,
    pub max_drift_s: f64,
    pub ordering: OrderingGuarantee,
    #[serde(default = "default_reorder_window")]
    pub reorder_window_s: f64,
}

fn default_reorder_window() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Raci {
    Responsible,
    Accountable,
    Consulted,
    Informed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Steward {
    pub name: String,
    pub role: Raci,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ownership {
    pub domain: String,
    pub producer: String,
    pub stewards: Vec<Steward>,
}

impl Ownership {
    pub fn with_role(&self, role: Raci) -> impl Iterator<Item = &Steward> {
        self.stewards.iter().filter(move |s| s.role == role)
    }

    pub fn responsible(&self) -> Option<&Steward> {
        self.with_role(Raci::Responsible).next()
    }
}

fn default_min_score() -> f64 {
    0.95
}

/// Quality thresholds. `accuracy_max_deviation` and `freshness_max_age_s`
/// define what counts as an accurate or fresh record; the `min_*` fields are
/// the score floors for those dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySla {
    pub completeness: f64,
    pub accuracy_max_deviation: f64,
    pub freshness_max_age_s: f64,
    pub consistency: f64,
    #[serde(default = "default_min_score")]
    pub min_accuracy: f64,
    #[serde(default = "default_min_score")]
    pub min_freshness: f64,
    #[serde(default = "default_min_score")]
    pub min_validity: f64,
}

impl QualitySla {
    pub fn new(completeness: f64, accuracy_max_deviation: f64, freshness_max_age_s: f64, consistency: f64) -> Self {
        QualitySla {
            completeness,
            accuracy_max_deviation,
            freshness_max_age_s,
            consistency,
            min_accuracy: default_min_score(),
            min_freshness: default_min_score(),
            min_validity: default_min_score(),
        }
    }

    fn check(&self) -> Result<(), String> {
        let unit = [
            ("completeness", self.completeness),
            ("consistency", self.consistency),
            ("min_accuracy", self.min_accuracy),
            ("min_freshness", self.min_freshness),
            ("min_validity", self.min_validity),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("sla {name} {v} outside [0,1]"));
            }
        }
        if !(self.accuracy_max_deviation >= 0.0) {
            return Err("sla accuracy_max_deviation must be non-negative".into());
        }
        if !(self.freshness_max_age_s > 0.0) {
            return Err("sla freshness_max_age_s must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContractState {
    Definition,
    Review,
    Deployment,
    Enforcement,
    Evolution,
    Retirement,
}

impl ContractState {
    pub fn can_transition_to(self, target: ContractState) -> bool {
        use ContractState::*;
        matches!(
            (self, target),
            (Definition, Review)
                | (Review, Deployment)
                | (Deployment, Enforcement)
                | (Enforcement, Evolution)
                | (Evolution, Review)
                | (Enforcement, Retirement)
        )
    }

    pub fn parse(s: &str) -> Option<Self> {
        use ContractState::*;
        [Definition, Review, Deployment, Enforcement, Evolution, Retirement]
            .into_iter()
            .find(|st| format!("{st:?}").eq_ignore_ascii_case(s))
    }
}

fn default_state() -> ContractState {
    ContractState::Definition
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataContract {
    pub contract_id: String,
    pub version: Version,
    pub classification: Classification,
    pub schema: StructSchema,
    #[serde(default)]
    pub semantics: BTreeMap<String, FieldSemantics>,
    pub temporal: TemporalRules,
    pub ownership: Ownership,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_sla: Option<QualitySla>,
    pub compatibility: CompatibilityMode,
    #[serde(default = "default_state")]
    pub state: ContractState,
    /// Consumer migration window for major versions; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub migration_timeline_days: Option<u32>,
}

impl DataContract {
    pub fn reference(&self) -> ContractRef {
        ContractRef {
            contract_id: self.contract_id.clone(),
            version: self.version.clone(),
        }
    }

    /// Schema field annotated with `concept`, if any.
    pub fn field_for_concept(&self, concept: &str) -> Option<&str> {
        self.semantics
            .iter()
            .find(|(_, s)| s.concept.as_deref() == Some(concept))
            .map(|(f, _)| f.as_str())
    }

    pub fn validate_structure(&self, baseline: &CanonicalBaseline) -> Result<(), ContractError> {
        let malformed = |reason: String| ContractError::MalformedContract {
            contract_id: self.contract_id.clone(),
            reason,
        };
        if self.contract_id.trim().is_empty() {
            return Err(malformed("empty contract id".into()));
        }
        self.schema
            .check_well_formed()
            .map_err(|e| malformed(e.to_string()))?;
        for (field, sem) in &self.semantics {
            if self.schema.field_path(field).is_none() {
                return Err(malformed(format!("semantics reference unknown field {field}")));
            }
            if let Some(p) = sem.precision {
                if !(p > 0.0) {
                    return Err(malformed(format!("precision on {field} must be positive")));
                }
            }
            if let Some(concept) = &sem.concept {
                if !baseline.has_concept(concept) {
                    return Err(ContractError::UnknownCanonicalConcept(concept.clone()));
                }
            }
        }
        if !(self.temporal.sample_rate_hz > 0.0) {
            return Err(malformed("sample rate must be positive".into()));
        }
        if !(self.temporal.max_drift_s >= 0.0) || !(self.temporal.reorder_window_s >= 0.0) {
            return Err(malformed("temporal bounds must be non-negative".into()));
        }
        if let Some(sla) = &self.quality_sla {
            sla.check().map_err(malformed)?;
        }
        if self.ownership.responsible().is_none() {
            return Err(malformed("ownership lists no Responsible steward".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractRef {
    pub contract_id: String,
    pub version: Version,
}

impl fmt::Display for ContractRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.contract_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractError {
    #[error("malformed contract {contract_id}: {reason}")]
    MalformedContract { contract_id: String, reason: String },
    #[error("unknown canonical concept {0}")]
    UnknownCanonicalConcept(String),
    #[error("version {version} of {contract_id} is not greater than {latest}")]
    NonMonotonicVersion {
        contract_id: String,
        version: Version,
        latest: Version,
    },
    #[error("illegal contract transition {from:?} -> {to:?}")]
    IllegalTransition { from: ContractState, to: ContractState },
    #[error("review of {0} not yet approved")]
    ReviewPending(ContractRef),
    #[error("unknown contract {0}")]
    UnknownContract(String),
    #[error("unknown contract version {0}")]
    UnknownVersion(ContractRef),
    #[error("no enforced version of {0}")]
    NoEnforcedVersion(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractEntry {
    pub contract: DataContract,
    #[serde(default)]
    pub review_approved_by: Option<String>,
    #[serde(default)]
    pub retired_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub consumer: String,
    pub contract: ContractRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactEntry {
    pub consumer: String,
    pub version: Version,
    pub state: ContractState,
    pub deprecated: bool,
}

/// Append-only store of contract versions, keyed by contract id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRegistry {
    contracts: BTreeMap<String, Vec<ContractEntry>>,
    subscriptions: Vec<Subscription>,
    grace_period_s: i64,
}

impl Default for ContractRegistry {
    fn default() -> Self {
        ContractRegistry {
            contracts: BTreeMap::new(),
            subscriptions: Vec::new(),
            grace_period_s: DEFAULT_GRACE_DAYS * 86_400,
        }
    }
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_grace_period(mut self, grace: Duration) -> Self {
        self.grace_period_s = grace.num_seconds();
        self
    }

    pub fn grace_period(&self) -> Duration {
        Duration::seconds(self.grace_period_s)
    }

    pub fn register_contract(
        &mut self,
        mut contract: DataContract,
        baseline: &CanonicalBaseline,
    ) -> Result<ContractRef, ContractError> {
        contract.validate_structure(baseline)?;
        if let Some(latest) = self
            .contracts
            .get(&contract.contract_id)
            .and_then(|v| v.last())
        {
            if contract.version <= latest.contract.version {
                return Err(ContractError::NonMonotonicVersion {
                    contract_id: contract.contract_id.clone(),
                    version: contract.version.clone(),
                    latest: latest.contract.version.clone(),
                });
            }
        }
        contract.state = ContractState::Definition;
        let r = contract.reference();
        self.contracts
            .entry(contract.contract_id.clone())
            .or_default()
            .push(ContractEntry {
                contract,
                review_approved_by: None,
                retired_at: None,
            });
        Ok(r)
    }

    pub fn versions(&self, contract_id: &str) -> Result<&[ContractEntry], ContractError> {
        self.contracts
            .get(contract_id)
            .map(Vec::as_slice)
            .ok_or_else(|| ContractError::UnknownContract(contract_id.to_string()))
    }

    pub fn contract_ids(&self) -> impl Iterator<Item = &str> {
        self.contracts.keys().map(String::as_str)
    }

    fn entry_mut(&mut self, r: &ContractRef) -> Result<&mut ContractEntry, ContractError> {
        self.contracts
            .get_mut(&r.contract_id)
            .ok_or_else(|| ContractError::UnknownContract(r.contract_id.clone()))?
            .iter_mut()
            .find(|e| e.contract.version == r.version)
            .ok_or_else(|| ContractError::UnknownVersion(r.clone()))
    }

    pub fn entry(&self, r: &ContractRef) -> Result<&ContractEntry, ContractError> {
        self.versions(&r.contract_id)?
            .iter()
            .find(|e| e.contract.version == r.version)
            .ok_or_else(|| ContractError::UnknownVersion(r.clone()))
    }

    /// Marks the review as approved. Approval may land at any time while the
    /// contract is in Review; it only gates the move to Deployment.
    pub fn approve_review(&mut self, r: &ContractRef, reviewer: &str) -> Result<(), ContractError> {
        let entry = self.entry_mut(r)?;
        entry.review_approved_by = Some(reviewer.to_string());
        Ok(())
    }

    pub fn transition_contract_state(
        &mut self,
        r: &ContractRef,
        target: ContractState,
        now: DateTime<Utc>,
    ) -> Result<ContractState, ContractError> {
        let entry = self.entry_mut(r)?;
        let from = entry.contract.state;
        if !from.can_transition_to(target) {
            return Err(ContractError::IllegalTransition { from, to: target });
        }
        if target == ContractState::Deployment && entry.review_approved_by.is_none() {
            return Err(ContractError::ReviewPending(r.clone()));
        }
        if target == ContractState::Review {
            entry.review_approved_by = None;
        }
        if target == ContractState::Retirement {
            entry.retired_at = Some(now);
        }
        entry.contract.state = target;
        Ok(target)
    }

    /// Drives a freshly registered version straight to Enforcement.
    pub fn promote_to_enforcement(
        &mut self,
        r: &ContractRef,
        reviewer: &str,
        now: DateTime<Utc>,
    ) -> Result<(), ContractError> {
        self.transition_contract_state(r, ContractState::Review, now)?;
        self.approve_review(r, reviewer)?;
        self.transition_contract_state(r, ContractState::Deployment, now)?;
        self.transition_contract_state(r, ContractState::Enforcement, now)?;
        Ok(())
    }

    /// Enforcement state, or retired but still inside the grace period.
    pub fn is_enforced(&self, entry: &ContractEntry, now: DateTime<Utc>) -> bool {
        match (entry.contract.state, entry.retired_at) {
            (ContractState::Enforcement, _) => true,
            (ContractState::Retirement, Some(at)) => now < at + self.grace_period(),
            _ => false,
        }
    }

    /// Exact version when given; otherwise the newest version currently
    /// enforced at `now`.
    pub fn resolve_contract(
        &self,
        contract_id: &str,
        version: Option<&Version>,
        now: DateTime<Utc>,
    ) -> Result<&DataContract, ContractError> {
        let versions = self.versions(contract_id)?;
        match version {
            Some(v) => versions
                .iter()
                .find(|e| &e.contract.version == v)
                .map(|e| &e.contract)
                .ok_or_else(|| {
                    ContractError::UnknownVersion(ContractRef {
                        contract_id: contract_id.to_string(),
                        version: v.clone(),
                    })
                }),
            None => versions
                .iter()
                .rev()
                .find(|e| self.is_enforced(e, now))
                .map(|e| &e.contract)
                .ok_or_else(|| ContractError::NoEnforcedVersion(contract_id.to_string())),
        }
    }

    pub fn latest(&self, contract_id: &str) -> Result<&DataContract, ContractError> {
        self.versions(contract_id)?
            .last()
            .map(|e| &e.contract)
            .ok_or_else(|| ContractError::UnknownContract(contract_id.to_string()))
    }

    pub fn subscribe(&mut self, consumer: &str, r: &ContractRef) -> Result<(), ContractError> {
        self.entry(r)?;
        let sub = Subscription {
            consumer: consumer.to_string(),
            contract: r.clone(),
        };
        if !self.subscriptions.contains(&sub) {
            self.subscriptions.push(sub);
        }
        Ok(())
    }

    /// Every subscription to any version of `contract_id`, flagged when the
    /// subscribed version is retired.
    pub fn impact_analysis(&self, contract_id: &str) -> Result<Vec<ImpactEntry>, ContractError> {
        let versions = self.versions(contract_id)?;
        Ok(self
            .subscriptions
            .iter()
            .filter(|s| s.contract.contract_id == contract_id)
            .filter_map(|s| {
                versions
                    .iter()
                    .find(|e| e.contract.version == s.contract.version)
                    .map(|e| ImpactEntry {
                        consumer: s.consumer.clone(),
                        version: s.contract.version.clone(),
                        state: e.contract.state,
                        deprecated: e.contract.state == ContractState::Retirement,
                    })
            })
            .collect())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn temperature_contract(version: &str) -> DataContract {
        let mut semantics = BTreeMap::new();
        semantics.insert(
            "temp_celsius".to_string(),
            FieldSemantics {
                unit: Some("degC".into()),
                precision: Some(0.1),
                concept: Some("Measurement.Temperature".into()),
            },
        );
        DataContract {
            contract_id: "plant.temperature".into(),
            version: Version::parse(version).unwrap(),
            classification: Classification::Confidential,
            schema: StructSchema::new(vec![
                FieldSpec::new("temp_celsius", FieldType::Float, true).with_range(-40.0, 150.0),
                FieldSpec::new("status", FieldType::String, true),
            ]),
            semantics,
            temporal: TemporalRules {
                timestamp_semantics: TimestampSemantics::Event,
                sample_rate_hz: 1.0,
                max_drift_s: 60.0,
                ordering: OrderingGuarantee::PerDevice,
                reorder_window_s: 10.0,
            },
            ownership: Ownership {
                domain: "manufacturing".into(),
                producer: "plant-a/scada".into(),
                stewards: vec![
                    Steward { name: "ops-steward".into(), role: Raci::Responsible },
                    Steward { name: "domain-lead".into(), role: Raci::Accountable },
                    Steward { name: "analytics".into(), role: Raci::Informed },
                ],
            },
            quality_sla: Some(QualitySla::new(0.95, 2.0, 5.0, 0.99)),
            compatibility: CompatibilityMode::Backward,
            state: ContractState::Definition,
            migration_timeline_days: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::temperature_contract;
    use super::*;

    fn now() -> DateTime<Utc> {
        "2025-01-01T00:00:00Z".parse().unwrap()
    }

    fn baseline() -> CanonicalBaseline {
        CanonicalBaseline::standard()
    }

    #[test]
    fn registers_in_definition_state() {
        let mut reg = ContractRegistry::new();
        let r = reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        assert_eq!(reg.entry(&r).unwrap().contract.state, ContractState::Definition);
    }

    #[test]
    fn version_history_is_monotonic() {
        let mut reg = ContractRegistry::new();
        reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        reg.register_contract(temperature_contract("1.1.0"), &baseline()).unwrap();
        let err = reg
            .register_contract(temperature_contract("1.0.0"), &baseline())
            .unwrap_err();
        assert!(matches!(err, ContractError::NonMonotonicVersion { .. }));
        let err = reg
            .register_contract(temperature_contract("1.1.0"), &baseline())
            .unwrap_err();
        assert!(matches!(err, ContractError::NonMonotonicVersion { .. }));
    }

    #[test]
    fn unknown_concept_rejected() {
        let mut c = temperature_contract("1.0.0");
        c.semantics.get_mut("temp_celsius").unwrap().concept = Some("Measurement.Frobnication".into());
        let err = ContractRegistry::new().register_contract(c, &baseline()).unwrap_err();
        assert_eq!(err, ContractError::UnknownCanonicalConcept("Measurement.Frobnication".into()));
    }

    #[test]
    fn malformed_contracts_rejected() {
        let mut c = temperature_contract("1.0.0");
        c.semantics.insert("ghost".into(), FieldSemantics::default());
        assert!(matches!(
            ContractRegistry::new().register_contract(c, &baseline()),
            Err(ContractError::MalformedContract { .. })
        ));
        let mut c = temperature_contract("1.0.0");
        c.temporal.sample_rate_hz = 0.0;
        assert!(ContractRegistry::new().register_contract(c, &baseline()).is_err());
        let mut c = temperature_contract("1.0.0");
        c.quality_sla.as_mut().unwrap().completeness = 1.5;
        assert!(ContractRegistry::new().register_contract(c, &baseline()).is_err());
        let mut c = temperature_contract("1.0.0");
        c.ownership.stewards.retain(|s| s.role != Raci::Responsible);
        assert!(ContractRegistry::new().register_contract(c, &baseline()).is_err());
    }

    #[test]
    fn compatibility_mode_must_be_declared() {
        let c = temperature_contract("1.0.0");
        let mut v = serde_json::to_value(&c).unwrap();
        v.as_object_mut().unwrap().remove("compatibility");
        assert!(serde_json::from_value::<DataContract>(v).is_err());
    }

    #[test]
    fn lifecycle_transitions() {
        let mut reg = ContractRegistry::new();
        let r = reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        let err = reg
            .transition_contract_state(&r, ContractState::Enforcement, now())
            .unwrap_err();
        assert!(matches!(err, ContractError::IllegalTransition { .. }));
        reg.transition_contract_state(&r, ContractState::Review, now()).unwrap();
        assert!(matches!(
            reg.transition_contract_state(&r, ContractState::Deployment, now()),
            Err(ContractError::ReviewPending(_))
        ));
        reg.approve_review(&r, "governance-board").unwrap();
        assert_eq!(
            reg.transition_contract_state(&r, ContractState::Deployment, now()).unwrap(),
            ContractState::Deployment
        );
        reg.transition_contract_state(&r, ContractState::Enforcement, now()).unwrap();
        reg.transition_contract_state(&r, ContractState::Evolution, now()).unwrap();
        reg.transition_contract_state(&r, ContractState::Review, now()).unwrap();
    }

    #[test]
    fn retired_contract_enforced_during_grace_only() {
        let mut reg = ContractRegistry::new();
        let r = reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        reg.promote_to_enforcement(&r, "board", now()).unwrap();
        reg.transition_contract_state(&r, ContractState::Retirement, now()).unwrap();
        let entry = reg.entry(&r).unwrap();
        assert_eq!(entry.retired_at, Some(now()));
        let during = now() + Duration::days(29);
        let after = now() + Duration::days(30);
        assert!(reg.resolve_contract("plant.temperature", None, during).is_ok());
        assert!(matches!(
            reg.resolve_contract("plant.temperature", None, after),
            Err(ContractError::NoEnforcedVersion(_))
        ));
    }

    #[test]
    fn resolve_latest_enforced_or_exact() {
        let mut reg = ContractRegistry::new().with_grace_period(Duration::zero());
        let v1 = reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        let v11 = reg.register_contract(temperature_contract("1.1.0"), &baseline()).unwrap();
        reg.promote_to_enforcement(&v1, "b", now()).unwrap();
        reg.promote_to_enforcement(&v11, "b", now()).unwrap();
        reg.transition_contract_state(&v1, ContractState::Retirement, now()).unwrap();
        let latest = reg.resolve_contract("plant.temperature", None, now()).unwrap();
        assert_eq!(latest.version, Version::new(1, 1, 0));
        let exact = reg
            .resolve_contract("plant.temperature", Some(&Version::new(1, 0, 0)), now())
            .unwrap();
        assert_eq!(exact.version, Version::new(1, 0, 0));
        assert!(matches!(
            reg.resolve_contract("nope", None, now()),
            Err(ContractError::UnknownContract(_))
        ));
    }

    #[test]
    fn impact_analysis_joins_subscriptions_and_state() {
        let mut reg = ContractRegistry::new();
        let v1 = reg.register_contract(temperature_contract("1.0.0"), &baseline()).unwrap();
        let v11 = reg.register_contract(temperature_contract("1.1.0"), &baseline()).unwrap();
        assert!(reg.impact_analysis("plant.temperature").unwrap().is_empty());
        reg.promote_to_enforcement(&v1, "b", now()).unwrap();
        reg.subscribe("oee-dashboard", &v1).unwrap();
        reg.subscribe("energy-report", &v11).unwrap();
        reg.transition_contract_state(&v1, ContractState::Retirement, now()).unwrap();
        let impact = reg.impact_analysis("plant.temperature").unwrap();
        assert_eq!(impact.len(), 2);
        let old = impact.iter().find(|i| i.consumer == "oee-dashboard").unwrap();
        assert!(old.deprecated);
        let new = impact.iter().find(|i| i.consumer == "energy-report").unwrap();
        assert!(!new.deprecated);
        assert!(matches!(
            reg.impact_analysis("nope"),
            Err(ContractError::UnknownContract(_))
        ));
    }
}
