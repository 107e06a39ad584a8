//! Publication, access and external-sharing boundaries.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AuditAction, AuditEntry, BoundaryError, Fabric};
use crate::asset_registry::AssetId;
use crate::attrs::{AttrMap, AttrValue, Classification};
use crate::contract::{check_compatibility, classify_schema_change, ContractRef, DataContract, VersionBump};
use crate::mapping::CanonicalMeasurement;
use crate::policy::{evaluate_request, AttributeRequest, Decision, Outcome, Reason};
use crate::privacy::{aggregate_records, dp_query, min_group_size, route_partition, AggregateReport, AggregationLevel, PrivacyBudget};
use crate::quality::{compute_dimension_scores, evaluate_sla, Observation, QualityScore, StreamWindow};

/// Share of product output sampled before publication.
pub const PUBLICATION_SAMPLE_FRACTION: f64 = 0.2;

/// Epsilon granted to each product for noisy queries.
pub const DEFAULT_PRODUCT_EPSILON: f64 = 1.0;

/// Where a product field takes its value from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case")]
pub enum FieldSource {
    /// A field of the canonical source record.
    Record { field: String },
    Value,
    Sensor,
    Concept,
    EventTime,
    IngestionTime,
    /// Effective asset attribute, e.g. `site.jurisdiction`.
    AssetAttr { name: String },
    Constant { value: Value },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductTransform {
    pub fields: BTreeMap<String, FieldSource>,
}

impl ProductTransform {
    pub fn with(mut self, field: &str, source: FieldSource) -> Self {
        self.fields.insert(field.to_string(), source);
        self
    }

    fn apply(&self, s: &super::StoredMeasurement) -> Map<String, Value> {
        let attr = |v: &AttrValue| match v {
            AttrValue::Bool(b) => Value::Bool(*b),
            AttrValue::Num(n) => serde_json::Number::from_f64(*n).map_or(Value::Null, Value::Number),
            AttrValue::Str(x) => Value::String(x.clone()),
        };
        self.fields
            .iter()
            .map(|(name, src)| {
                let v = match src {
                    FieldSource::Record { field } => s.record.get(field).cloned().unwrap_or(Value::Null),
                    FieldSource::Value => serde_json::Number::from_f64(s.measurement.value).map_or(Value::Null, Value::Number),
                    FieldSource::Sensor => Value::String(s.measurement.sensor.0.clone()),
                    FieldSource::Concept => Value::String(s.measurement.concept.clone()),
                    FieldSource::EventTime => Value::String(s.measurement.event_time.to_rfc3339()),
                    FieldSource::IngestionTime => Value::String(s.measurement.ingestion_time.to_rfc3339()),
                    FieldSource::AssetAttr { name } => s.asset_attrs.get(name).map_or(Value::Null, attr),
                    FieldSource::Constant { value } => value.clone(),
                };
                (name.clone(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDefinition {
    pub product_id: String,
    pub steward: String,
    pub sources: Vec<ContractRef>,
    pub transform: ProductTransform,
    /// Product contract: schema, classification and SLA.
    pub contract: DataContract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductEntry {
    pub definition: ProductDefinition,
    pub records: Vec<Map<String, Value>>,
    pub measurements: Vec<CanonicalMeasurement>,
    /// Lowest common ancestor of the contributing sensors.
    pub scope: AssetId,
    pub scope_attrs: AttrMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_region: Option<String>,
    pub published_at: DateTime<Utc>,
    pub quality: QualityScore,
}

impl ProductEntry {
    pub fn classification(&self) -> Classification {
        self.definition.contract.classification
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationResult {
    pub product_id: String,
    pub version: semver::Version,
    pub records: usize,
    pub quality: QualityScore,
    pub scope: AssetId,
    pub audit_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub requester: String,
    /// Authenticated subject attributes (role, jurisdiction, mfa, ...).
    #[serde(default)]
    pub subject: AttrMap,
    pub product_id: String,
    #[serde(default)]
    pub env: AttrMap,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum AccessPayload {
    Records(Vec<Map<String, Value>>),
    Aggregate(AggregateReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessResult {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<AccessPayload>,
    /// Escalation ticket when the decision is pended for a steward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<String>,
    pub audit_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRequest {
    pub product_id: String,
    pub party: String,
    #[serde(default)]
    pub purpose: Option<String>,
    pub destination_region: String,
    #[serde(default)]
    pub subject: AttrMap,
    pub timestamp: DateTime<Utc>,
}

pub type ExportResult = AccessResult;

fn lowest_common_ancestor(lineages: &[Vec<AssetId>]) -> Option<AssetId> {
    let first = lineages.first()?;
    let mut depth = first.len();
    for l in &lineages[1..] {
        depth = depth.min(first.iter().zip(l).take_while(|(a, b)| a == b).count());
    }
    depth.checked_sub(1).map(|d| first[d].clone())
}

fn reasons_text(d: &Decision) -> String {
    d.reasons
        .iter()
        .map(|r| match r {
            Reason::Rule { rule, effect, .. } => format!("{effect:?} by {rule}"),
            Reason::MissingAttribute { rule, path } => format!("{rule} lacks {path}"),
            Reason::NoPermit { layer } => format!("no {layer:?} permit"),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Fabric {
    fn publish_failure(&mut self, def: &ProductDefinition, now: DateTime<Utc>, err: BoundaryError) -> BoundaryError {
        let actor = if def.steward.trim().is_empty() { "unknown-steward" } else { &def.steward };
        let resource = format!("{}@{}", def.product_id, def.contract.version);
        if let Err(e) = self.record(AuditEntry::new(now, actor, AuditAction::Publish, &resource, "Blocked", err.to_string())) {
            return e;
        }
        err
    }

    /// Runs the publication workflow: steward and source checks, the
    /// compatibility gate against the prior catalog version, output sampling
    /// against the SLA, then catalog registration.
    pub fn publish_product(&mut self, def: ProductDefinition, now: DateTime<Utc>) -> Result<PublicationResult, BoundaryError> {
        if def.steward.trim().is_empty() {
            let e = BoundaryError::MissingSteward(def.product_id.clone());
            return Err(self.publish_failure(&def, now, e));
        }
        for src in &def.sources {
            let enforced = self
                .contracts
                .entry(src)
                .map(|e| self.contracts.is_enforced(e, now))
                .unwrap_or(false);
            if !enforced {
                let e = BoundaryError::UnknownSourceContract(src.clone());
                return Err(self.publish_failure(&def, now, e));
            }
        }
        if let Some(prior) = self.catalog.get(&def.product_id).and_then(|v| v.last()) {
            let (old, new) = (&prior.definition.contract, &def.contract);
            let required = classify_schema_change(&old.schema, &new.schema);
            let (ov, nv) = (&old.version, &new.version);
            let bumped = match required {
                VersionBump::Major => nv.major > ov.major,
                VersionBump::Minor => nv.major > ov.major || (nv.major == ov.major && nv.minor > ov.minor),
                VersionBump::Patch => nv > ov,
            };
            let compat = check_compatibility(&old.schema, &new.schema, new.compatibility);
            if !bumped || !(compat.compatible || nv.major > ov.major) {
                let detail = if compat.violations.is_empty() {
                    format!("version {nv} does not carry a {required:?} increment over {ov}")
                } else {
                    compat
                        .violations
                        .iter()
                        .map(|v| format!("{} {:?}", v.field, v.issue))
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                let e = BoundaryError::IncompatibleContract {
                    product: def.product_id.clone(),
                    from: ov.to_string(),
                    to: nv.to_string(),
                    required,
                    detail,
                };
                return Err(self.publish_failure(&def, now, e));
            }
        }

        let ids: Vec<&str> = def.sources.iter().map(|s| s.contract_id.as_str()).collect();
        let sources: Vec<super::StoredMeasurement> = self
            .store
            .iter()
            .filter(|s| ids.contains(&s.contract.contract_id.as_str()))
            .cloned()
            .collect();
        if sources.is_empty() {
            let e = BoundaryError::SlaFailure {
                product: def.product_id.clone(),
                dimensions: vec!["completeness".into()],
            };
            return Err(self.publish_failure(&def, now, e));
        }
        let records: Vec<Map<String, Value>> = sources.iter().map(|s| def.transform.apply(s)).collect();
        let measurements: Vec<CanonicalMeasurement> = sources.iter().map(|s| s.measurement.clone()).collect();
        let lineages: Vec<Vec<AssetId>> = sources
            .iter()
            .map(|s| {
                self.assets
                    .hierarchy()
                    .lineage(&s.asset)
                    .map(|l| l.iter().map(|n| n.id.clone()).collect())
                    .unwrap_or_else(|_| vec![s.asset.clone()])
            })
            .collect();
        let observations: Vec<Observation> = sources
            .iter()
            .zip(&records)
            .map(|(s, r)| {
                let violations = def.contract.schema.validate(r);
                Observation {
                    event_time: s.measurement.event_time,
                    ingestion_time: s.measurement.ingestion_time,
                    value: Some(s.measurement.value),
                    true_value: None,
                    in_range: !violations.iter().any(|v| v.kind.label() == "out_of_range"),
                    consistent: true,
                    valid: !violations.iter().any(|v| v.severity == crate::validation::Severity::Critical),
                    stored: true,
                }
            })
            .collect();
        let start = observations.iter().map(|o| o.event_time).min().expect("non-empty");
        let last = observations.iter().map(|o| o.event_time).max().expect("non-empty");
        let step = chrono::Duration::milliseconds((1000.0 / def.contract.temporal.sample_rate_hz).ceil() as i64);
        let window = StreamWindow {
            stream_id: def.product_id.clone(),
            start,
            end: last + step,
            scheduled_s: None,
            observations,
        };
        let mut rng = self.op_rng();
        let quality = compute_dimension_scores(&window, &def.contract, PUBLICATION_SAMPLE_FRACTION, &self.weights, &mut rng)?;
        let eval = evaluate_sla(&def.product_id, &def.contract, &quality, now)?;
        if !eval.breaches.is_empty() {
            for b in &eval.breaches {
                self.notify(
                    now,
                    &def.steward,
                    "publication_blocked",
                    format!("{}: {} {:.4} below {:.4}", def.product_id, b.dimension, b.observed, b.threshold),
                );
            }
            let e = BoundaryError::SlaFailure {
                product: def.product_id.clone(),
                dimensions: eval.breaches.iter().map(|b| b.dimension.to_string()).collect(),
            };
            return Err(self.publish_failure(&def, now, e));
        }

        let scope = lowest_common_ancestor(&lineages).unwrap_or_else(|| sources[0].asset.clone());
        let scope_attrs = self
            .assets
            .resolve_effective_attributes(&scope)
            .map(|e| e.to_policy_attrs())
            .unwrap_or_default();
        let home_region = scope_attrs
            .get("jurisdiction")
            .and_then(AttrValue::as_str)
            .and_then(|j| route_partition(Some(j)).ok())
            .map(str::to_string);

        let r = match self.contracts.register_contract(def.contract.clone(), &self.baseline) {
            Ok(r) => r,
            Err(e) => return Err(self.publish_failure(&def, now, e.into())),
        };
        self.contracts.promote_to_enforcement(&r, &def.steward, now)?;
        for src in &def.sources {
            self.contracts.subscribe(&def.product_id, src)?;
        }
        self.vault.create_scope(&def.product_id, None);
        self.budgets
            .entry(def.product_id.clone())
            .or_insert(PrivacyBudget::new(&def.product_id, DEFAULT_PRODUCT_EPSILON)?);
        let resource = format!("{}@{}", def.product_id, def.contract.version);
        let audit_index = self.record(AuditEntry::new(
            now,
            &def.steward,
            AuditAction::Publish,
            &resource,
            "Published",
            format!("{} records, composite {:.4}", records.len(), quality.composite),
        ))?;
        let result = PublicationResult {
            product_id: def.product_id.clone(),
            version: def.contract.version.clone(),
            records: records.len(),
            quality: quality.clone(),
            scope: scope.clone(),
            audit_index,
        };
        self.catalog.entry(def.product_id.clone()).or_default().push(ProductEntry {
            definition: def,
            records,
            measurements,
            scope,
            scope_attrs,
            home_region,
            published_at: now,
            quality,
        });
        Ok(result)
    }

    pub fn product(&self, product_id: &str) -> Result<&ProductEntry, BoundaryError> {
        self.catalog
            .get(product_id)
            .and_then(|v| v.last())
            .ok_or_else(|| BoundaryError::UnknownProduct(product_id.to_string()))
    }

    fn product_request(&self, entry: &ProductEntry, action: &str, ts: DateTime<Utc>) -> AttributeRequest {
        let mut req = AttributeRequest::new(action, ts, entry.classification());
        req.resource
            .insert("product_id".into(), AttrValue::Str(entry.definition.product_id.clone()));
        if let Some(first) = entry.measurements.iter().map(|m| m.event_time).min() {
            req.resource.insert("created_at".into(), AttrValue::Str(first.to_rfc3339()));
        }
        req.asset = entry.scope_attrs.clone();
        req
    }

    fn count_decision(&mut self, d: &Decision) {
        match d.outcome {
            Outcome::Allow => self.decisions.allow += 1,
            Outcome::Deny => self.decisions.deny += 1,
            Outcome::Escalate => self.decisions.escalate += 1,
        }
    }

    /// Applies mask and aggregate obligations to a product's output.
    fn obligated_payload(&mut self, product_id: &str, decision: &mut Decision) -> Result<Option<AccessPayload>, BoundaryError> {
        let entry = self.product(product_id)?.clone();
        if let Some(level) = decision.aggregation().map(str::to_string) {
            let Some(level) = AggregationLevel::parse(&level) else {
                *decision = Decision::deny(decision.reasons.clone());
                return Ok(None);
            };
            let k = min_group_size(entry.classification());
            let report = aggregate_records(&entry.measurements, self.assets.hierarchy(), level, k)?;
            return Ok(Some(AccessPayload::Aggregate(report)));
        }
        let masked = decision.masked_fields();
        let mut records = entry.records;
        for r in records.iter_mut() {
            for field in &masked {
                if let Some(v) = r.get(field).filter(|v| !v.is_null()) {
                    let plain = match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    let token = self.vault.tokenize(&plain, product_id)?;
                    r.insert(field.clone(), Value::String(token));
                }
            }
        }
        Ok(Some(AccessPayload::Records(records)))
    }

    fn finish_decision(
        &mut self,
        product_id: &str,
        actor: &str,
        action: AuditAction,
        mut decision: Decision,
        now: DateTime<Utc>,
        note: String,
    ) -> Result<AccessResult, BoundaryError> {
        let mut payload = None;
        let mut pending = None;
        match decision.outcome {
            Outcome::Allow => payload = self.obligated_payload(product_id, &mut decision)?,
            Outcome::Escalate => {
                let ticket = format!("esc-{:06}", self.notifications.len());
                let steward = self.product(product_id)?.definition.steward.clone();
                self.notify(now, &steward, "escalation", format!("{ticket}: {actor} requests {product_id}"));
                pending = Some(ticket);
            }
            Outcome::Deny => {}
        }
        self.count_decision(&decision);
        let mut reason = reasons_text(&decision);
        if !note.is_empty() {
            reason = if reason.is_empty() { note } else { format!("{reason}; {note}") };
        }
        let audit_index = self.record(AuditEntry::new(
            now,
            actor,
            action,
            product_id,
            &format!("{:?}", decision.outcome),
            reason,
        ))?;
        Ok(AccessResult {
            decision,
            payload,
            pending,
            audit_index,
        })
    }

    /// Access boundary: evaluates the composed policy on the requester's
    /// attributes and the product's metadata, applies obligations on Allow,
    /// and logs every outcome.
    pub fn authorize_access(&mut self, req: AccessRequest) -> Result<AccessResult, BoundaryError> {
        let entry = self.product(&req.product_id)?;
        let mut areq = self.product_request(entry, "access", req.timestamp);
        areq.subject = req.subject.clone();
        areq.subject.insert("id".into(), AttrValue::Str(req.requester.clone()));
        areq.env.extend(req.env.clone());
        let decision = evaluate_request(&self.effective, &areq)?;
        self.finish_decision(&req.product_id, &req.requester, AuditAction::Access, decision, req.timestamp, String::new())
    }

    /// External sharing boundary: purpose declaration, residency, then the
    /// composed policy with the purpose and destination in the environment.
    pub fn export_external(&mut self, req: ExportRequest) -> Result<ExportResult, BoundaryError> {
        let entry = self.product(&req.product_id)?.clone();
        let resource = req.product_id.clone();
        let purpose = req.purpose.as_deref().map(str::trim).filter(|p| !p.is_empty());
        let Some(purpose) = purpose else {
            self.decisions.deny += 1;
            self.record(AuditEntry::new(req.timestamp, &req.party, AuditAction::Export, &resource, "Deny", "no purpose declared"))?;
            return Err(BoundaryError::MissingPurpose(req.product_id));
        };
        let class = entry.classification();
        if class == Classification::Restricted && entry.home_region.as_deref() != Some(req.destination_region.as_str()) {
            self.decisions.deny += 1;
            let home = entry.home_region.clone().unwrap_or_else(|| "unknown".into());
            let e = BoundaryError::ResidencyViolation {
                product: req.product_id.clone(),
                classification: class.to_string(),
                home,
                destination: req.destination_region.clone(),
            };
            self.record(AuditEntry::new(req.timestamp, &req.party, AuditAction::Export, &resource, "Deny", e.to_string()))?;
            return Err(e);
        }
        let mut areq = self.product_request(&entry, "export", req.timestamp);
        areq.subject = req.subject.clone();
        areq.subject.insert("party".into(), AttrValue::Str(req.party.clone()));
        areq.subject.insert("kind".into(), "external".into());
        areq.env.insert("purpose".into(), AttrValue::Str(purpose.to_string()));
        areq.env.insert("destination".into(), AttrValue::Str(req.destination_region.clone()));
        let decision = evaluate_request(&self.effective, &areq)?;
        let note = format!("purpose {purpose}, destination {}", req.destination_region);
        self.finish_decision(&req.product_id, &req.party, AuditAction::Export, decision, req.timestamp, note)
    }

    /// Noisy record count, charged to the product's privacy budget.
    pub fn private_count(&mut self, product_id: &str, epsilon: f64) -> Result<f64, BoundaryError> {
        let n = self.product(product_id)?.records.len() as f64;
        let mut rng = self.op_rng();
        let budget = self
            .budgets
            .get_mut(product_id)
            .ok_or_else(|| BoundaryError::UnknownProduct(product_id.to_string()))?;
        Ok(dp_query("count", n, 1.0, epsilon, budget, &mut rng)?)
    }
}
