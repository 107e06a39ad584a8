//! Ingestion boundary: admission, validation, policy, storage or quarantine.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AuditAction, AuditEntry, BoundaryError, Fabric, GOVERNANCE_OFFICE};
use crate::asset_registry::{AssetError, AssetId};
use crate::attrs::{AttrMap, AttrValue};
use crate::contract::{ContractRef, DataContract, FieldType};
use crate::mapping::{
    apply_mapping, normalize_timestamp, CanonicalMeasurement, LineageStep, MappingError, MappingInput,
    RawSignal,
};
use crate::policy::{AttributeRequest, Outcome, Reason};
use crate::privacy::CatalogEntry;
use crate::quality::Observation;
use crate::validation::{Severity, Violation, ViolationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryMessage {
    pub device_id: String,
    pub signal: String,
    /// Measurement under `value`; optional declared `unit`; any other
    /// contract fields alongside.
    pub payload: Map<String, Value>,
    /// Envelope timestamp, used when the mapping reads none from the payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential: Option<String>,
    /// Asset the reading is about; defaults to the device's bound asset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<AssetId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disposition {
    Accept,
    AcceptWithWarnings,
    Quarantine,
    /// Refused at admission; never validated.
    Reject,
}

impl Disposition {
    pub fn from_violations(violations: &[Violation]) -> Disposition {
        match violations.iter().map(|v| v.severity).max() {
            Some(Severity::Critical) => Disposition::Quarantine,
            Some(Severity::Warning) => Disposition::AcceptWithWarnings,
            _ => Disposition::Accept,
        }
    }

    pub fn is_stored(self) -> bool {
        matches!(self, Disposition::Accept | Disposition::AcceptWithWarnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Malformed { detail: String },
    MissingCredential,
    UnknownDevice,
    BadCredential,
    DeviceNotActive { state: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub report_id: u64,
    pub device_id: String,
    pub signal: String,
    pub sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract: Option<ContractRef>,
    pub violations: Vec<Violation>,
    pub disposition: Disposition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<RejectReason>,
    pub received_at: DateTime<Utc>,
    /// Set when produced by a quarantine requeue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requeue_of: Option<String>,
}

/// What the producer sees: acknowledgement plus a violation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestAck {
    pub report_id: u64,
    pub ack: bool,
    pub disposition: Disposition,
    pub summary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quarantine_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMeasurement {
    pub report_id: u64,
    pub device_id: String,
    pub signal: String,
    pub sequence: u64,
    pub contract: ContractRef,
    /// Canonical record conforming to the contract schema.
    pub record: Map<String, Value>,
    pub measurement: CanonicalMeasurement,
    pub asset: AssetId,
    /// Effective asset attributes at ingestion.
    pub asset_attrs: AttrMap,
    pub catalog: CatalogEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QuarantineStatus {
    Open,
    Requeued { report_id: u64, at: DateTime<Utc> },
    Rejected { report_id: u64, at: DateTime<Utc> },
    Resolved { note: String, at: DateTime<Utc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineItem {
    pub id: String,
    pub message: TelemetryMessage,
    pub report_id: u64,
    pub violations: Vec<Violation>,
    pub steward: String,
    pub quarantined_at: DateTime<Utc>,
    pub attempts: u32,
    #[serde(flatten)]
    pub status: QuarantineStatus,
}

impl QuarantineItem {
    pub fn is_open(&self) -> bool {
        self.status == QuarantineStatus::Open
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct DeviceOrder {
    max_sequence: Option<u64>,
    max_event: Option<DateTime<Utc>>,
    seen: BTreeSet<u64>,
}

/// Everything the pipeline worked out about one message, before any state
/// changes.
struct Assessment {
    contract: Option<ContractRef>,
    violations: Vec<Violation>,
    rejection: Option<RejectReason>,
    steward: String,
    accepted: Option<Prepared>,
    observation: Option<Observation>,
}

struct Prepared {
    record: Map<String, Value>,
    measurement: CanonicalMeasurement,
    asset: AssetId,
    asset_attrs: AttrMap,
    jurisdiction: Option<String>,
}

const VALUE_KEY: &str = "value";
const UNIT_KEY: &str = "unit";

fn round_to(v: f64, precision: f64) -> f64 {
    let digits = -precision.log10();
    if (digits - digits.round()).abs() < 1e-9 && digits >= 0.0 {
        let f = 10f64.powi(digits.round() as i32);
        (v * f).round() / f
    } else {
        (v / precision).round() * precision
    }
}

fn value_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "record",
    }
}

fn timestamp_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn mapping_violation(e: MappingError) -> ViolationKind {
    match e {
        MappingError::UnitMismatch(detail) => ViolationKind::UnitMismatch { detail },
        MappingError::UnmappedSignal(signal) => ViolationKind::UnmappedSignal { signal },
        MappingError::UnparseableTimestamp(raw) => ViolationKind::UnparseableTimestamp { raw },
        other => ViolationKind::Internal {
            detail: other.to_string(),
        },
    }
}

fn has_critical(v: &[Violation]) -> bool {
    v.iter().any(|v| v.severity == Severity::Critical)
}

fn reasons_text(reasons: &[Reason]) -> String {
    let parts: Vec<String> = reasons
        .iter()
        .map(|r| match r {
            Reason::Rule { rule, effect, .. } => format!("{effect:?} by {rule}"),
            Reason::MissingAttribute { rule, path } => format!("{rule} lacks {path}"),
            Reason::NoPermit { layer } => format!("no {layer:?} permit"),
        })
        .collect();
    if parts.is_empty() {
        "no matching permit".into()
    } else {
        parts.join("; ")
    }
}

impl Fabric {
    /// Runs one message through the ingestion boundary. Every call yields
    /// exactly one ValidationReport and at least one audit record; the
    /// producer only sees the ack.
    pub fn ingest_message(&mut self, msg: TelemetryMessage, now: DateTime<Utc>) -> IngestAck {
        self.ingest_observed(msg, now, None)
    }

    /// As `ingest_message`, attaching the true canonical value to the
    /// quality observation (simulation ground truth).
    pub fn ingest_observed(&mut self, msg: TelemetryMessage, now: DateTime<Utc>, truth: Option<f64>) -> IngestAck {
        let mut a = self.assess(&msg, now);
        if let Some(obs) = a.observation.as_mut() {
            obs.true_value = truth;
        }
        let disposition = self.disposition_of(&a);
        self.counts.produced += 1;
        match disposition {
            Disposition::Accept => self.counts.accepted += 1,
            Disposition::AcceptWithWarnings => self.counts.warned += 1,
            Disposition::Quarantine => self.counts.quarantined += 1,
            Disposition::Reject => self.counts.rejected += 1,
        }
        if disposition != Disposition::Reject {
            match a.violations.iter().map(|v| v.severity).max() {
                None => self.severities.clean += 1,
                Some(Severity::Informational) => self.severities.informational += 1,
                Some(Severity::Warning) => self.severities.warning += 1,
                Some(Severity::Critical) => self.severities.critical += 1,
            }
        }
        let (report_id, quarantine_id) = self.commit(&msg, a, disposition, now, None);
        let report = &self.reports[report_id as usize];
        IngestAck {
            report_id,
            ack: disposition.is_stored(),
            disposition,
            summary: report.violations.iter().map(|v| v.to_string()).collect(),
            quarantine_id,
        }
    }

    fn disposition_of(&self, a: &Assessment) -> Disposition {
        if a.rejection.is_some() {
            Disposition::Reject
        } else {
            let d = Disposition::from_violations(&a.violations);
            if d.is_stored() && a.accepted.is_none() {
                Disposition::Quarantine
            } else {
                d
            }
        }
    }

    fn assess(&self, msg: &TelemetryMessage, now: DateTime<Utc>) -> Assessment {
        let mut a = Assessment {
            contract: None,
            violations: Vec::new(),
            rejection: None,
            steward: GOVERNANCE_OFFICE.to_string(),
            accepted: None,
            observation: None,
        };

        // 1. admission
        if msg.device_id.trim().is_empty() || msg.payload.is_empty() {
            a.rejection = Some(RejectReason::Malformed {
                detail: "device id and payload are required".into(),
            });
            return a;
        }
        let Some(secret) = msg.credential.as_deref() else {
            a.rejection = Some(RejectReason::MissingCredential);
            return a;
        };
        match self.assets.check_device_admission(&msg.device_id, secret) {
            Ok(true) => {}
            Ok(false) => {
                let state = self.assets.device(&msg.device_id).map(|d| d.state);
                a.rejection = Some(RejectReason::DeviceNotActive {
                    state: format!("{:?}", state.expect("admitted device exists")),
                });
                return a;
            }
            Err(AssetError::BadCredential(_)) => {
                a.rejection = Some(RejectReason::BadCredential);
                return a;
            }
            Err(_) => {
                a.rejection = Some(RejectReason::UnknownDevice);
                return a;
            }
        }
        let device = self.assets.device(&msg.device_id).expect("admitted device exists");

        // 2. contract fetch
        let Some(contract_id) = self.bindings.get(&msg.signal) else {
            a.violations.push(Violation::new(
                "$signal",
                ViolationKind::UnmappedSignal {
                    signal: msg.signal.clone(),
                },
            ));
            return a;
        };
        let contract: &DataContract = match self.contracts.resolve_contract(contract_id, None, now) {
            Ok(c) => c,
            Err(e) => {
                a.violations.push(Violation::new(
                    "$contract",
                    ViolationKind::Internal { detail: e.to_string() },
                ));
                return a;
            }
        };
        a.contract = Some(contract.reference());
        if let Some(s) = contract.ownership.responsible() {
            a.steward = s.name.clone();
        }

        // mapping and timestamp normalization
        let Some(mapping) = self.mappings.get(&msg.signal) else {
            a.violations.push(Violation::new(
                "$signal",
                ViolationKind::UnmappedSignal {
                    signal: msg.signal.clone(),
                },
            ));
            return a;
        };
        let Some(value_field) = contract.field_for_concept(&mapping.target) else {
            a.violations.push(Violation::new(
                "$contract",
                ViolationKind::Internal {
                    detail: format!("{} has no field for {}", contract.contract_id, mapping.target),
                },
            ));
            return a;
        };
        let asset = msg.asset.clone().unwrap_or_else(|| device.asset_ref.clone());
        let raw_ts = match &mapping.timestamp.field {
            Some(f) => msg.payload.get(f).and_then(timestamp_text),
            None => msg.timestamp.clone(),
        };
        let ts_field = mapping.timestamp.field.clone().unwrap_or_else(|| "$timestamp".into());
        let event_time = match normalize_timestamp(raw_ts.as_deref().unwrap_or(""), &mapping.timestamp, &contract.temporal, now) {
            Ok(v) => {
                if !v.compliant {
                    a.violations.push(Violation::new(
                        &ts_field,
                        ViolationKind::TimestampDrift {
                            drift_s: v.drift_s,
                            max_s: v.allowed_drift_s,
                        },
                    ));
                }
                Some(v.event_time)
            }
            Err(e) => {
                a.violations.push(Violation::new(&ts_field, mapping_violation(e)));
                None
            }
        };

        let mut record = msg.payload.clone();
        record.remove(VALUE_KEY);
        let declared_unit = match record.remove(UNIT_KEY) {
            Some(Value::String(u)) => Some(u),
            Some(other) => Some(other.to_string()),
            None => None,
        };
        if let Some(f) = &mapping.timestamp.field {
            record.remove(f);
        }
        let mut measurement = None;
        match msg.payload.get(VALUE_KEY) {
            None | Some(Value::Null) => {}
            Some(Value::Number(n)) => {
                let raw = RawSignal {
                    signal: msg.signal.clone(),
                    sensor: asset.clone(),
                    value: n.as_f64().unwrap_or(f64::NAN),
                    unit: declared_unit,
                    event_time: event_time.unwrap_or(now),
                    ingestion_time: now,
                };
                match apply_mapping(
                    MappingInput::Raw(&raw),
                    mapping,
                    self.mappings.canonical_unit(&mapping.target),
                ) {
                    Ok(mut m) => {
                        let sem = contract.semantics.get(value_field);
                        if let Some(p) = sem.and_then(|s| s.precision) {
                            m.value = round_to(m.value, p);
                        }
                        let v = match contract.schema.field(value_field).map(|f| f.ty) {
                            Some(FieldType::Integer) if m.value.fract() == 0.0 => Value::from(m.value as i64),
                            _ => serde_json::Number::from_f64(m.value).map_or(Value::Null, Value::Number),
                        };
                        record.insert(value_field.to_string(), v);
                        m.lineage.push(LineageStep {
                            transform: format!("contract:{}", contract.contract_id),
                            version: contract.version.major as u32,
                            note: Some(contract.version.to_string()),
                        });
                        measurement = Some(m);
                    }
                    Err(e) => a.violations.push(Violation::new(value_field, mapping_violation(e))),
                }
            }
            Some(other) => {
                a.violations.push(Violation::new(
                    value_field,
                    ViolationKind::TypeMismatch {
                        expected: "number".into(),
                        found: value_kind(other).into(),
                    },
                ));
            }
        }

        // 3-4. schema and range validation
        let schema_violations = contract.schema.validate(&record);
        let already: BTreeSet<String> = a.violations.iter().map(|v| v.field.clone()).collect();
        a.violations.extend(schema_violations.into_iter().filter(|v| !already.contains(&v.field)));
        for (field, sem) in &contract.semantics {
            let (Some(p), true) = (sem.precision, field != value_field) else {
                continue;
            };
            if let Some(v) = record.get(field).and_then(Value::as_f64) {
                let steps = v / p;
                if (steps - steps.round()).abs() > 1e-6 {
                    a.violations.push(Violation::new(
                        field,
                        ViolationKind::PrecisionExceeded { value: v, precision: p },
                    ));
                }
            }
        }

        // 5. referential integrity
        let effective = match self.assets.resolve_effective_attributes(&asset) {
            Ok(e) => Some(e),
            Err(_) => {
                a.violations.push(Violation::new(
                    "$asset",
                    ViolationKind::ReferentialIntegrity { asset: asset.0.clone() },
                ));
                None
            }
        };

        // per-device ordering
        if let Some(t) = event_time {
            let order = self.order.get(&msg.device_id);
            if order.is_some_and(|o| o.seen.contains(&msg.sequence)) {
                a.violations.push(Violation::new(
                    "$sequence",
                    ViolationKind::Duplicate { sequence: msg.sequence },
                ));
            } else if let Some(o) = order {
                let window = Duration::milliseconds((contract.temporal.reorder_window_s * 1000.0) as i64);
                let behind_seq = o.max_sequence.is_some_and(|m| msg.sequence < m);
                let behind_time = o.max_event.is_some_and(|m| t + window < m);
                if behind_seq && behind_time {
                    a.violations.push(Violation::new(
                        "$sequence",
                        ViolationKind::OutOfOrder {
                            sequence: msg.sequence,
                            behind: o.max_sequence.unwrap_or(0) - msg.sequence,
                        },
                    ));
                }
            }
        }

        // 6. policy
        if !has_critical(&a.violations) {
            if let Some(eff) = &effective {
                let mut req = AttributeRequest::new("ingest", now, contract.classification);
                req.subject.insert("device_id".into(), AttrValue::Str(msg.device_id.clone()));
                req.subject.insert("kind".into(), "device".into());
                req.subject.insert("state".into(), AttrValue::Str(format!("{:?}", device.state)));
                req.resource.insert("contract_id".into(), AttrValue::Str(contract.contract_id.clone()));
                req.resource.insert("signal".into(), AttrValue::Str(msg.signal.clone()));
                req.resource.insert("concept".into(), AttrValue::Str(mapping.target.clone()));
                req.asset = eff.to_policy_attrs();
                req.env.insert("channel".into(), "edge".into());
                let decision = self.effective.evaluate(&req, "ingest");
                if decision.outcome != Outcome::Allow {
                    a.violations.push(Violation::new(
                        "$policy",
                        ViolationKind::PolicyDenied {
                            reason: format!("{:?}: {}", decision.outcome, reasons_text(&decision.reasons)),
                        },
                    ));
                }
            }
        }

        // residency routing
        let jurisdiction = effective.as_ref().and_then(|e| e.jurisdiction().map(str::to_string));
        if effective.is_some() && !has_critical(&a.violations) && crate::privacy::route_partition(jurisdiction.as_deref()).is_err() {
            a.violations.push(Violation::new(
                "$asset.jurisdiction",
                ViolationKind::UnknownJurisdiction { asset: asset.0.clone() },
            ));
        }

        let worst_critical = has_critical(&a.violations);
        let label = |k: &str| a.violations.iter().any(|v| v.kind.label() == k);
        a.observation = Some(Observation {
            event_time: event_time.unwrap_or(now),
            ingestion_time: now,
            value: measurement.as_ref().map(|m| m.value),
            true_value: None,
            in_range: !label("out_of_range"),
            consistent: !(label("referential_integrity") || label("duplicate") || label("out_of_order")),
            valid: !worst_critical,
            stored: !worst_critical && measurement.is_some(),
        });
        if !worst_critical {
            if let (Some(m), Some(eff)) = (measurement, effective) {
                a.accepted = Some(Prepared {
                    record,
                    measurement: m,
                    asset,
                    asset_attrs: eff.to_policy_attrs(),
                    jurisdiction,
                });
            }
        }
        a
    }

    /// Applies an assessment: report, audit, then store or quarantine.
    fn commit(
        &mut self,
        msg: &TelemetryMessage,
        a: Assessment,
        disposition: Disposition,
        now: DateTime<Utc>,
        requeue_of: Option<&str>,
    ) -> (u64, Option<String>) {
        let report_id = self.reports.len() as u64;
        let summary = match (&a.rejection, a.violations.is_empty()) {
            (Some(r), _) => format!("{r:?}"),
            (None, true) => String::new(),
            (None, false) => a.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        };
        self.reports.push(ValidationReport {
            report_id,
            device_id: msg.device_id.clone(),
            signal: msg.signal.clone(),
            sequence: msg.sequence,
            contract: a.contract.clone(),
            violations: a.violations.clone(),
            disposition,
            rejection: a.rejection.clone(),
            received_at: now,
            requeue_of: requeue_of.map(str::to_string),
        });
        let actor = if msg.device_id.trim().is_empty() { "unknown-device" } else { &msg.device_id };
        let resource = format!("{}#{}", msg.signal, msg.sequence);
        let resource = if msg.signal.is_empty() { format!("report#{report_id}") } else { resource };
        self.record(AuditEntry::new(
            now,
            actor,
            AuditAction::Ingest,
            &resource,
            &format!("{disposition:?}"),
            summary.clone(),
        ))
        .expect("ingest audit entries are complete");
        if a.rejection.is_none() && requeue_of.is_none() {
            if let Some(obs) = a.observation {
                self.observations.entry(msg.signal.clone()).or_default().push(obs);
            }
        }

        let mut quarantine_id = None;
        match disposition {
            Disposition::Accept | Disposition::AcceptWithWarnings => {
                let p = a.accepted.expect("stored dispositions carry a prepared record");
                let order = self.order.entry(msg.device_id.clone()).or_default();
                order.seen.insert(msg.sequence);
                order.max_sequence = order.max_sequence.max(Some(msg.sequence));
                order.max_event = order.max_event.max(Some(p.measurement.event_time));
                let catalog = self
                    .partitions
                    .store(&p.measurement, p.jurisdiction.as_deref())
                    .expect("jurisdiction checked before storage");
                self.store.push(StoredMeasurement {
                    report_id,
                    device_id: msg.device_id.clone(),
                    signal: msg.signal.clone(),
                    sequence: msg.sequence,
                    contract: a.contract.expect("stored records have a contract"),
                    record: p.record,
                    measurement: p.measurement,
                    asset: p.asset,
                    asset_attrs: p.asset_attrs,
                    catalog,
                    warnings: a
                        .violations
                        .into_iter()
                        .filter(|v| v.severity != Severity::Critical)
                        .collect(),
                });
            }
            Disposition::Quarantine => {
                if requeue_of.is_none() {
                    let id = format!("q{:06}", self.quarantine.len());
                    self.notify(
                        now,
                        &a.steward,
                        "quarantine",
                        format!("{id}: {} from {} quarantined: {summary}", resource, msg.device_id),
                    );
                    self.quarantine.push(QuarantineItem {
                        id: id.clone(),
                        message: msg.clone(),
                        report_id,
                        violations: a.violations,
                        steward: a.steward,
                        quarantined_at: now,
                        attempts: 1,
                        status: QuarantineStatus::Open,
                    });
                    quarantine_id = Some(id);
                }
            }
            Disposition::Reject => {}
        }
        (report_id, quarantine_id)
    }

    pub fn quarantine_list(&self, open_only: bool) -> Vec<&QuarantineItem> {
        self.quarantine.iter().filter(|q| !open_only || q.is_open()).collect()
    }

    fn quarantine_index(&self, id: &str) -> Result<usize, BoundaryError> {
        self.quarantine
            .iter()
            .position(|q| q.id == id)
            .ok_or_else(|| BoundaryError::UnknownQuarantineId(id.to_string()))
    }

    /// Re-runs the pipeline on a quarantined message. A message that now
    /// passes is stored and the item closes; one that still fails stays open.
    pub fn quarantine_requeue(&mut self, id: &str, now: DateTime<Utc>) -> Result<Disposition, BoundaryError> {
        let idx = self.quarantine_index(id)?;
        if !self.quarantine[idx].is_open() {
            return Err(BoundaryError::QuarantineClosed(id.to_string()));
        }
        let msg = self.quarantine[idx].message.clone();
        let a = self.assess(&msg, now);
        let violations = a.violations.clone();
        let disposition = self.disposition_of(&a);
        let (report_id, _) = self.commit(&msg, a, disposition, now, Some(id));
        let item = &mut self.quarantine[idx];
        item.attempts += 1;
        match disposition {
            Disposition::Quarantine => item.violations = violations,
            Disposition::Reject => item.status = QuarantineStatus::Rejected { report_id, at: now },
            _ => item.status = QuarantineStatus::Requeued { report_id, at: now },
        }
        Ok(disposition)
    }

    /// Closes an item with the steward's note.
    pub fn quarantine_resolve(&mut self, id: &str, note: &str, now: DateTime<Utc>) -> Result<(), BoundaryError> {
        let idx = self.quarantine_index(id)?;
        if !self.quarantine[idx].is_open() {
            return Err(BoundaryError::QuarantineClosed(id.to_string()));
        }
        let steward = self.quarantine[idx].steward.clone();
        self.quarantine[idx].status = QuarantineStatus::Resolved {
            note: note.to_string(),
            at: now,
        };
        self.record(AuditEntry::new(now, &steward, AuditAction::Quarantine, id, "Resolved", note))?;
        Ok(())
    }

    /// (opened, closed) for every item closed by a steward or a requeue.
    pub fn quarantine_resolutions(&self) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
        self.quarantine
            .iter()
            .filter_map(|q| match &q.status {
                QuarantineStatus::Open => None,
                QuarantineStatus::Requeued { at, .. }
                | QuarantineStatus::Rejected { at, .. }
                | QuarantineStatus::Resolved { at, .. } => Some((q.quarantined_at, *at)),
            })
            .collect()
    }

    /// Reports per message: the first-pass report of each produced message.
    pub fn first_pass_reports(&self) -> impl Iterator<Item = &ValidationReport> {
        self.reports.iter().filter(|r| r.requeue_of.is_none())
    }

    /// Report counts by disposition over first passes.
    pub fn disposition_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for r in self.first_pass_reports() {
            *out.entry(format!("{:?}", r.disposition)).or_insert(0) += 1;
        }
        out
    }
}
