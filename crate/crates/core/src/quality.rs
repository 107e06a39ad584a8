//! Quality dimensions, composite scores, SLA evaluation, remediation and
//! governance reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset_registry::AssetId;
use crate::contract::{DataContract, Raci};
use crate::mapping::LineageStep;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QualityError {
    #[error("window {0} has no expected slots and no observations")]
    EmptyWindow(String),
    #[error("sample fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("weights must be non-negative and sum to 1, got sum {0}")]
    BadWeights(f64),
    #[error("contract {0} has no quality SLA")]
    MissingSla(String),
    #[error("unknown issue class {0:?}")]
    UnknownIssueClass(String),
    #[error("remediation not applicable: {0}")]
    NotApplicable(String),
}

/// Default tumbling window length in simulated seconds.
pub const DEFAULT_WINDOW_S: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Completeness,
    Accuracy,
    Freshness,
    Consistency,
    Validity,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Completeness,
        Dimension::Accuracy,
        Dimension::Freshness,
        Dimension::Consistency,
        Dimension::Validity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Completeness => "completeness",
            Dimension::Accuracy => "accuracy",
            Dimension::Freshness => "freshness",
            Dimension::Consistency => "consistency",
            Dimension::Validity => "validity",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub completeness: f64,
    pub accuracy: f64,
    pub freshness: f64,
    pub consistency: f64,
    pub validity: f64,
}

impl DimensionScores {
    pub fn uniform(v: f64) -> Self {
        DimensionScores {
            completeness: v,
            accuracy: v,
            freshness: v,
            consistency: v,
            validity: v,
        }
    }

    pub fn get(&self, d: Dimension) -> f64 {
        match d {
            Dimension::Completeness => self.completeness,
            Dimension::Accuracy => self.accuracy,
            Dimension::Freshness => self.freshness,
            Dimension::Consistency => self.consistency,
            Dimension::Validity => self.validity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights(pub DimensionScores);

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights(DimensionScores {
            completeness: 0.3,
            accuracy: 0.2,
            freshness: 0.2,
            consistency: 0.15,
            validity: 0.15,
        })
    }
}

impl QualityWeights {
    pub fn validate(&self) -> Result<(), QualityError> {
        let ws: Vec<f64> = Dimension::ALL.iter().map(|d| self.0.get(*d)).collect();
        let sum: f64 = ws.iter().sum();
        if ws.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(QualityError::BadWeights(sum));
        }
        Ok(())
    }
}

pub fn composite_score(dims: &DimensionScores, weights: &QualityWeights) -> Result<f64, QualityError> {
    weights.validate()?;
    let c: f64 = Dimension::ALL.iter().map(|d| weights.0.get(*d) * dims.get(*d)).sum();
    Ok(c.clamp(0.0, 1.0))
}

/// One message as the monitor sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub event_time: DateTime<Utc>,
    pub ingestion_time: DateTime<Utc>,
    #[serde(default)]
    pub value: Option<f64>,
    /// Generator's true value, when known.
    #[serde(default)]
    pub true_value: Option<f64>,
    /// Value inside the contract's declared range.
    pub in_range: bool,
    /// Referential checks passed.
    pub consistent: bool,
    /// Contract validation passed (no Critical violation).
    pub valid: bool,
    /// Counted toward completeness (stored, not quarantined or rejected).
    #[serde(default = "yes")]
    pub stored: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamWindow {
    pub stream_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Scheduled operating time in the window; defaults to the whole window.
    #[serde(default)]
    pub scheduled_s: Option<f64>,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyBasis {
    DeclaredRange,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub stream_id: String,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub dims: DimensionScores,
    pub composite: f64,
    pub requested_fraction: f64,
    pub sample_fraction: f64,
    pub accuracy_basis: AccuracyBasis,
    pub expected_slots: usize,
    pub observations: usize,
}

/// Sample size for estimating a proportion within ±3 points at 95%
/// confidence, with finite-population correction.
pub fn min_sample_size(population: usize) -> usize {
    if population == 0 {
        return 0;
    }
    let z: f64 = 1.96;
    let e: f64 = 0.03;
    let n0 = z * z * 0.25 / (e * e);
    let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
    (n.ceil() as usize).min(population)
}

fn sample_indices<R: Rng + ?Sized>(rng: &mut R, population: usize, fraction: f64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..population).collect();
    }
    let wanted = ((population as f64 * fraction).ceil() as usize).max(min_sample_size(population));
    if wanted >= population {
        return (0..population).collect();
    }
    let mut idx = sample(rng, population, wanted).into_vec();
    idx.sort_unstable();
    idx
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores a window. Completeness samples expected slots; the other
/// dimensions sample observations. The fraction actually used can exceed
/// the requested one when the requested sample would be too small to
/// estimate within ±0.03.
pub fn compute_dimension_scores<R: Rng + ?Sized>(
    window: &StreamWindow,
    contract: &DataContract,
    sample_fraction: f64,
    weights: &QualityWeights,
    rng: &mut R,
) -> Result<QualityScore, QualityError> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(QualityError::BadFraction(sample_fraction));
    }
    let rate = contract.temporal.sample_rate_hz;
    let span_s = (window.end - window.start).num_milliseconds() as f64 / 1000.0;
    let scheduled = window.scheduled_s.unwrap_or(span_s).clamp(0.0, span_s.max(0.0));
    let expected = (rate * scheduled).round() as usize;
    if expected == 0 && window.observations.is_empty() {
        return Err(QualityError::EmptyWindow(window.stream_id.clone()));
    }

    let filled: BTreeSet<usize> = window
        .observations
        .iter()
        .filter(|o| o.stored && o.event_time >= window.start && o.event_time < window.end)
        .map(|o| {
            let dt = (o.event_time - window.start).num_milliseconds() as f64 / 1000.0;
            (dt * rate).floor() as usize
        })
        .filter(|s| *s < expected)
        .collect();
    let slots = sample_indices(rng, expected, sample_fraction);
    let completeness = ratio(slots.iter().filter(|s| filled.contains(s)).count(), slots.len());

    let obs_idx = sample_indices(rng, window.observations.len(), sample_fraction);
    let sampled: Vec<&Observation> = obs_idx.iter().map(|i| &window.observations[*i]).collect();
    let sla = contract.quality_sla.as_ref();
    let truth = !sampled.is_empty() && sampled.iter().all(|o| o.true_value.is_some() && o.value.is_some());
    let accurate = sampled
        .iter()
        .filter(|o| {
            if truth {
                let dev = sla.map_or(f64::INFINITY, |s| s.accuracy_max_deviation);
                (o.value.unwrap() - o.true_value.unwrap()).abs() <= dev
            } else {
                o.in_range
            }
        })
        .count();
    let max_age = sla.map_or(f64::INFINITY, |s| s.freshness_max_age_s);
    let fresh = sampled
        .iter()
        .filter(|o| (o.ingestion_time - o.event_time).num_milliseconds() as f64 / 1000.0 <= max_age)
        .count();
    let dims = DimensionScores {
        completeness,
        accuracy: ratio(accurate, sampled.len()),
        freshness: ratio(fresh, sampled.len()),
        consistency: ratio(sampled.iter().filter(|o| o.consistent).count(), sampled.len()),
        validity: ratio(sampled.iter().filter(|o| o.valid).count(), sampled.len()),
    };
    let used = if expected + window.observations.len() == 0 {
        1.0
    } else {
        (slots.len() + sampled.len()) as f64 / (expected + window.observations.len()) as f64
    };
    Ok(QualityScore {
        stream_id: window.stream_id.clone(),
        window_start: window.start,
        window_end: window.end,
        composite: composite_score(&dims, weights)?,
        dims,
        requested_fraction: sample_fraction,
        sample_fraction: used,
        accuracy_basis: if truth {
            AccuracyBasis::GroundTruth
        } else {
            AccuracyBasis::DeclaredRange
        },
        expected_slots: expected,
        observations: window.observations.len(),
    })
}

/// Splits observations into tumbling windows of `window_s` seconds from
/// `start` up to `end`.
pub fn tumbling_windows(
    stream_id: &str,
    observations: &[Observation],
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    window_s: i64,
) -> Vec<StreamWindow> {
    let mut out = Vec::new();
    let mut ws = start;
    while ws < end {
        let we = (ws + Duration::seconds(window_s)).min(end);
        out.push(StreamWindow {
            stream_id: stream_id.to_string(),
            start: ws,
            end: we,
            scheduled_s: None,
            observations: observations
                .iter()
                .filter(|o| o.event_time >= ws && o.event_time < we)
                .cloned()
                .collect(),
        });
        ws = we;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaBreach {
    pub product_id: String,
    pub dimension: Dimension,
    pub threshold: f64,
    pub observed: f64,
    pub window_start: DateTime<Utc>,
    pub detected_at: DateTime<Utc>,
    pub routed_to: String,
    #[serde(default)]
    pub resolved_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub product_id: String,
    pub dimension: Dimension,
    pub to: String,
    pub accountable: Vec<String>,
    pub consulted: Vec<String>,
    pub informed: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaEvaluation {
    pub product_id: String,
    pub breaches: Vec<SlaBreach>,
    pub alerts: Vec<Alert>,
    /// Dimensions passing but within 0.02 of their threshold.
    pub approaching: Vec<Dimension>,
}

pub fn sla_thresholds(contract: &DataContract) -> Result<DimensionScores, QualityError> {
    let sla = contract
        .quality_sla
        .as_ref()
        .ok_or_else(|| QualityError::MissingSla(contract.contract_id.clone()))?;
    Ok(DimensionScores {
        completeness: sla.completeness,
        accuracy: sla.min_accuracy,
        freshness: sla.min_freshness,
        consistency: sla.consistency,
        validity: sla.min_validity,
    })
}

/// A dimension breaches when strictly below its threshold; alerts go to the
/// contract's Responsible steward.
pub fn evaluate_sla(
    product_id: &str,
    contract: &DataContract,
    score: &QualityScore,
    detected_at: DateTime<Utc>,
) -> Result<SlaEvaluation, QualityError> {
    let th = sla_thresholds(contract)?;
    let names = |r: Raci| contract.ownership.with_role(r).map(|s| s.name.clone()).collect::<Vec<_>>();
    let responsible = contract
        .ownership
        .responsible()
        .map(|s| s.name.clone())
        .unwrap_or_else(|| contract.ownership.domain.clone());
    let mut eval = SlaEvaluation {
        product_id: product_id.to_string(),
        breaches: Vec::new(),
        alerts: Vec::new(),
        approaching: Vec::new(),
    };
    for d in Dimension::ALL {
        let (observed, threshold) = (score.dims.get(d), th.get(d));
        if observed < threshold {
            eval.breaches.push(SlaBreach {
                product_id: product_id.to_string(),
                dimension: d,
                threshold,
                observed,
                window_start: score.window_start,
                detected_at,
                routed_to: responsible.clone(),
                resolved_at: None,
            });
            eval.alerts.push(Alert {
                product_id: product_id.to_string(),
                dimension: d,
                to: responsible.clone(),
                accountable: names(Raci::Accountable),
                consulted: names(Raci::Consulted),
                informed: names(Raci::Informed),
                message: format!("{d} {observed:.4} below SLA {threshold:.4}"),
            });
        } else if observed < threshold + 0.02 {
            eval.approaching.push(d);
        }
    }
    Ok(eval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueClass {
    Automated,
    SemiAutomated,
    Manual,
}

impl FromStr for IssueClass {
    type Err = QualityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "automated" => Ok(IssueClass::Automated),
            "semiautomated" => Ok(IssueClass::SemiAutomated),
            "manual" => Ok(IssueClass::Manual),
            _ => Err(QualityError::UnknownIssueClass(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub at: DateTime<Utc>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum IssueKind {
    MissingSample {
        sensor: AssetId,
        at: DateTime<Utc>,
        before: Sample,
        after: Sample,
    },
    DuplicateSamples {
        sensor: AssetId,
        sequence: u64,
        copies: usize,
    },
    TimestampSkew {
        sensor: AssetId,
        at: DateTime<Utc>,
        skew_s: f64,
    },
    Outlier {
        sensor: AssetId,
        sample: Sample,
        expected: f64,
    },
    SustainedDegradation {
        stream: String,
        dimension: Dimension,
        windows: usize,
        observed: f64,
    },
    ConsistencyBreak {
        stream: String,
        detail: String,
    },
}

impl IssueKind {
    /// Default triage class.
    pub fn default_class(&self) -> IssueClass {
        match self {
            IssueKind::MissingSample { .. }
            | IssueKind::DuplicateSamples { .. }
            | IssueKind::TimestampSkew { .. }
            | IssueKind::Outlier { .. } => IssueClass::Automated,
            IssueKind::SustainedDegradation { .. } => IssueClass::SemiAutomated,
            IssueKind::ConsistencyBreak { .. } => IssueClass::Manual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityIssue {
    pub kind: IssueKind,
    pub class: IssueClass,
    /// Steward to route to for non-automated work.
    pub steward: String,
}

impl QualityIssue {
    pub fn new(kind: IssueKind, steward: &str) -> Self {
        QualityIssue {
            class: kind.default_class(),
            kind,
            steward: steward.to_string(),
        }
    }
}

/// Value derived by automated remediation. Originals stay untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValue {
    pub sensor: AssetId,
    pub at: DateTime<Utc>,
    pub value: f64,
    pub lineage: Vec<LineageStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkStatus {
    Open,
    Investigating,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RemediationOutcome {
    Applied {
        action: String,
        derived: Vec<DerivedValue>,
    },
    Routed {
        to: String,
        diagnostics: Vec<String>,
    },
    WorkItem {
        owner: String,
        status: WorkStatus,
        root_cause: Option<String>,
        summary: String,
    },
}

fn step(action: &str, note: String) -> LineageStep {
    LineageStep {
        transform: format!("remediation:{action}"),
        version: 1,
        note: Some(note),
    }
}

pub fn remediate(issue: &QualityIssue) -> Result<RemediationOutcome, QualityError> {
    match issue.class {
        IssueClass::Automated => automated(&issue.kind),
        IssueClass::SemiAutomated => Ok(RemediationOutcome::Routed {
            to: issue.steward.clone(),
            diagnostics: diagnostics(&issue.kind),
        }),
        IssueClass::Manual => Ok(RemediationOutcome::WorkItem {
            owner: issue.steward.clone(),
            status: WorkStatus::Open,
            root_cause: None,
            summary: summary(&issue.kind),
        }),
    }
}

fn automated(kind: &IssueKind) -> Result<RemediationOutcome, QualityError> {
    match kind {
        IssueKind::MissingSample { sensor, at, before, after } => {
            if !(before.at < *at && *at < after.at) {
                return Err(QualityError::NotApplicable("gap is not between its neighbours".into()));
            }
            let span = (after.at - before.at).num_milliseconds() as f64;
            let frac = (*at - before.at).num_milliseconds() as f64 / span;
            let value = before.value + (after.value - before.value) * frac;
            Ok(RemediationOutcome::Applied {
                action: "interpolate".into(),
                derived: vec![DerivedValue {
                    sensor: sensor.clone(),
                    at: *at,
                    value,
                    lineage: vec![step(
                        "interpolate",
                        format!("linear between {} and {}", before.at.to_rfc3339(), after.at.to_rfc3339()),
                    )],
                }],
            })
        }
        IssueKind::DuplicateSamples { sensor, sequence, copies } => Ok(RemediationOutcome::Applied {
            action: "deduplicate".into(),
            derived: vec![DerivedValue {
                sensor: sensor.clone(),
                at: DateTime::<Utc>::UNIX_EPOCH,
                value: *copies as f64,
                lineage: vec![step("deduplicate", format!("sequence {sequence} kept once of {copies}"))],
            }],
        }),
        IssueKind::TimestampSkew { sensor, at, skew_s } => {
            let corrected = *at - Duration::milliseconds((skew_s * 1000.0).round() as i64);
            Ok(RemediationOutcome::Applied {
                action: "timestamp_correction".into(),
                derived: vec![DerivedValue {
                    sensor: sensor.clone(),
                    at: corrected,
                    value: *skew_s,
                    lineage: vec![step("timestamp_correction", format!("shifted by -{skew_s}s"))],
                }],
            })
        }
        IssueKind::Outlier { sensor, sample, expected } => Ok(RemediationOutcome::Applied {
            action: "suppress_outlier".into(),
            derived: vec![DerivedValue {
                sensor: sensor.clone(),
                at: sample.at,
                value: *expected,
                lineage: vec![step("suppress_outlier", format!("replaced {} with {expected}", sample.value))],
            }],
        }),
        other => Err(QualityError::NotApplicable(format!("{other:?} needs a steward"))),
    }
}

fn diagnostics(kind: &IssueKind) -> Vec<String> {
    match kind {
        IssueKind::SustainedDegradation { stream, dimension, windows, observed } => vec![
            format!("{dimension} at {observed:.3} on {stream} for {windows} consecutive windows"),
            "check device connectivity and gateway buffers".into(),
            "compare sensor sample rate with contract".into(),
            "review recent firmware or configuration changes".into(),
        ],
        other => vec![summary(other)],
    }
}

fn summary(kind: &IssueKind) -> String {
    match kind {
        IssueKind::ConsistencyBreak { stream, detail } => format!("consistency break on {stream}: {detail}"),
        IssueKind::SustainedDegradation { stream, dimension, .. } => format!("{dimension} degradation on {stream}"),
        other => format!("{other:?}"),
    }
}

/// Ground truth for detection latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub fault: String,
    pub occurred_at: DateTime<Utc>,
    #[serde(default)]
    pub detected_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub allow: u64,
    pub deny: u64,
    pub escalate: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub clean: u64,
    pub informational: u64,
    pub warning: u64,
    pub critical: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GovernanceInputs {
    pub detections: Vec<DetectionEvent>,
    pub breaches: Vec<SlaBreach>,
    /// (stream, window start, breached) for every SLA evaluation.
    pub sla_evaluations: Vec<(String, DateTime<Utc>, bool)>,
    pub decisions: DecisionCounts,
    /// Messages by worst violation severity.
    pub severities: SeverityCounts,
    pub streams_total: u64,
    pub streams_governed: u64,
    /// (opened, closed) times of resolved quarantine items.
    #[serde(default)]
    pub resolutions: Vec<(DateTime<Utc>, DateTime<Utc>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub allow: f64,
    pub deny: f64,
    pub escalate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceReport {
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub mttd_s: Option<f64>,
    pub mttr_s: Option<f64>,
    pub undetected: Vec<String>,
    pub decision_distribution: Distribution,
    pub failure_rates: BTreeMap<String, f64>,
    pub sla_adherence: f64,
    pub contract_coverage: f64,
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn secs(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 1000.0
}

pub fn governance_report(start: DateTime<Utc>, end: DateTime<Utc>, inputs: &GovernanceInputs) -> GovernanceReport {
    let in_window = |t: DateTime<Utc>| t >= start && t < end;
    let detections: Vec<&DetectionEvent> = inputs.detections.iter().filter(|d| in_window(d.occurred_at)).collect();
    let mttd = mean(
        &detections
            .iter()
            .filter_map(|d| d.detected_at.map(|t| secs(t - d.occurred_at)))
            .collect::<Vec<_>>(),
    );
    let undetected = detections
        .iter()
        .filter(|d| d.detected_at.is_none())
        .map(|d| d.fault.clone())
        .collect();
    let mut repair: Vec<f64> = inputs
        .breaches
        .iter()
        .filter(|b| in_window(b.detected_at))
        .filter_map(|b| b.resolved_at.map(|r| secs(r - b.detected_at)))
        .collect();
    repair.extend(
        inputs
            .resolutions
            .iter()
            .filter(|(o, _)| in_window(*o))
            .map(|(o, c)| secs(*c - *o)),
    );
    let d = inputs.decisions;
    let total = (d.allow + d.deny + d.escalate) as f64;
    let frac = |n: u64| if total == 0.0 { 0.0 } else { n as f64 / total };
    let s = inputs.severities;
    let msgs = (s.clean + s.informational + s.warning + s.critical) as f64;
    let rate = |n: u64| if msgs == 0.0 { 0.0 } else { n as f64 / msgs };
    let evals: Vec<bool> = inputs
        .sla_evaluations
        .iter()
        .filter(|(_, t, _)| in_window(*t))
        .map(|(_, _, b)| *b)
        .collect();
    GovernanceReport {
        window_start: start,
        window_end: end,
        mttd_s: mttd,
        mttr_s: mean(&repair),
        undetected,
        decision_distribution: Distribution {
            allow: frac(d.allow),
            deny: frac(d.deny),
            escalate: frac(d.escalate),
        },
        failure_rates: BTreeMap::from([
            ("critical".to_string(), rate(s.critical)),
            ("warning".to_string(), rate(s.warning)),
            ("informational".to_string(), rate(s.informational)),
        ]),
        sla_adherence: if evals.is_empty() {
            1.0
        } else {
            evals.iter().filter(|b| !**b).count() as f64 / evals.len() as f64
        },
        contract_coverage: if inputs.streams_total == 0 {
            1.0
        } else {
            inputs.streams_governed as f64 / inputs.streams_total as f64
        },
    }
}
