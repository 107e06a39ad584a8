//! Scenarios, fault injection and the simulation loop.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use govfabric_core::boundary::{Disposition, Fabric, IngestCounts, TelemetryMessage, ValidationReport};
use govfabric_core::quality::{governance_report, DetectionEvent, Dimension, GovernanceReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::fleet::{generate_fleet, FleetArtifacts, FleetSpec, StreamSpec};
use crate::SimError;

/// Transport latency between event and ingestion.
const LATENCY_MS: i64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FaultKind {
    /// The device starts reporting in the other dialect's unit without saying so.
    UnitDrift,
    Dropout { rate: f64 },
    Duplication { rate: f64 },
    TimestampCorruption { skew_s: f64 },
    /// An extra payload field appears with no contract version bump.
    SchemaDriftNoBump,
    /// Every fifth message arrives `window_s` late.
    OutOfOrder { window_s: f64 },
    DeviceRevocation,
    MissingRequiredField,
}

impl FaultKind {
    pub fn label(&self) -> &'static str {
        match self {
            FaultKind::UnitDrift => "unit_drift",
            FaultKind::Dropout { .. } => "dropout",
            FaultKind::Duplication { .. } => "duplication",
            FaultKind::TimestampCorruption { .. } => "timestamp_corruption",
            FaultKind::SchemaDriftNoBump => "schema_drift",
            FaultKind::OutOfOrder { .. } => "out_of_order",
            FaultKind::DeviceRevocation => "device_revocation",
            FaultKind::MissingRequiredField => "missing_required_field",
        }
    }

    /// Whether the boundary flagged a message carrying this fault.
    pub fn detected_in(&self, report: &ValidationReport) -> bool {
        let has = |label: &str| report.violations.iter().any(|v| v.kind.label() == label);
        match self {
            FaultKind::UnitDrift => has("out_of_range"),
            FaultKind::Dropout { .. } => false,
            FaultKind::Duplication { .. } => has("duplicate"),
            FaultKind::TimestampCorruption { .. } => has("timestamp_drift") || has("unparseable_timestamp"),
            FaultKind::SchemaDriftNoBump => has("unknown_field"),
            FaultKind::OutOfOrder { .. } => has("out_of_order"),
            FaultKind::DeviceRevocation => report.disposition == Disposition::Reject,
            FaultKind::MissingRequiredField => has("missing_required"),
        }
    }

    fn check(&self) -> Result<(), String> {
        match *self {
            FaultKind::Dropout { rate } | FaultKind::Duplication { rate } if !(0.0..=1.0).contains(&rate) => {
                Err(format!("rate {rate} outside [0, 1]"))
            }
            FaultKind::TimestampCorruption { skew_s } if !skew_s.is_finite() => Err("skew must be finite".into()),
            FaultKind::OutOfOrder { window_s } if !(window_s.is_finite() && window_s > 0.0) => {
                Err(format!("delay {window_s} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// `target` names a stream by signal, device id or sensor id, `#n` for the
/// n-th stream, or `*` for all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at_s: f64,
    #[serde(flatten)]
    pub kind: FaultKind,
    pub target: String,
}

fn sixty() -> u64 {
    60
}

fn full() -> f64 {
    1.0
}

fn default_start() -> DateTime<Utc> {
    "2025-01-01T00:00:00Z".parse().expect("valid start")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_s: u64,
    pub fleet: FleetSpec,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Quality monitoring window.
    #[serde(default = "sixty")]
    pub window_s: u64,
    #[serde(default = "full")]
    pub quality_fraction: f64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
}

fn matches_target(target: &str, index: usize, s: &StreamSpec) -> bool {
    target == "*"
        || target.strip_prefix('#').and_then(|n| n.parse::<usize>().ok()) == Some(index)
        || s.signal == target
        || s.device_id == target
        || s.sensor == target
}

impl Scenario {
    pub fn new(name: &str, seed: u64, duration_s: u64, fleet: FleetSpec) -> Self {
        Scenario {
            name: name.to_string(),
            seed,
            duration_s,
            fleet,
            faults: Vec::new(),
            window_s: 60,
            quality_fraction: 1.0,
            start: default_start(),
        }
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.quality_fraction = fraction;
        self
    }

    pub fn artifacts(&self) -> Result<FleetArtifacts, SimError> {
        generate_fleet(&self.fleet, self.seed)
    }

    pub fn inject_fault(&mut self, kind: FaultKind, target: &str, at_s: f64) -> Result<(), SimError> {
        let fault = FaultSpec {
            at_s,
            kind,
            target: target.to_string(),
        };
        self.check_fault(&fault, &self.artifacts()?)?;
        self.faults.push(fault);
        Ok(())
    }

    fn check_fault(&self, f: &FaultSpec, artifacts: &FleetArtifacts) -> Result<(), SimError> {
        f.kind
            .check()
            .map_err(|e| SimError::ScenarioInvalid(format!("{}: {e}", f.kind.label())))?;
        if !(f.at_s >= 0.0 && f.at_s < self.duration_s as f64) {
            return Err(SimError::ScenarioInvalid(format!(
                "fault at {}s outside a {}s run",
                f.at_s, self.duration_s
            )));
        }
        if !artifacts
            .streams
            .iter()
            .enumerate()
            .any(|(i, s)| matches_target(&f.target, i, s))
        {
            return Err(SimError::UnknownStream(f.target.clone()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<FleetArtifacts, SimError> {
        let artifacts = self.artifacts()?;
        if self.duration_s == 0 {
            return Err(SimError::ScenarioInvalid("duration must be positive".into()));
        }
        if self.window_s == 0 {
            return Err(SimError::ScenarioInvalid("window must be positive".into()));
        }
        if !(self.quality_fraction > 0.0 && self.quality_fraction <= 1.0) {
            return Err(SimError::ScenarioInvalid(format!(
                "quality fraction {} outside (0, 1]",
                self.quality_fraction
            )));
        }
        for f in &self.faults {
            self.check_fault(f, &artifacts)?;
        }
        Ok(artifacts)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["baseline", "dropout", "faults", "boundary-10k"]
    }

    /// Named scenarios shipped with the simulator.
    pub fn builtin(name: &str) -> Option<Scenario> {
        let fault = |at_s: f64, kind: FaultKind, target: &str| FaultSpec {
            at_s,
            kind,
            target: target.to_string(),
        };
        match name {
            "baseline" => Some(Scenario::new("baseline", 7, 100, FleetSpec::new(5, 1, 1, 1))),
            "dropout" => {
                let mut s = Scenario::new("dropout", 11, 600, FleetSpec::new(1, 1, 1, 1).with_rate(10.0));
                s.faults.push(fault(0.0, FaultKind::Dropout { rate: 0.1 }, "#0"));
                Some(s)
            }
            "faults" => {
                let mut s = Scenario::new("faults", 23, 300, FleetSpec::new(2, 1, 4, 1));
                s.faults = vec![
                    fault(60.0, FaultKind::UnitDrift, "#0"),
                    fault(60.0, FaultKind::MissingRequiredField, "#1"),
                    fault(120.0, FaultKind::DeviceRevocation, "#2"),
                    fault(0.0, FaultKind::Dropout { rate: 0.1 }, "#3"),
                    fault(30.0, FaultKind::Duplication { rate: 0.05 }, "#4"),
                    fault(30.0, FaultKind::OutOfOrder { window_s: 30.0 }, "#5"),
                    fault(90.0, FaultKind::SchemaDriftNoBump, "#6"),
                    fault(150.0, FaultKind::TimestampCorruption { skew_s: 90.0 }, "#7"),
                ];
                Some(s)
            }
            "boundary-10k" => {
                let mut s = Scenario::new("boundary-10k", 101, 1000, FleetSpec::new(2, 1, 5, 1));
                s.faults = vec![
                    fault(100.0, FaultKind::UnitDrift, "#0"),
                    fault(200.0, FaultKind::MissingRequiredField, "#1"),
                    fault(500.0, FaultKind::DeviceRevocation, "#2"),
                    fault(400.0, FaultKind::OutOfOrder { window_s: 30.0 }, "#5"),
                    fault(700.0, FaultKind::SchemaDriftNoBump, "#6"),
                    fault(800.0, FaultKind::TimestampCorruption { skew_s: 90.0 }, "#7"),
                ];
                Some(s)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultOutcome {
    pub kind: String,
    pub target: String,
    pub occurred_at: DateTime<Utc>,
    pub detected_at: Option<DateTime<Utc>>,
    pub latency_s: Option<f64>,
    /// Messages the fault touched (dropped ones included).
    pub affected: u64,
    /// Touched messages the boundary flagged.
    pub detected: u64,
}

impl FaultOutcome {
    pub fn detection_rate(&self) -> Option<f64> {
        (self.affected > 0).then(|| self.detected as f64 / self.affected as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub signal: String,
    pub device_id: String,
    pub scheduled: u64,
    /// Distinct messages that reached the boundary.
    pub delivered: u64,
    /// Ground truth: delivered / scheduled.
    pub retention: f64,
    /// Monitor estimate over the whole run.
    pub completeness: f64,
    pub sample_fraction: f64,
    pub breached_windows: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub counts: IngestCounts,
    pub reports: usize,
    pub audit_records: usize,
    pub audit_valid: bool,
    pub faults: Vec<FaultOutcome>,
    pub streams: Vec<StreamOutcome>,
    pub breaches: usize,
    pub cross_region_placements: usize,
    pub governance: GovernanceReport,
    /// SHA-256 over reports, audit head and this summary.
    pub digest: String,
}

impl ScenarioResult {
    pub fn fault(&self, kind: &str) -> Option<&FaultOutcome> {
        self.faults.iter().find(|f| f.kind == kind)
    }

    pub fn stream(&self, signal: &str) -> Option<&StreamOutcome> {
        self.streams.iter().find(|s| s.signal == signal)
    }
}

/// A finished run with the fabric it left behind.
#[derive(Debug, Clone)]
pub struct Run {
    pub result: ScenarioResult,
    pub fabric: Fabric,
    pub artifacts: FleetArtifacts,
}

struct Track {
    occurred_at: DateTime<Utc>,
    first_detect: Option<DateTime<Utc>>,
    affected: u64,
    detected: u64,
}

struct Pending {
    due: DateTime<Utc>,
    order: u64,
    msg: TelemetryMessage,
    truth: f64,
    faults: Vec<usize>,
}

struct Runner<'a> {
    scenario: &'a Scenario,
    artifacts: FleetArtifacts,
    fabric: Fabric,
    targets: Vec<Vec<usize>>,
    tracks: Vec<Track>,
    pending: Vec<Pending>,
    pending_order: u64,
    scheduled: Vec<u64>,
    delivered: Vec<u64>,
}

fn sub_seed(seed: u64, tag: u64, index: u64) -> u64 {
    seed ^ (tag << 56) ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl Runner<'_> {
    fn deliver(&mut self, msg: TelemetryMessage, now: DateTime<Utc>, truth: f64, faults: &[usize]) {
        self.fabric.ingest_observed(msg, now, Some(truth));
        let report = self.fabric.reports.last().expect("ingest writes a report");
        for &fi in faults {
            let track = &mut self.tracks[fi];
            track.affected += 1;
            if self.scenario.faults[fi].kind.detected_in(report) {
                track.detected += 1;
                if track.first_detect.is_none_or(|t| now < t) {
                    track.first_detect = Some(now);
                }
            }
        }
    }

    fn release_due(&mut self, until: Option<DateTime<Utc>>) {
        let mut due: Vec<Pending> = Vec::new();
        let mut keep = Vec::new();
        for p in self.pending.drain(..) {
            if until.is_none_or(|t| p.due <= t) {
                due.push(p);
            } else {
                keep.push(p);
            }
        }
        self.pending = keep;
        due.sort_by_key(|p| (p.due, p.order));
        for p in due {
            let now = p.due + Duration::milliseconds(LATENCY_MS);
            self.deliver(p.msg, now, p.truth, &p.faults);
        }
    }

    fn monitor(&mut self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<(), SimError> {
        for i in 0..self.artifacts.streams.len() {
            let signal = self.artifacts.streams[i].signal.clone();
            let q = self
                .fabric
                .monitor_window(&signal, start, end, self.scenario.quality_fraction)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            let completeness_breach = q
                .evaluation
                .breaches
                .iter()
                .any(|b| b.dimension == Dimension::Completeness);
            if !completeness_breach {
                continue;
            }
            for (fi, f) in self.scenario.faults.iter().enumerate() {
                let track = &mut self.tracks[fi];
                if matches!(f.kind, FaultKind::Dropout { .. })
                    && self.targets[fi].contains(&i)
                    && track.occurred_at < end
                    && track.first_detect.is_none_or(|t| end < t)
                {
                    track.first_detect = Some(end);
                }
            }
        }
        Ok(())
    }
}

/// Runs a scenario to completion.
pub fn simulate(scenario: &Scenario) -> Result<Run, SimError> {
    let artifacts = scenario.validate()?;
    let start = scenario.start;
    let end = start + Duration::seconds(scenario.duration_s as i64);
    let fabric = artifacts.install(scenario.seed, start)?;
    let period_ms = ((1000.0 / scenario.fleet.sample_rate_hz).round() as i64).max(1);
    let ticks = (scenario.duration_s as i64 * 1000) / period_ms;
    let window_ms = scenario.window_s as i64 * 1000;

    let targets: Vec<Vec<usize>> = scenario
        .faults
        .iter()
        .map(|f| {
            artifacts
                .streams
                .iter()
                .enumerate()
                .filter(|(i, s)| matches_target(&f.target, *i, s))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let tracks = scenario
        .faults
        .iter()
        .map(|f| Track {
            occurred_at: start + Duration::milliseconds((f.at_s * 1000.0).round() as i64),
            first_detect: None,
            affected: 0,
            detected: 0,
        })
        .collect();
    let n = artifacts.streams.len();
    let mut value_rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, 1, i as u64)))
        .collect();
    let mut fault_rngs: Vec<ChaCha8Rng> = (0..scenario.faults.len())
        .map(|i| ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, 2, i as u64)))
        .collect();
    let noise: Vec<Normal<f64>> = artifacts
        .streams
        .iter()
        .map(|s| Normal::new(0.0, s.jitter_sd).expect("finite jitter"))
        .collect();
    let mut revoked = vec![false; scenario.faults.len()];

    let mut r = Runner {
        scenario,
        fabric,
        targets,
        tracks,
        pending: Vec::new(),
        pending_order: 0,
        scheduled: vec![0; n],
        delivered: vec![0; n],
        artifacts,
    };
    let mut window_start = start;

    for tick in 0..ticks {
        let t = start + Duration::milliseconds(tick * period_ms);
        r.release_due(Some(t));
        for (fi, f) in scenario.faults.iter().enumerate() {
            if f.kind == FaultKind::DeviceRevocation && !revoked[fi] && r.tracks[fi].occurred_at <= t {
                revoked[fi] = true;
                for &si in &r.targets[fi] {
                    let device = r.artifacts.streams[si].device_id.clone();
                    r.fabric
                        .assets
                        .revoke_device(&device)
                        .map_err(|e| SimError::Setup(e.to_string()))?;
                }
            }
        }
        for si in 0..n {
            let stream = r.artifacts.streams[si].clone();
            let truth = stream.base + noise[si].sample(&mut value_rngs[si]);
            r.scheduled[si] += 1;
            let mut unit = stream.kind.source_unit(stream.dialect);
            let mut stamp = t;
            let (mut drop, mut duplicate, mut delay) = (false, false, None);
            let (mut extra_field, mut strip_status) = (false, false);
            let mut touched = Vec::new();
            let mut dup_faults = Vec::new();
            for (fi, f) in scenario.faults.iter().enumerate() {
                if r.tracks[fi].occurred_at > t || !r.targets[fi].contains(&si) {
                    continue;
                }
                match f.kind {
                    FaultKind::UnitDrift => {
                        unit = stream.kind.drift_unit(stream.dialect);
                        touched.push(fi);
                    }
                    FaultKind::Dropout { rate } => {
                        if fault_rngs[fi].gen::<f64>() < rate {
                            drop = true;
                            r.tracks[fi].affected += 1;
                        }
                    }
                    FaultKind::Duplication { rate } => {
                        if fault_rngs[fi].gen::<f64>() < rate {
                            duplicate = true;
                            dup_faults.push(fi);
                        }
                    }
                    FaultKind::TimestampCorruption { skew_s } => {
                        stamp += Duration::milliseconds((skew_s * 1000.0).round() as i64);
                        touched.push(fi);
                    }
                    FaultKind::SchemaDriftNoBump => {
                        extra_field = true;
                        touched.push(fi);
                    }
                    FaultKind::OutOfOrder { window_s } => {
                        if tick % 5 == 4 {
                            delay = Some(Duration::milliseconds((window_s * 1000.0).round() as i64));
                            touched.push(fi);
                        }
                    }
                    FaultKind::DeviceRevocation => touched.push(fi),
                    FaultKind::MissingRequiredField => {
                        strip_status = true;
                        touched.push(fi);
                    }
                }
            }
            if drop {
                continue;
            }
            r.delivered[si] += 1;
            let mut payload = stream.payload(stream.raw_value(truth, unit), stamp);
            if extra_field {
                payload.insert("firmware_rev".into(), Value::from("2.1.0"));
            }
            if strip_status {
                payload.remove("status");
            }
            let msg = TelemetryMessage {
                device_id: stream.device_id.clone(),
                signal: stream.signal.clone(),
                payload,
                timestamp: None,
                sequence: tick as u64,
                credential: Some(stream.secret.clone()),
                asset: None,
            };
            if let Some(d) = delay {
                r.pending_order += 1;
                r.pending.push(Pending {
                    due: t + d,
                    order: r.pending_order,
                    msg,
                    truth,
                    faults: touched,
                });
                continue;
            }
            let now = t + Duration::milliseconds(LATENCY_MS);
            let copy = duplicate.then(|| msg.clone());
            r.deliver(msg, now, truth, &touched);
            if let Some(copy) = copy {
                let both: Vec<usize> = touched.iter().chain(&dup_faults).copied().collect();
                r.deliver(copy, now + Duration::milliseconds(1), truth, &both);
            }
        }
        let elapsed = (tick + 1) * period_ms;
        if elapsed % window_ms == 0 || tick + 1 == ticks {
            let window_end = start + Duration::milliseconds(elapsed);
            r.monitor(window_start, window_end)?;
            window_start = window_end;
        }
    }
    r.release_due(None);

    let fraction = scenario.quality_fraction;
    let mut streams = Vec::with_capacity(n);
    for si in 0..n {
        let s = &r.artifacts.streams[si];
        let score = r
            .fabric
            .score_window(&s.signal, start, end, fraction)
            .map_err(|e| SimError::Setup(e.to_string()))?;
        let breached_windows = r
            .fabric
            .sla_log
            .iter()
            .filter(|(stream, _, breached)| *breached && stream == &s.signal)
            .count() as u64;
        streams.push(StreamOutcome {
            signal: s.signal.clone(),
            device_id: s.device_id.clone(),
            scheduled: r.scheduled[si],
            delivered: r.delivered[si],
            retention: if r.scheduled[si] == 0 {
                1.0
            } else {
                r.delivered[si] as f64 / r.scheduled[si] as f64
            },
            completeness: score.dims.completeness,
            sample_fraction: score.sample_fraction,
            breached_windows,
        });
    }

    let faults: Vec<FaultOutcome> = scenario
        .faults
        .iter()
        .zip(&r.tracks)
        .map(|(f, t)| FaultOutcome {
            kind: f.kind.label().to_string(),
            target: f.target.clone(),
            occurred_at: t.occurred_at,
            detected_at: t.first_detect,
            latency_s: t
                .first_detect
                .map(|d| (d - t.occurred_at).num_milliseconds() as f64 / 1000.0),
            affected: t.affected,
            detected: t.detected,
        })
        .collect();
    let detections = faults
        .iter()
        .map(|f| DetectionEvent {
            fault: format!("{}@{}", f.kind, f.target),
            occurred_at: f.occurred_at,
            detected_at: f.detected_at,
        })
        .collect();
    let inputs = r.fabric.governance_inputs(detections, end);
    let mut result = ScenarioResult {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        start,
        end,
        counts: r.fabric.counts,
        reports: r.fabric.reports.len(),
        audit_records: r.fabric.audit.len(),
        audit_valid: r.fabric.audit.verify().valid,
        faults,
        streams,
        breaches: r.fabric.breaches.len(),
        cross_region_placements: r.fabric.partitions.cross_region_placements(),
        governance: governance_report(start, end, &inputs),
        digest: String::new(),
    };
    result.digest = run_digest(&result, &r.fabric);
    Ok(Run {
        result,
        fabric: r.fabric,
        artifacts: r.artifacts,
    })
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, SimError> {
    simulate(scenario).map(|run| run.result)
}

fn run_digest(result: &ScenarioResult, fabric: &Fabric) -> String {
    let mut h = Sha256::new();
    for report in &fabric.reports {
        h.update(serde_json::to_vec(report).expect("report serializes"));
        h.update(b"\n");
    }
    h.update(fabric.audit.head().as_bytes());
    h.update(serde_json::to_vec(result).expect("result serializes"));
    hex::encode(h.finalize())
}

/// Disposition tallies keyed by fault label, for reporting.
pub fn fault_summary(result: &ScenarioResult) -> BTreeMap<String, (u64, u64)> {
    result
        .faults
        .iter()
        .map(|f| (format!("{}@{}", f.kind, f.target), (f.affected, f.detected)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario::new("t", 5, 100, FleetSpec::new(5, 1, 1, 1))
    }

    #[test]
    fn clean_run_accepts_everything() {
        let r = run_scenario(&small()).unwrap();
        assert_eq!(r.counts.produced, 500);
        assert_eq!(r.counts.accepted, 500);
        assert!(r.counts.balanced());
        assert_eq!(r.reports, 500);
        assert!(r.audit_valid);
        assert_eq!(r.cross_region_placements, 0);
        for s in &r.streams {
            assert_eq!(s.completeness, 1.0);
        }
    }

    #[test]
    fn same_seed_same_digest() {
        let mut s = small();
        s.inject_fault(FaultKind::Duplication { rate: 0.1 }, "#1", 10.0).unwrap();
        assert_eq!(run_scenario(&s).unwrap().digest, run_scenario(&s).unwrap().digest);
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(run_scenario(&s).unwrap().digest, run_scenario(&other).unwrap().digest);
    }

    #[test]
    fn unit_drift_flags_every_message_after_onset() {
        for target in ["#0", "#1"] {
            let mut s = small();
            s.inject_fault(FaultKind::UnitDrift, target, 30.0).unwrap();
            let r = run_scenario(&s).unwrap();
            let f = r.fault("unit_drift").unwrap();
            assert_eq!(f.affected, 70);
            assert_eq!(f.detected, 70);
            assert_eq!(f.latency_s, Some(0.5));
            assert_eq!(r.counts.warned, 70);
        }
    }

    #[test]
    fn schema_drift_is_quarantined() {
        let mut s = small();
        s.inject_fault(FaultKind::SchemaDriftNoBump, "#2", 50.0).unwrap();
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.counts.quarantined, 50);
        assert_eq!(r.fault("schema_drift").unwrap().detected, 50);
    }

    #[test]
    fn revoked_device_is_rejected() {
        let mut s = small();
        s.inject_fault(FaultKind::DeviceRevocation, "#3", 40.0).unwrap();
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.counts.rejected, 60);
        let f = r.fault("device_revocation").unwrap();
        assert_eq!((f.affected, f.detected), (60, 60));
    }

    #[test]
    fn timestamp_corruption_is_flagged() {
        let mut s = small();
        s.inject_fault(FaultKind::TimestampCorruption { skew_s: 300.0 }, "#0", 20.0).unwrap();
        let r = run_scenario(&s).unwrap();
        let f = r.fault("timestamp_corruption").unwrap();
        assert_eq!(f.affected, 80);
        assert_eq!(f.detected, 80);
    }

    #[test]
    fn missing_field_and_out_of_order() {
        let mut s = small();
        s.inject_fault(FaultKind::MissingRequiredField, "#0", 0.0).unwrap();
        s.inject_fault(FaultKind::OutOfOrder { window_s: 30.0 }, "#1", 0.0).unwrap();
        let r = run_scenario(&s).unwrap();
        let m = r.fault("missing_required_field").unwrap();
        assert_eq!((m.affected, m.detected), (100, 100));
        let o = r.fault("out_of_order").unwrap();
        assert_eq!(o.affected, 20);
        // Seqs 89, 94 and 99 arrive after the stream ends, within the
        // reorder window of the newest message.
        assert_eq!(o.detected, 17);
        assert!(r.counts.balanced());
    }

    #[test]
    fn dropout_lowers_completeness_and_breaches() {
        let mut s = Scenario::new("d", 9, 600, FleetSpec::new(1, 1, 1, 1).with_rate(10.0));
        s.inject_fault(FaultKind::Dropout { rate: 0.1 }, "#0", 0.0).unwrap();
        let r = run_scenario(&s).unwrap();
        let st = &r.streams[0];
        assert_eq!(st.scheduled, 6000);
        assert!((st.retention - 0.9).abs() < 0.02, "{}", st.retention);
        assert!((st.completeness - st.retention).abs() < 1e-9);
        let f = r.fault("dropout").unwrap();
        assert!(f.latency_s.unwrap() <= 60.0);
    }

    #[test]
    fn bad_faults_are_refused() {
        let mut s = small();
        assert!(matches!(
            s.inject_fault(FaultKind::UnitDrift, "nope", 1.0),
            Err(SimError::UnknownStream(_))
        ));
        assert!(matches!(
            s.inject_fault(FaultKind::Dropout { rate: 1.5 }, "#0", 1.0),
            Err(SimError::ScenarioInvalid(_))
        ));
        assert!(matches!(
            s.inject_fault(FaultKind::UnitDrift, "#0", 500.0),
            Err(SimError::ScenarioInvalid(_))
        ));
        assert!(s.faults.is_empty());
    }

    #[test]
    fn builtins_validate() {
        for name in Scenario::builtin_names() {
            Scenario::builtin(name).unwrap().validate().unwrap();
        }
        assert!(Scenario::builtin("nope").is_none());
    }

    #[test]
    fn scenario_json_round_trips() {
        let s = Scenario::builtin("faults").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Scenario>(&text).unwrap(), s);
    }
}
