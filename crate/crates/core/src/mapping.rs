//! Canonical baseline ontology and declarative vendor-to-canonical mappings.
//!
//! A mapping turns one vendor signal into a canonical measurement: value
//! transform, unit normalization to the concept's canonical unit, and a
//! lineage entry naming the mapping id and version. Canonical measurements
//! are tagged with the mapping that produced them, so re-applying the same
//! mapping returns them unchanged.

use std::collections::{BTreeMap, VecDeque};

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset_registry::AssetId;
use crate::contract::{TemporalRules, TimestampSemantics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("unknown canonical concept {0}")]
    UnknownConcept(String),
    #[error("transform of mapping {0} is not invertible")]
    NonInvertibleTransform(String),
    #[error("no mapping for signal {0}")]
    UnmappedSignal(String),
    #[error("unit mismatch: {0}")]
    UnitMismatch(String),
    #[error("no conversion from {from} to {to}")]
    UnsupportedConversion { from: String, to: String },
    #[error("unparseable timestamp {0:?}")]
    UnparseableTimestamp(String),
    #[error("{0} would shadow a baseline concept")]
    ShadowsBaseline(String),
    #[error("invalid mapping document: {0}")]
    InvalidDocument(String),
    #[error("value {value} of signal {signal} has no table entry")]
    NoTableEntry { signal: String, value: f64 },
}

/// Fixed unit table: `to = scale * from + offset`. Inverses are derived.
const UNIT_TABLE: &[(&str, &str, f64, f64)] = &[
    ("degF", "degC", 5.0 / 9.0, -160.0 / 9.0),
    ("K", "degC", 1.0, -273.15),
    ("psi", "kPa", 6.894757, 0.0),
    ("bar", "kPa", 100.0, 0.0),
    ("ms", "s", 0.001, 0.0),
    ("min", "s", 60.0, 0.0),
    ("in/s", "mm/s", 25.4, 0.0),
    ("gal/min", "L/min", 3.785411784, 0.0),
    ("Wh", "kWh", 0.001, 0.0),
    ("ppm", "%", 0.0001, 0.0),
];

/// Units the table knows about, canonical and source alike.
pub fn known_units() -> Vec<&'static str> {
    let mut units: Vec<&str> = UNIT_TABLE.iter().flat_map(|(a, b, _, _)| [*a, *b]).collect();
    units.sort_unstable();
    units.dedup();
    units
}

fn affine_for(from: &str, to: &str) -> Option<(f64, f64)> {
    if from == to {
        return Some((1.0, 0.0));
    }
    UNIT_TABLE.iter().find_map(|&(a, b, scale, offset)| {
        if a == from && b == to {
            Some((scale, offset))
        } else if a == to && b == from {
            Some((1.0 / scale, -offset / scale))
        } else {
            None
        }
    })
}

/// Exact affine conversion between two units in the table.
pub fn convert_unit(value: f64, from: &str, to: &str) -> Result<f64, MappingError> {
    if from == to {
        return Ok(value);
    }
    // Inverse direction divides rather than multiplying by a rounded reciprocal.
    for &(a, b, scale, offset) in UNIT_TABLE {
        if a == from && b == to {
            return Ok(scale * value + offset);
        }
        if a == to && b == from {
            return Ok((value - offset) / scale);
        }
    }
    Err(MappingError::UnsupportedConversion {
        from: from.to_string(),
        to: to.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_unit: Option<String>,
    /// Domain that contributed the concept; `None` for baseline concepts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalBaseline {
    concepts: BTreeMap<String, ConceptDef>,
}

impl CanonicalBaseline {
    pub const ROOTS: [&'static str; 4] = ["Asset", "Location", "Event", "Measurement"];

    /// The enterprise baseline: four root concepts plus common measurement
    /// and event sub-concepts.
    pub fn standard() -> Self {
        let mut concepts = BTreeMap::new();
        let mut add = |name: &str, unit: Option<&str>| {
            concepts.insert(
                name.to_string(),
                ConceptDef {
                    canonical_unit: unit.map(str::to_string),
                    extension_of: None,
                },
            );
        };
        for root in Self::ROOTS {
            add(root, None);
        }
        add("Measurement.Temperature", Some("degC"));
        add("Measurement.Pressure", Some("kPa"));
        add("Measurement.Duration", Some("s"));
        add("Measurement.Vibration", Some("mm/s"));
        add("Measurement.Flow", Some("L/min"));
        add("Measurement.Energy", Some("kWh"));
        add("Measurement.Concentration", Some("%"));
        add("Measurement.Status", None);
        add("Event.Alarm", None);
        add("Event.StateChange", None);
        add("Asset.Identifier", None);
        add("Location.Site", None);
        CanonicalBaseline { concepts }
    }

    pub fn has_concept(&self, name: &str) -> bool {
        self.concepts.contains_key(name)
    }

    pub fn concept(&self, name: &str) -> Option<&ConceptDef> {
        self.concepts.get(name)
    }

    pub fn concepts(&self) -> impl Iterator<Item = (&String, &ConceptDef)> {
        self.concepts.iter()
    }

    /// Adds a domain concept. It must hang off an existing concept and may
    /// not reuse an existing name.
    pub fn extend(
        &mut self,
        domain: &str,
        name: &str,
        canonical_unit: Option<&str>,
    ) -> Result<(), MappingError> {
        if self.concepts.contains_key(name) {
            return Err(MappingError::ShadowsBaseline(name.to_string()));
        }
        let parent = name
            .rsplit_once('.')
            .map(|(p, _)| p)
            .ok_or_else(|| MappingError::UnknownConcept(name.to_string()))?;
        if !self.concepts.contains_key(parent) {
            return Err(MappingError::UnknownConcept(parent.to_string()));
        }
        self.concepts.insert(
            name.to_string(),
            ConceptDef {
                canonical_unit: canonical_unit.map(str::to_string),
                extension_of: Some(domain.to_string()),
            },
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTransform {
    /// `scale * raw + offset`, applied before unit conversion.
    Affine { scale: f64, offset: f64 },
    /// Exact raw → value lookup.
    Table { entries: Vec<(f64, f64)> },
}

impl ValueTransform {
    fn is_invertible(&self) -> bool {
        match self {
            ValueTransform::Affine { scale, .. } => *scale != 0.0 && scale.is_finite(),
            ValueTransform::Table { entries } => {
                let mut outs: Vec<f64> = entries.iter().map(|e| e.1).collect();
                outs.sort_by(f64::total_cmp);
                outs.windows(2).all(|w| w[0] != w[1])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// RFC 3339 with its own offset.
    Rfc3339,
    /// Milliseconds since the Unix epoch, UTC.
    EpochMillis,
    /// `YYYY-MM-DD HH:MM:SS[.fff]` in the source's declared offset.
    NaiveLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampSource {
    /// Payload field holding the timestamp; `None` means the message envelope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub format: TimestampFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utc_offset: Option<String>,
    #[serde(default)]
    pub clock_skew_s: f64,
}

impl TimestampSource {
    pub fn offset(&self) -> Result<Option<FixedOffset>, MappingError> {
        self.utc_offset
            .as_deref()
            .map(|s| parse_offset(s).ok_or_else(|| MappingError::InvalidDocument(format!("bad offset {s}"))))
            .transpose()
    }
}

fn parse_offset(s: &str) -> Option<FixedOffset> {
    if s == "Z" {
        return FixedOffset::east_opt(0);
    }
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let (h, m) = rest.split_once(':')?;
    let secs = h.parse::<i32>().ok()? * 3600 + m.parse::<i32>().ok()? * 60;
    FixedOffset::east_opt(sign * secs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub id: String,
    pub version: u32,
    /// Vendor tag name.
    pub signal: String,
    pub target: String,
    pub source_unit: String,
    pub transform: ValueTransform,
    pub timestamp: TimestampSource,
}

impl MappingSpec {
    pub fn tag(&self) -> MappingTag {
        MappingTag {
            mapping_id: self.id.clone(),
            version: self.version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingTag {
    pub mapping_id: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStep {
    pub transform: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSignal {
    pub signal: String,
    pub sensor: AssetId,
    pub value: f64,
    /// Unit the producer declares, when it declares one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub event_time: DateTime<Utc>,
    pub ingestion_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMeasurement {
    pub sensor: AssetId,
    pub concept: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub event_time: DateTime<Utc>,
    pub ingestion_time: DateTime<Utc>,
    /// Value as the source sent it.
    pub raw_value: f64,
    pub lineage: Vec<LineageStep>,
    pub canonical: MappingTag,
}

pub enum MappingInput<'a> {
    Raw(&'a RawSignal),
    Canonical(&'a CanonicalMeasurement),
}

impl<'a> From<&'a RawSignal> for MappingInput<'a> {
    fn from(r: &'a RawSignal) -> Self {
        MappingInput::Raw(r)
    }
}

impl<'a> From<&'a CanonicalMeasurement> for MappingInput<'a> {
    fn from(c: &'a CanonicalMeasurement) -> Self {
        MappingInput::Canonical(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDocument {
    pub version: u32,
    pub mappings: Vec<MappingSpec>,
}

/// A validated, versioned set of mappings indexed by vendor signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredMappingSet", into = "StoredMappingSet")]
pub struct MappingSet {
    pub version: u32,
    by_signal: BTreeMap<String, MappingSpec>,
    baseline: CanonicalBaseline,
}

#[derive(Serialize, Deserialize)]
struct StoredMappingSet {
    document: MappingDocument,
    baseline: CanonicalBaseline,
}

impl TryFrom<StoredMappingSet> for MappingSet {
    type Error = MappingError;

    fn try_from(s: StoredMappingSet) -> Result<Self, MappingError> {
        MappingSet::from_document(s.document, &s.baseline)
    }
}

impl From<MappingSet> for StoredMappingSet {
    fn from(m: MappingSet) -> Self {
        StoredMappingSet {
            document: m.to_document(),
            baseline: m.baseline,
        }
    }
}

impl MappingSet {
    pub fn empty(baseline: &CanonicalBaseline) -> Self {
        MappingSet {
            version: 0,
            by_signal: BTreeMap::new(),
            baseline: baseline.clone(),
        }
    }

    pub fn load_mapping_set(doc: &str, baseline: &CanonicalBaseline) -> Result<Self, MappingError> {
        let doc: MappingDocument =
            serde_json::from_str(doc).map_err(|e| MappingError::InvalidDocument(e.to_string()))?;
        Self::from_document(doc, baseline)
    }

    pub fn from_document(doc: MappingDocument, baseline: &CanonicalBaseline) -> Result<Self, MappingError> {
        let mut by_signal = BTreeMap::new();
        for m in doc.mappings {
            let concept = baseline
                .concept(&m.target)
                .ok_or_else(|| MappingError::UnknownConcept(m.target.clone()))?;
            if !m.transform.is_invertible() {
                return Err(MappingError::NonInvertibleTransform(m.id.clone()));
            }
            if let Some(unit) = &concept.canonical_unit {
                if affine_for(&m.source_unit, unit).is_none() {
                    return Err(MappingError::UnitMismatch(format!(
                        "mapping {} source unit {} cannot reach {unit}",
                        m.id, m.source_unit
                    )));
                }
            }
            m.timestamp.offset()?;
            if by_signal.insert(m.signal.clone(), m).is_some() {
                return Err(MappingError::InvalidDocument("duplicate signal mapping".into()));
            }
        }
        Ok(MappingSet {
            version: doc.version,
            by_signal,
            baseline: baseline.clone(),
        })
    }

    pub fn to_document(&self) -> MappingDocument {
        MappingDocument {
            version: self.version,
            mappings: self.by_signal.values().cloned().collect(),
        }
    }

    pub fn get(&self, signal: &str) -> Option<&MappingSpec> {
        self.by_signal.get(signal)
    }

    pub fn lookup(&self, signal: &str) -> Result<&MappingSpec, MappingError> {
        self.get(signal)
            .ok_or_else(|| MappingError::UnmappedSignal(signal.to_string()))
    }

    pub fn len(&self) -> usize {
        self.by_signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_signal.is_empty()
    }

    pub fn canonical_unit(&self, concept: &str) -> Option<&str> {
        self.baseline.concept(concept)?.canonical_unit.as_deref()
    }

    /// Applies the mapping registered for the input's signal.
    pub fn apply<'a>(&self, input: impl Into<MappingInput<'a>>) -> Result<CanonicalMeasurement, MappingError> {
        match input.into() {
            MappingInput::Raw(raw) => {
                let mapping = self.lookup(&raw.signal)?;
                apply_mapping(MappingInput::Raw(raw), mapping, self.canonical_unit(&mapping.target))
            }
            MappingInput::Canonical(c) => Ok(c.clone()),
        }
    }
}

/// Transforms a raw signal into its canonical form. An input already tagged
/// with this mapping comes back unchanged.
pub fn apply_mapping(
    input: MappingInput<'_>,
    mapping: &MappingSpec,
    canonical_unit: Option<&str>,
) -> Result<CanonicalMeasurement, MappingError> {
    let raw = match input {
        MappingInput::Canonical(c) => {
            if c.canonical == mapping.tag() || c.lineage.iter().any(|s| s.transform == mapping.id) {
                return Ok(c.clone());
            }
            return Err(MappingError::UnitMismatch(format!(
                "measurement already canonical under {}",
                c.canonical.mapping_id
            )));
        }
        MappingInput::Raw(raw) => raw,
    };
    if raw.signal != mapping.signal {
        return Err(MappingError::UnmappedSignal(raw.signal.clone()));
    }
    if let Some(declared) = &raw.unit {
        if declared != &mapping.source_unit {
            return Err(MappingError::UnitMismatch(format!(
                "{} declares {declared}, mapping expects {}",
                raw.signal, mapping.source_unit
            )));
        }
    }
    let transformed = match &mapping.transform {
        ValueTransform::Affine { scale, offset } => scale * raw.value + offset,
        ValueTransform::Table { entries } => entries
            .iter()
            .find(|(k, _)| *k == raw.value)
            .map(|(_, v)| *v)
            .ok_or(MappingError::NoTableEntry {
                signal: raw.signal.clone(),
                value: raw.value,
            })?,
    };
    let (value, unit) = match canonical_unit {
        Some(unit) => (
            convert_unit(transformed, &mapping.source_unit, unit)
                .map_err(|e| MappingError::UnitMismatch(e.to_string()))?,
            Some(unit.to_string()),
        ),
        None => (transformed, None),
    };
    Ok(CanonicalMeasurement {
        sensor: raw.sensor.clone(),
        concept: mapping.target.clone(),
        value,
        unit,
        event_time: raw.event_time,
        ingestion_time: raw.ingestion_time,
        raw_value: raw.value,
        lineage: vec![LineageStep {
            transform: mapping.id.clone(),
            version: mapping.version,
            note: None,
        }],
        canonical: mapping.tag(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampVerdict {
    pub event_time: DateTime<Utc>,
    pub drift_s: f64,
    pub allowed_drift_s: f64,
    pub compliant: bool,
}

/// Parses a raw timestamp in one of the supported formats.
pub fn parse_timestamp(
    raw: &str,
    format: TimestampFormat,
    source_offset: Option<FixedOffset>,
) -> Result<DateTime<Utc>, MappingError> {
    let bad = || MappingError::UnparseableTimestamp(raw.to_string());
    match format {
        TimestampFormat::Rfc3339 => DateTime::parse_from_rfc3339(raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|_| bad()),
        TimestampFormat::EpochMillis => {
            let ms: i64 = raw.trim().parse().map_err(|_| bad())?;
            Utc.timestamp_millis_opt(ms).single().ok_or_else(bad)
        }
        TimestampFormat::NaiveLocal => {
            let naive = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f").map_err(|_| bad())?;
            let offset = source_offset.unwrap_or_else(|| FixedOffset::east_opt(0).expect("zero offset"));
            offset
                .from_local_datetime(&naive)
                .single()
                .map(|t| t.with_timezone(&Utc))
                .ok_or_else(bad)
        }
    }
}

/// Normalizes a raw timestamp to UTC and judges its drift from ingestion
/// time against the contract bound plus the source's declared clock skew.
pub fn normalize_timestamp(
    raw: &str,
    source: &TimestampSource,
    temporal: &TemporalRules,
    ingestion_time: DateTime<Utc>,
) -> Result<TimestampVerdict, MappingError> {
    let allowed = temporal.max_drift_s + source.clock_skew_s;
    if temporal.timestamp_semantics == TimestampSemantics::Ingestion {
        return Ok(TimestampVerdict {
            event_time: ingestion_time,
            drift_s: 0.0,
            allowed_drift_s: allowed,
            compliant: true,
        });
    }
    let event_time = parse_timestamp(raw, source.format, source.offset()?)?;
    let drift_s = (event_time - ingestion_time).num_milliseconds().abs() as f64 / 1000.0;
    Ok(TimestampVerdict {
        event_time,
        drift_s,
        allowed_drift_s: allowed,
        compliant: drift_s <= allowed,
    })
}

/// An item leaving the reorder buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Released<T> {
    pub item: T,
    pub sequence: u64,
    /// Arrived after a higher sequence number from the same device.
    pub reordered: bool,
    /// Arrived after its sequence position had already been released.
    pub late: bool,
}

#[derive(Debug)]
struct DeviceQueue<T> {
    pending: BTreeMap<u64, VecDeque<(DateTime<Utc>, T, bool)>>,
    max_seen_seq: Option<u64>,
    max_event_time: Option<DateTime<Utc>>,
    released_through: Option<u64>,
}

impl<T> Default for DeviceQueue<T> {
    fn default() -> Self {
        DeviceQueue {
            pending: BTreeMap::new(),
            max_seen_seq: None,
            max_event_time: None,
            released_through: None,
        }
    }
}

/// Per-device reorder buffer: holds items for a bounded event-time window
/// and releases them in sequence order.
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    window: Duration,
    devices: BTreeMap<String, DeviceQueue<T>>,
    reordered_count: u64,
    late_count: u64,
}

impl<T> ReorderBuffer<T> {
    pub fn new(window_s: f64) -> Self {
        ReorderBuffer {
            window: Duration::milliseconds((window_s * 1000.0).round() as i64),
            devices: BTreeMap::new(),
            reordered_count: 0,
            late_count: 0,
        }
    }

    pub fn reordered_count(&self) -> u64 {
        self.reordered_count
    }

    pub fn late_count(&self) -> u64 {
        self.late_count
    }

    pub fn push(&mut self, device: &str, sequence: u64, event_time: DateTime<Utc>, item: T) -> Vec<Released<T>> {
        let q = self.devices.entry(device.to_string()).or_default();
        let reordered = q.max_seen_seq.is_some_and(|m| sequence < m);
        q.max_seen_seq = Some(q.max_seen_seq.map_or(sequence, |m| m.max(sequence)));
        q.max_event_time = Some(q.max_event_time.map_or(event_time, |m| m.max(event_time)));
        if reordered {
            self.reordered_count += 1;
        }
        if q.released_through.is_some_and(|r| sequence <= r) {
            self.late_count += 1;
            return vec![Released {
                item,
                sequence,
                reordered: true,
                late: true,
            }];
        }
        q.pending
            .entry(sequence)
            .or_default()
            .push_back((event_time, item, reordered));
        let horizon = q.max_event_time.expect("set above") - self.window;
        let mut out = Vec::new();
        while let Some(entry) = q.pending.first_entry() {
            let ready = entry.get().iter().all(|(t, _, _)| *t <= horizon);
            if !ready {
                break;
            }
            let (seq, items) = entry.remove_entry();
            q.released_through = Some(seq);
            for (_, item, reordered) in items {
                out.push(Released {
                    item,
                    sequence: seq,
                    reordered,
                    late: false,
                });
            }
        }
        out
    }

    /// Releases everything still held, per device in sequence order.
    pub fn flush(&mut self) -> Vec<Released<T>> {
        let mut out = Vec::new();
        for q in self.devices.values_mut() {
            while let Some((seq, items)) = q.pending.pop_first() {
                q.released_through = Some(seq);
                for (_, item, reordered) in items {
                    out.push(Released {
                        item,
                        sequence: seq,
                        reordered,
                        late: false,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::OrderingGuarantee;

    fn t(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    fn fahrenheit_doc(scale: f64) -> String {
        serde_json::json!({
            "version": 3,
            "mappings": [{
                "id": "map.plc7.tt101",
                "version": 1,
                "signal": "PLC7.TT101",
                "target": "Measurement.Temperature",
                "source_unit": "degF",
                "transform": {"affine": {"scale": scale, "offset": 0.0}},
                "timestamp": {"format": "rfc3339", "clock_skew_s": 0.0}
            }]
        })
        .to_string()
    }

    fn raw(value: f64) -> RawSignal {
        RawSignal {
            signal: "PLC7.TT101".into(),
            sensor: AssetId::new("tt101"),
            value,
            unit: None,
            event_time: t("2025-01-01T00:00:00Z"),
            ingestion_time: t("2025-01-01T00:00:01Z"),
        }
    }

    fn temporal(max_drift_s: f64) -> TemporalRules {
        TemporalRules {
            timestamp_semantics: TimestampSemantics::Event,
            sample_rate_hz: 1.0,
            max_drift_s,
            ordering: OrderingGuarantee::PerDevice,
            reorder_window_s: 10.0,
        }
    }

    #[test]
    fn loads_fahrenheit_mapping() {
        let set = MappingSet::load_mapping_set(&fahrenheit_doc(1.0), &CanonicalBaseline::standard()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.version, 3);
    }

    #[test]
    fn unknown_target_concept() {
        let doc = fahrenheit_doc(1.0).replace("Measurement.Temperature", "Measurement.Unknown");
        let err = MappingSet::load_mapping_set(&doc, &CanonicalBaseline::standard()).unwrap_err();
        assert_eq!(err, MappingError::UnknownConcept("Measurement.Unknown".into()));
    }

    #[test]
    fn zero_scale_is_not_invertible() {
        let err = MappingSet::load_mapping_set(&fahrenheit_doc(0.0), &CanonicalBaseline::standard()).unwrap_err();
        assert!(matches!(err, MappingError::NonInvertibleTransform(_)));
    }

    #[test]
    fn boiling_point_maps_exactly() {
        let set = MappingSet::load_mapping_set(&fahrenheit_doc(1.0), &CanonicalBaseline::standard()).unwrap();
        let m = set.apply(&raw(212.0)).unwrap();
        assert!((m.value - 100.0).abs() < 1e-12);
        assert_eq!(m.unit.as_deref(), Some("degC"));
        assert_eq!(m.lineage.len(), 1);
        assert_eq!(m.raw_value, 212.0);
    }

    #[test]
    fn mapping_is_idempotent() {
        let set = MappingSet::load_mapping_set(&fahrenheit_doc(1.0), &CanonicalBaseline::standard()).unwrap();
        let spec = set.lookup("PLC7.TT101").unwrap();
        let once = set.apply(&raw(50.0)).unwrap();
        let twice = apply_mapping(MappingInput::Canonical(&once), spec, Some("degC")).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unmapped_signal() {
        let set = MappingSet::load_mapping_set(&fahrenheit_doc(1.0), &CanonicalBaseline::standard()).unwrap();
        let mut r = raw(1.0);
        r.signal = "PLC9.XX".into();
        assert_eq!(set.apply(&r).unwrap_err(), MappingError::UnmappedSignal("PLC9.XX".into()));
    }

    #[test]
    fn declared_unit_must_match() {
        let set = MappingSet::load_mapping_set(&fahrenheit_doc(1.0), &CanonicalBaseline::standard()).unwrap();
        let mut r = raw(1.0);
        r.unit = Some("degC".into());
        assert!(matches!(set.apply(&r), Err(MappingError::UnitMismatch(_))));
    }

    #[test]
    fn unit_conversions() {
        assert_eq!(convert_unit(0.0, "degC", "degF").unwrap(), 32.0);
        let psi = convert_unit(100.0, "kPa", "psi").unwrap();
        // published factor: 1 psi = 6.894757 kPa
        assert!((psi - 100.0 / 6.894757).abs() < 1e-12);
        assert!((psi - 14.503774).abs() < 1e-6);
        assert!(matches!(
            convert_unit(1.0, "degC", "psi"),
            Err(MappingError::UnsupportedConversion { .. })
        ));
        assert_eq!(convert_unit(1500.0, "ms", "s").unwrap(), 1.5);
    }

    #[test]
    fn table_transform() {
        let doc = serde_json::json!({
            "version": 1,
            "mappings": [{
                "id": "map.state", "version": 2, "signal": "S1", "target": "Measurement.Status",
                "source_unit": "code",
                "transform": {"table": {"entries": [[0.0, 10.0], [1.0, 20.0]]}},
                "timestamp": {"format": "epoch_millis"}
            }]
        })
        .to_string();
        let set = MappingSet::load_mapping_set(&doc, &CanonicalBaseline::standard()).unwrap();
        let mut r = raw(1.0);
        r.signal = "S1".into();
        assert_eq!(set.apply(&r).unwrap().value, 20.0);
        r.value = 7.0;
        assert!(matches!(set.apply(&r), Err(MappingError::NoTableEntry { .. })));
    }

    #[test]
    fn extensions_cannot_shadow() {
        let mut b = CanonicalBaseline::standard();
        assert!(matches!(
            b.extend("energy", "Measurement.Temperature", Some("K")),
            Err(MappingError::ShadowsBaseline(_))
        ));
        b.extend("energy", "Measurement.Temperature.Winding", Some("degC")).unwrap();
        assert!(b.has_concept("Measurement.Temperature.Winding"));
        assert!(b.extend("energy", "Nope.Thing", None).is_err());
    }

    #[test]
    fn offset_timestamp_shifts_to_utc() {
        let src = TimestampSource {
            field: None,
            format: TimestampFormat::Rfc3339,
            utc_offset: None,
            clock_skew_s: 0.0,
        };
        let v = normalize_timestamp("2025-03-01T12:00:00+02:00", &src, &temporal(60.0), t("2025-03-01T10:00:00Z")).unwrap();
        assert_eq!(v.event_time, t("2025-03-01T10:00:00Z"));
        assert!(v.compliant);
        assert_eq!(v.drift_s, 0.0);
    }

    #[test]
    fn naive_local_uses_declared_offset() {
        let src = TimestampSource {
            field: None,
            format: TimestampFormat::NaiveLocal,
            utc_offset: Some("+02:00".into()),
            clock_skew_s: 0.0,
        };
        let v = normalize_timestamp("2025-03-01 12:00:00", &src, &temporal(60.0), t("2025-03-01T10:00:00Z")).unwrap();
        assert_eq!(v.event_time, t("2025-03-01T10:00:00Z"));
    }

    #[test]
    fn five_minute_drift_violates_one_minute_bound() {
        let src = TimestampSource {
            field: None,
            format: TimestampFormat::EpochMillis,
            utc_offset: None,
            clock_skew_s: 0.0,
        };
        let ingest = t("2025-03-01T10:05:00Z");
        let raw = t("2025-03-01T10:00:00Z").timestamp_millis().to_string();
        let v = normalize_timestamp(&raw, &src, &temporal(60.0), ingest).unwrap();
        assert!(!v.compliant);
        assert_eq!(v.drift_s, 300.0);
        assert!(matches!(
            normalize_timestamp("yesterday", &src, &temporal(60.0), ingest),
            Err(MappingError::UnparseableTimestamp(_))
        ));
    }

    #[test]
    fn reorder_buffer_restores_sequence_order() {
        let mut buf = ReorderBuffer::new(2.0);
        let base = t("2025-01-01T00:00:00Z");
        let at = |s: i64| base + Duration::seconds(s);
        let mut out = Vec::new();
        for (seq, sec) in [(0u64, 0i64), (2, 2), (1, 1), (3, 3), (4, 4), (5, 5), (6, 6)] {
            out.extend(buf.push("d1", seq, at(sec), seq));
        }
        out.extend(buf.flush());
        let seqs: Vec<u64> = out.iter().map(|r| r.item).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(buf.reordered_count(), 1);
        assert!(out.iter().find(|r| r.item == 1).unwrap().reordered);
    }

    #[test]
    fn reorder_buffer_flags_late_arrivals() {
        let mut buf = ReorderBuffer::new(1.0);
        let base = t("2025-01-01T00:00:00Z");
        assert!(buf.push("d1", 0, base, 0u64).is_empty());
        let r = buf.push("d1", 2, base + Duration::seconds(5), 2);
        assert_eq!(r.len(), 1);
        let r = buf.push("d1", 3, base + Duration::seconds(10), 3);
        assert_eq!(r[0].item, 2);
        let late = buf.push("d1", 1, base + Duration::seconds(1), 1);
        assert_eq!(late.len(), 1);
        assert!(late[0].late && late[0].reordered);
        assert_eq!(buf.late_count(), 1);
    }
}
