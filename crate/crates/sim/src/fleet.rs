//! Synthetic plant fleets with two vendor dialects.

use std::collections::BTreeMap;

use chrono::{DateTime, FixedOffset, SecondsFormat, Utc};
use govfabric_core::asset_registry::{AssetNode, AssetRegistry, DeviceIdentity, DeviceState, FleetDefinition, Level};
use govfabric_core::attrs::Classification;
use govfabric_core::boundary::Fabric;
use govfabric_core::contract::{
    CompatibilityMode, ContractState, DataContract, FieldSemantics, FieldSpec, FieldType, OrderingGuarantee,
    Ownership, QualitySla, Raci, Steward, StructSchema, TemporalRules, TimestampSemantics,
};
use govfabric_core::mapping::{
    CanonicalBaseline, MappingDocument, MappingSet, MappingSpec, TimestampFormat, TimestampSource, ValueTransform,
};
use govfabric_core::policy::parse_policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::SimError;

fn one() -> u32 {
    1
}

fn default_rate() -> f64 {
    1.0
}

fn default_jurisdictions() -> Vec<String> {
    vec!["DE".into(), "US".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    #[serde(default = "one")]
    pub enterprises: u32,
    /// Sites per enterprise.
    pub sites: u32,
    pub lines_per_site: u32,
    pub assets_per_line: u32,
    #[serde(default = "one")]
    pub sensors_per_asset: u32,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// Assigned to sites round-robin.
    #[serde(default = "default_jurisdictions")]
    pub jurisdictions: Vec<String>,
}

impl FleetSpec {
    pub fn new(sites: u32, lines_per_site: u32, assets_per_line: u32, sensors_per_asset: u32) -> Self {
        FleetSpec {
            enterprises: 1,
            sites,
            lines_per_site,
            assets_per_line,
            sensors_per_asset,
            sample_rate_hz: 1.0,
            jurisdictions: default_jurisdictions(),
        }
    }

    pub fn with_rate(mut self, hz: f64) -> Self {
        self.sample_rate_hz = hz;
        self
    }

    fn check(&self) -> Result<(), SimError> {
        let counts = [
            ("enterprises", self.enterprises),
            ("sites", self.sites),
            ("lines_per_site", self.lines_per_site),
            ("assets_per_line", self.assets_per_line),
            ("sensors_per_asset", self.sensors_per_asset),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(SimError::BadSpec(format!("{name} must be at least 1")));
            }
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz <= 1000.0) {
            return Err(SimError::BadSpec(format!("sample rate {} out of range", self.sample_rate_hz)));
        }
        if self.jurisdictions.is_empty() {
            return Err(SimError::BadSpec("no jurisdictions".into()));
        }
        Ok(())
    }
}

/// Vendor conventions. A: Fahrenheit and psi, PLC register tags, RFC 3339
/// local time. B: Celsius and kPa, path tags, epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dialect {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorKind {
    Temperature,
    Pressure,
}

impl SensorKind {
    fn tag(self) -> &'static str {
        match self {
            SensorKind::Temperature => "TT",
            SensorKind::Pressure => "PT",
        }
    }

    pub fn concept(self) -> &'static str {
        match self {
            SensorKind::Temperature => "Measurement.Temperature",
            SensorKind::Pressure => "Measurement.Pressure",
        }
    }

    pub fn contract_id(self) -> &'static str {
        match self {
            SensorKind::Temperature => "telemetry.temperature",
            SensorKind::Pressure => "telemetry.pressure",
        }
    }

    pub fn field(self) -> &'static str {
        match self {
            SensorKind::Temperature => "temp_c",
            SensorKind::Pressure => "pressure_kpa",
        }
    }

    /// Contract range in canonical units.
    pub fn range(self) -> (f64, f64) {
        match self {
            SensorKind::Temperature => (40.0, 90.0),
            SensorKind::Pressure => (150.0, 1000.0),
        }
    }

    fn base_band(self) -> (f64, f64, f64) {
        match self {
            SensorKind::Temperature => (55.0, 75.0, 1.0),
            SensorKind::Pressure => (300.0, 700.0, 5.0),
        }
    }

    pub fn canonical_unit(self) -> &'static str {
        match self {
            SensorKind::Temperature => "degC",
            SensorKind::Pressure => "kPa",
        }
    }

    /// Unit a dialect reports in.
    pub fn source_unit(self, d: Dialect) -> &'static str {
        match (self, d) {
            (SensorKind::Temperature, Dialect::A) => "degF",
            (SensorKind::Pressure, Dialect::A) => "psi",
            (k, Dialect::B) => k.canonical_unit(),
        }
    }

    /// The other dialect's unit, used when a device silently drifts.
    pub fn drift_unit(self, d: Dialect) -> &'static str {
        match d {
            Dialect::A => self.source_unit(Dialect::B),
            Dialect::B => self.source_unit(Dialect::A),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub signal: String,
    pub sensor: String,
    pub device_id: String,
    pub secret: String,
    pub dialect: Dialect,
    pub kind: SensorKind,
    pub jurisdiction: String,
    /// Operating point in canonical units.
    pub base: f64,
    pub jitter_sd: f64,
}

impl StreamSpec {
    pub fn timestamp_field(&self) -> &'static str {
        match self.dialect {
            Dialect::A => "ts",
            Dialect::B => "t_ms",
        }
    }

    /// Raw value as the device would send `canonical` in `unit`.
    pub fn raw_value(&self, canonical: f64, unit: &str) -> f64 {
        let v = govfabric_core::mapping::convert_unit(canonical, self.kind.canonical_unit(), unit)
            .expect("dialect units convert");
        (v * 100.0).round() / 100.0
    }

    pub fn timestamp_value(&self, t: DateTime<Utc>) -> Value {
        match self.dialect {
            Dialect::A => {
                let local = t.with_timezone(&FixedOffset::east_opt(3600).expect("valid offset"));
                Value::String(local.to_rfc3339_opts(SecondsFormat::Millis, false))
            }
            Dialect::B => Value::from(t.timestamp_millis()),
        }
    }

    pub fn payload(&self, raw: f64, t: DateTime<Utc>) -> Map<String, Value> {
        let mut p = Map::new();
        p.insert("value".into(), Value::from(raw));
        p.insert("status".into(), Value::from("ok"));
        p.insert(self.timestamp_field().into(), self.timestamp_value(t));
        p
    }
}

/// Everything needed to stand up a fabric for a fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetArtifacts {
    pub spec: FleetSpec,
    pub fleet: FleetDefinition,
    pub contracts: Vec<DataContract>,
    pub mappings: MappingDocument,
    pub bindings: BTreeMap<String, String>,
    pub policies: Vec<String>,
    pub streams: Vec<StreamSpec>,
}

pub const INGEST_POLICY: &str = r#"policy enterprise.ingest layer enterprise category security version 1.0.0
  permit when subject.kind == "device" and subject.state == "Active""#;

pub const ACCESS_POLICY: &str = r#"policy enterprise.access layer enterprise category access version 1.0.0
  permit when subject.role == "Analyst" and subject.jurisdiction == asset.jurisdiction and subject.mfa == true"#;

fn sensor_contract(kind: SensorKind, rate: f64) -> DataContract {
    let (min, max) = kind.range();
    let mut semantics = BTreeMap::new();
    semantics.insert(
        kind.field().to_string(),
        FieldSemantics {
            unit: Some(kind.canonical_unit().into()),
            precision: Some(0.1),
            concept: Some(kind.concept().into()),
        },
    );
    let accuracy = match kind {
        SensorKind::Temperature => 2.0,
        SensorKind::Pressure => 10.0,
    };
    DataContract {
        contract_id: kind.contract_id().into(),
        version: semver::Version::new(1, 0, 0),
        classification: Classification::Confidential,
        schema: StructSchema::new(vec![
            FieldSpec::new(kind.field(), FieldType::Float, true).with_range(min, max),
            FieldSpec::new("status", FieldType::String, true),
        ]),
        semantics,
        temporal: TemporalRules {
            timestamp_semantics: TimestampSemantics::Event,
            sample_rate_hz: rate,
            max_drift_s: 60.0,
            ordering: OrderingGuarantee::PerDevice,
            reorder_window_s: 10.0,
        },
        ownership: Ownership {
            domain: "manufacturing".into(),
            producer: "plant-telemetry".into(),
            stewards: vec![
                Steward { name: "process-steward".into(), role: Raci::Responsible },
                Steward { name: "plant-manager".into(), role: Raci::Accountable },
                Steward { name: "analytics-team".into(), role: Raci::Informed },
            ],
        },
        quality_sla: Some(QualitySla::new(0.95, accuracy, 5.0, 0.99)),
        compatibility: CompatibilityMode::Backward,
        state: ContractState::Definition,
        migration_timeline_days: None,
    }
}

/// Builds the hierarchy, devices, contracts, mappings and policies for a
/// fleet. Sites alternate between dialects A and B.
pub fn generate_fleet(spec: &FleetSpec, seed: u64) -> Result<FleetArtifacts, SimError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut devices = Vec::new();
    let mut streams = Vec::new();
    let mut mappings = Vec::new();
    let mut bindings = BTreeMap::new();
    let mut site_index = 0usize;
    let mut line_index = 0usize;
    for e in 0..spec.enterprises {
        let ent = format!("ent{e}");
        nodes.push(AssetNode::new(&ent, Level::Enterprise, None).with_attr("name", format!("Enterprise {e}")));
        for s in 0..spec.sites {
            let site = format!("{ent}-site{s}");
            let jurisdiction = spec.jurisdictions[site_index % spec.jurisdictions.len()].clone();
            let dialect = if site_index.is_multiple_of(2) { Dialect::A } else { Dialect::B };
            site_index += 1;
            nodes.push(
                AssetNode::new(&site, Level::Site, Some(&ent))
                    .with_attr("jurisdiction", jurisdiction.as_str())
                    .with_attr("vendor", format!("{dialect:?}")),
            );
            for l in 0..spec.lines_per_site {
                let line = format!("{site}-line{l}");
                line_index += 1;
                nodes.push(AssetNode::new(&line, Level::Line, Some(&site)));
                for a in 0..spec.assets_per_line {
                    let asset = format!("{line}-asset{a}");
                    let comp = format!("{asset}-c0");
                    nodes.push(
                        AssetNode::new(&asset, Level::Asset, Some(&line))
                            .with_attr("serial_number", format!("SN-{:08x}", rng.gen::<u32>())),
                    );
                    nodes.push(AssetNode::new(&comp, Level::Component, Some(&asset)));
                    for j in 0..spec.sensors_per_asset {
                        let kind = if (a + j) % 2 == 0 { SensorKind::Temperature } else { SensorKind::Pressure };
                        let sensor = format!("{asset}-{}{j}", kind.tag());
                        let signal = match dialect {
                            Dialect::A => format!("PLC{line_index:03}.{}{a:02}{j:02}", kind.tag()),
                            Dialect::B => format!("{ent}/site{s}/line{l}/asset{a}/{}{j}", kind.tag()),
                        };
                        let unit = kind.source_unit(dialect);
                        nodes.push(
                            AssetNode::new(&sensor, Level::Sensor, Some(&comp))
                                .with_attr("measurement_type", kind.concept())
                                .with_attr("units", unit)
                                .with_attr("sample_rate_hz", spec.sample_rate_hz),
                        );
                        let device_id = format!("dev-{sensor}");
                        let secret = format!("{:016x}", rng.gen::<u64>());
                        devices.push(DeviceIdentity::new(&device_id, &sensor, &secret, DeviceState::Active));
                        let (lo, hi, sd) = kind.base_band();
                        let base = (rng.gen_range(lo..hi) * 10.0_f64).round() / 10.0;
                        mappings.push(MappingSpec {
                            id: format!("map.{signal}"),
                            version: 1,
                            signal: signal.clone(),
                            target: kind.concept().into(),
                            source_unit: unit.into(),
                            transform: ValueTransform::Affine { scale: 1.0, offset: 0.0 },
                            timestamp: TimestampSource {
                                field: Some(match dialect {
                                    Dialect::A => "ts".into(),
                                    Dialect::B => "t_ms".into(),
                                }),
                                format: match dialect {
                                    Dialect::A => TimestampFormat::Rfc3339,
                                    Dialect::B => TimestampFormat::EpochMillis,
                                },
                                utc_offset: None,
                                clock_skew_s: 0.0,
                            },
                        });
                        bindings.insert(signal.clone(), kind.contract_id().to_string());
                        streams.push(StreamSpec {
                            signal,
                            sensor,
                            device_id,
                            secret,
                            dialect,
                            kind,
                            jurisdiction: jurisdiction.clone(),
                            base,
                            jitter_sd: sd,
                        });
                    }
                }
            }
        }
    }
    let mut kinds: Vec<SensorKind> = streams.iter().map(|s| s.kind).collect();
    kinds.sort_by_key(|k| k.contract_id());
    kinds.dedup();
    Ok(FleetArtifacts {
        spec: spec.clone(),
        fleet: FleetDefinition { nodes, devices },
        contracts: kinds.into_iter().map(|k| sensor_contract(k, spec.sample_rate_hz)).collect(),
        mappings: MappingDocument { version: 1, mappings },
        bindings,
        policies: vec![INGEST_POLICY.to_string(), ACCESS_POLICY.to_string()],
        streams,
    })
}

impl FleetArtifacts {
    pub fn asset_count(&self) -> usize {
        self.fleet.nodes.iter().filter(|n| n.level == Level::Asset).count()
    }

    pub fn sensor_count(&self) -> usize {
        self.fleet.nodes.iter().filter(|n| n.level == Level::Sensor).count()
    }

    pub fn stream(&self, target: &str) -> Option<&StreamSpec> {
        self.streams
            .iter()
            .find(|s| s.signal == target || s.device_id == target || s.sensor == target)
    }

    /// A fabric with every registry loaded and contracts in enforcement.
    pub fn install(&self, seed: u64, start: DateTime<Utc>) -> Result<Fabric, SimError> {
        let baseline = CanonicalBaseline::standard();
        let mut fabric = Fabric::new(baseline.clone(), seed);
        fabric.assets = AssetRegistry::from_fleet(&self.fleet).map_err(|e| SimError::Setup(e.to_string()))?;
        for c in &self.contracts {
            let r = fabric
                .contracts
                .register_contract(c.clone(), &baseline)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            fabric
                .contracts
                .promote_to_enforcement(&r, "plant-manager", start)
                .map_err(|e| SimError::Setup(e.to_string()))?;
        }
        fabric.mappings =
            MappingSet::from_document(self.mappings.clone(), &baseline).map_err(|e| SimError::Setup(e.to_string()))?;
        fabric.bindings = self.bindings.clone();
        let policies = self
            .policies
            .iter()
            .map(|p| parse_policy(p).map_err(|e| SimError::Setup(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        fabric
            .set_policies(policies, start.date_naive())
            .map_err(|e| SimError::Setup(e.to_string()))?;
        Ok(fabric)
    }
}
