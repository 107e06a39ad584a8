//! Tokenization, suppressed aggregation, Laplace noise with budget
//! accounting, and residency partitioning.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::asset_registry::{AssetId, Hierarchy, Level};
use crate::attrs::Classification;
use crate::mapping::CanonicalMeasurement;
use crate::policy::{AttributeRequest, EffectivePolicy, Outcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrivacyError {
    #[error("unknown token scope {0}")]
    UnknownScope(String),
    #[error("unknown token in scope {0}")]
    UnknownToken(String),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    InvalidSensitivity(f64),
    #[error("privacy budget for {product} exhausted: spent {spent}, requested {requested}, total {total}")]
    BudgetExhausted {
        product: String,
        spent: f64,
        requested: f64,
        total: f64,
    },
    #[error("unknown jurisdiction {0:?}")]
    UnknownJurisdiction(Option<String>),
    #[error("unknown catalog entry {0}")]
    UnknownEntry(String),
    #[error("asset {0} not in hierarchy")]
    UnknownAsset(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct TokenScope {
    access_policy: Option<String>,
    forward: BTreeMap<String, String>,
    reverse: BTreeMap<String, String>,
}

/// Per-scope bijection between values and opaque tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVault {
    key: String,
    scopes: BTreeMap<String, TokenScope>,
}

impl TokenVault {
    pub fn new(key: &str) -> Self {
        TokenVault {
            key: key.to_string(),
            scopes: BTreeMap::new(),
        }
    }

    pub fn create_scope(&mut self, scope: &str, access_policy: Option<&str>) {
        self.scopes.entry(scope.to_string()).or_insert_with(|| TokenScope {
            access_policy: access_policy.map(str::to_string),
            ..TokenScope::default()
        });
    }

    pub fn has_scope(&self, scope: &str) -> bool {
        self.scopes.contains_key(scope)
    }

    pub fn access_policy(&self, scope: &str) -> Option<&str> {
        self.scopes.get(scope)?.access_policy.as_deref()
    }

    fn digest(&self, scope: &str, value: &str, counter: u32) -> String {
        let mut h = Sha256::new();
        h.update(self.key.as_bytes());
        h.update([0]);
        h.update(scope.as_bytes());
        h.update([0]);
        h.update(value.as_bytes());
        h.update(counter.to_be_bytes());
        format!("tok_{}", &hex::encode(h.finalize())[..24])
    }

    pub fn tokenize(&mut self, value: &str, scope: &str) -> Result<String, PrivacyError> {
        let mut counter = 0;
        let candidate = {
            let s = self
                .scopes
                .get(scope)
                .ok_or_else(|| PrivacyError::UnknownScope(scope.to_string()))?;
            if let Some(t) = s.forward.get(value) {
                return Ok(t.clone());
            }
            loop {
                let t = self.digest(scope, value, counter);
                if !s.reverse.contains_key(&t) {
                    break t;
                }
                counter += 1;
            }
        };
        let s = self.scopes.get_mut(scope).expect("scope checked above");
        s.forward.insert(value.to_string(), candidate.clone());
        s.reverse.insert(candidate.clone(), value.to_string());
        Ok(candidate)
    }

    /// Reverses a token once the policy engine allows `requester` to
    /// detokenize.
    pub fn detokenize(
        &self,
        token: &str,
        scope: &str,
        requester: &AttributeRequest,
        policy: &EffectivePolicy,
    ) -> Result<String, PrivacyError> {
        let s = self
            .scopes
            .get(scope)
            .ok_or_else(|| PrivacyError::UnknownScope(scope.to_string()))?;
        let mut req = requester.clone();
        req.action = "detokenize".into();
        req.resource.insert("token_scope".into(), scope.into());
        if req.validate().is_err() {
            return Err(PrivacyError::AccessDenied("malformed request".into()));
        }
        let decision = policy.evaluate(&req, "detokenize");
        if decision.outcome != Outcome::Allow {
            return Err(PrivacyError::AccessDenied(format!("{:?}", decision.outcome)));
        }
        s.reverse
            .get(token)
            .cloned()
            .ok_or_else(|| PrivacyError::UnknownToken(scope.to_string()))
    }

    /// True when every scope's maps are mutual inverses.
    pub fn is_bijective(&self) -> bool {
        self.scopes.values().all(|s| {
            s.forward.len() == s.reverse.len()
                && s.forward.iter().all(|(v, t)| s.reverse.get(t) == Some(v))
        })
    }

    pub fn len(&self, scope: &str) -> usize {
        self.scopes.get(scope).map_or(0, |s| s.forward.len())
    }
}

/// Minimum group size for aggregates of data with this classification.
pub fn min_group_size(c: Classification) -> usize {
    match c {
        Classification::Public => 1,
        Classification::Internal | Classification::Confidential => 5,
        Classification::Restricted => 10,
    }
}

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationLevel {
    Sensor,
    Asset,
    Line,
    Site,
}

impl AggregationLevel {
    pub fn level(self) -> Level {
        match self {
            AggregationLevel::Sensor => Level::Sensor,
            AggregationLevel::Asset => Level::Asset,
            AggregationLevel::Line => Level::Line,
            AggregationLevel::Site => Level::Site,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sensor" => Some(AggregationLevel::Sensor),
            "asset" => Some(AggregationLevel::Asset),
            "line" => Some(AggregationLevel::Line),
            "site" => Some(AggregationLevel::Site),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateGroup {
    pub group: String,
    pub concept: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub level: AggregationLevel,
    pub k: usize,
    pub groups: Vec<AggregateGroup>,
    pub suppressed_groups: usize,
    pub suppressed_records: usize,
}

/// Groups measurements by their ancestor at `level` and concept, emitting
/// count/mean/min/max. Groups with fewer than `k` records are suppressed.
pub fn aggregate_records(
    records: &[CanonicalMeasurement],
    hierarchy: &Hierarchy,
    level: AggregationLevel,
    k: usize,
) -> Result<AggregateReport, PrivacyError> {
    if records.is_empty() {
        return Err(PrivacyError::EmptyInput);
    }
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let lineage = hierarchy
            .lineage(&r.sensor)
            .map_err(|_| PrivacyError::UnknownAsset(r.sensor.0.clone()))?;
        let key = lineage
            .iter()
            .find(|n| n.level == level.level())
            .map(|n| n.id.0.clone())
            .unwrap_or_else(|| r.sensor.0.clone());
        groups.entry((key, r.concept.clone())).or_default().push(r.value);
    }
    let mut out = AggregateReport {
        level,
        k,
        groups: Vec::new(),
        suppressed_groups: 0,
        suppressed_records: 0,
    };
    for ((group, concept), vals) in groups {
        if vals.len() < k {
            out.suppressed_groups += 1;
            out.suppressed_records += vals.len();
            continue;
        }
        let n = vals.len() as f64;
        out.groups.push(AggregateGroup {
            group,
            concept,
            count: vals.len(),
            mean: vals.iter().sum::<f64>() / n,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(out)
}

const NANO: f64 = 1e9;

fn to_nano(eps: f64) -> u64 {
    (eps * NANO).round() as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub query: String,
    pub epsilon_nano: u64,
}

/// Epsilon budget held in integer nano-units so accounting is exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub product_id: String,
    total_nano: u64,
    spent_nano: u64,
    ledger: Vec<BudgetEntry>,
}

impl PrivacyBudget {
    pub fn new(product_id: &str, total_epsilon: f64) -> Result<Self, PrivacyError> {
        if !(total_epsilon > 0.0) || !total_epsilon.is_finite() {
            return Err(PrivacyError::InvalidEpsilon(total_epsilon));
        }
        Ok(PrivacyBudget {
            product_id: product_id.to_string(),
            total_nano: to_nano(total_epsilon),
            spent_nano: 0,
            ledger: Vec::new(),
        })
    }

    pub fn total(&self) -> f64 {
        self.total_nano as f64 / NANO
    }

    pub fn spent(&self) -> f64 {
        self.spent_nano as f64 / NANO
    }

    pub fn remaining(&self) -> f64 {
        (self.total_nano - self.spent_nano) as f64 / NANO
    }

    pub fn ledger(&self) -> &[BudgetEntry] {
        &self.ledger
    }

    /// Ledger sums to spent and spent never exceeds total.
    pub fn is_consistent(&self) -> bool {
        self.ledger.iter().map(|e| e.epsilon_nano).sum::<u64>() == self.spent_nano
            && self.spent_nano <= self.total_nano
    }

    pub fn charge(&mut self, query: &str, epsilon: f64) -> Result<(), PrivacyError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(PrivacyError::InvalidEpsilon(epsilon));
        }
        let e = to_nano(epsilon);
        if e == 0 {
            return Err(PrivacyError::InvalidEpsilon(epsilon));
        }
        if self.spent_nano + e > self.total_nano {
            return Err(PrivacyError::BudgetExhausted {
                product: self.product_id.clone(),
                spent: self.spent(),
                requested: epsilon,
                total: self.total(),
            });
        }
        self.spent_nano += e;
        self.ledger.push(BudgetEntry {
            query: query.to_string(),
            epsilon_nano: e,
        });
        Ok(())
    }
}

/// One draw from Laplace(0, scale) by inverse CDF.
pub fn laplace_noise<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}

/// Charges `epsilon` to the budget and returns the answer plus
/// Laplace(sensitivity / epsilon) noise.
pub fn dp_query<R: Rng + ?Sized>(
    query: &str,
    true_answer: f64,
    sensitivity: f64,
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut R,
) -> Result<f64, PrivacyError> {
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(PrivacyError::InvalidSensitivity(sensitivity));
    }
    budget.charge(query, epsilon)?;
    Ok(true_answer + laplace_noise(rng, sensitivity / epsilon))
}

/// Residency region for a jurisdiction code.
pub fn region_for(jurisdiction: &str) -> Option<&'static str> {
    const EU: &[&str] = &[
        "EU", "AT", "BE", "BG", "HR", "CY", "CZ", "DK", "EE", "FI", "FR", "DE", "GR", "HU", "IE", "IT", "LV", "LT",
        "LU", "MT", "NL", "PL", "PT", "RO", "SK", "SI", "ES", "SE",
    ];
    let j = jurisdiction.to_ascii_uppercase();
    if EU.contains(&j.as_str()) {
        return Some("EU");
    }
    match j.as_str() {
        "US" | "CA" | "MX" => Some("NA"),
        "CN" => Some("CN"),
        "JP" | "KR" | "SG" | "IN" | "AU" => Some("APAC"),
        "UK" | "GB" => Some("UK"),
        "BR" | "AR" | "CL" => Some("LATAM"),
        _ => None,
    }
}

/// Partition id for data from an asset under `jurisdiction`.
pub fn route_partition(jurisdiction: Option<&str>) -> Result<&'static str, PrivacyError> {
    jurisdiction
        .and_then(region_for)
        .ok_or_else(|| PrivacyError::UnknownJurisdiction(jurisdiction.map(str::to_string)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub entry_id: String,
    pub asset: AssetId,
    pub concept: String,
    pub jurisdiction: String,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub entry_id: String,
    pub measurement: CanonicalMeasurement,
}

/// Payloads live only in their home region; catalog metadata is replicated
/// to every region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionedStore {
    pub regions: Vec<String>,
    pub payloads: BTreeMap<String, Vec<PartitionRecord>>,
    pub catalogs: BTreeMap<String, Vec<CatalogEntry>>,
    next_id: u64,
}

impl PartitionedStore {
    pub fn new(regions: &[&str]) -> Self {
        let regions: Vec<String> = regions.iter().map(|r| r.to_string()).collect();
        PartitionedStore {
            payloads: regions.iter().map(|r| (r.clone(), Vec::new())).collect(),
            catalogs: regions.iter().map(|r| (r.clone(), Vec::new())).collect(),
            regions,
            next_id: 0,
        }
    }

    pub fn store(&mut self, m: &CanonicalMeasurement, jurisdiction: Option<&str>) -> Result<CatalogEntry, PrivacyError> {
        let region = route_partition(jurisdiction)?.to_string();
        if !self.regions.contains(&region) {
            self.regions.push(region.clone());
            self.catalogs.insert(region.clone(), self.catalogs.values().next().cloned().unwrap_or_default());
        }
        let entry = CatalogEntry {
            entry_id: format!("e{:08}", self.next_id),
            asset: m.sensor.clone(),
            concept: m.concept.clone(),
            jurisdiction: jurisdiction.unwrap_or_default().to_string(),
            region: region.clone(),
        };
        self.next_id += 1;
        self.payloads.entry(region).or_default().push(PartitionRecord {
            entry_id: entry.entry_id.clone(),
            measurement: m.clone(),
        });
        for r in &self.regions {
            self.catalogs.entry(r.clone()).or_default().push(entry.clone());
        }
        Ok(entry)
    }

    pub fn catalog(&self, region: &str) -> &[CatalogEntry] {
        self.catalogs.get(region).map_or(&[], Vec::as_slice)
    }

    /// Payload fetch is served only inside the entry's home region.
    pub fn fetch_payload(&self, entry_id: &str, from_region: &str) -> Result<&CanonicalMeasurement, PrivacyError> {
        let entry = self
            .catalog(from_region)
            .iter()
            .find(|e| e.entry_id == entry_id)
            .ok_or_else(|| PrivacyError::UnknownEntry(entry_id.to_string()))?;
        if entry.region != from_region {
            return Err(PrivacyError::AccessDenied(format!(
                "payload of {entry_id} resides in {}",
                entry.region
            )));
        }
        self.payloads[&entry.region]
            .iter()
            .find(|r| r.entry_id == entry_id)
            .map(|r| &r.measurement)
            .ok_or_else(|| PrivacyError::UnknownEntry(entry_id.to_string()))
    }

    /// Payloads stored outside the region their jurisdiction routes to.
    pub fn cross_region_placements(&self) -> usize {
        let home: BTreeMap<&str, &str> = self
            .catalogs
            .values()
            .flatten()
            .map(|e| (e.entry_id.as_str(), e.jurisdiction.as_str()))
            .collect();
        self.payloads
            .iter()
            .flat_map(|(region, recs)| recs.iter().map(move |r| (region, r)))
            .filter(|(region, r)| {
                home.get(r.entry_id.as_str())
                    .and_then(|j| region_for(j))
                    .is_none_or(|want| want != region.as_str())
            })
            .count()
    }

    pub fn payload_count(&self) -> usize {
        self.payloads.values().map(Vec::len).sum()
    }
}
