//! Enforcement at the four boundaries: ingestion, publication, access and
//! external sharing, plus quarantine and the audit log.

mod audit;
mod ingest;
mod monitor;
mod product;

pub use audit::*;
pub use ingest::*;
pub use monitor::*;
pub use product::*;

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset_registry::{AssetError, AssetRegistry};
use crate::contract::{ContractError, ContractRef, ContractRegistry, VersionBump};
use crate::mapping::{CanonicalBaseline, MappingSet};
use crate::policy::{compose_effective, EffectivePolicy, PolicyAst, PolicyError};
use crate::privacy::{PartitionedStore, PrivacyBudget, PrivacyError, TokenVault};
use crate::quality::{
    DecisionCounts, Observation, QualityError, QualityWeights, SeverityCounts, SlaBreach,
};

/// Steward of last resort when a contract names none.
pub const GOVERNANCE_OFFICE: &str = "governance-office";

pub const DEFAULT_REGIONS: [&str; 6] = ["EU", "NA", "UK", "APAC", "CN", "LATAM"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundaryError {
    #[error("unknown quarantine id {0}")]
    UnknownQuarantineId(String),
    #[error("quarantine item {0} is already closed")]
    QuarantineClosed(String),
    #[error("product {product} {from} -> {to} needs a {required:?} bump: {detail}")]
    IncompatibleContract {
        product: String,
        from: String,
        to: String,
        required: VersionBump,
        detail: String,
    },
    #[error("product {product} fails its SLA on {dimensions:?}")]
    SlaFailure {
        product: String,
        dimensions: Vec<String>,
    },
    #[error("source contract {0} is unknown or not enforced")]
    UnknownSourceContract(ContractRef),
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("product {0} names no steward")]
    MissingSteward(String),
    #[error("export of {0} declares no purpose")]
    MissingPurpose(String),
    #[error("{classification} product {product} lives in {home}; export to {destination} refused")]
    ResidencyViolation {
        product: String,
        classification: String,
        home: String,
        destination: String,
    },
    #[error("stream {0} has no bound contract")]
    UnboundStream(String),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Quality(#[from] QualityError),
}

/// Steward-facing notification, consumed by reports and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub at: DateTime<Utc>,
    pub to: String,
    pub topic: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub produced: u64,
    pub accepted: u64,
    pub warned: u64,
    pub quarantined: u64,
    pub rejected: u64,
}

impl IngestCounts {
    pub fn balanced(&self) -> bool {
        self.produced == self.accepted + self.warned + self.quarantined + self.rejected
    }
}

/// All registries, stores and logs behind the boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fabric {
    pub assets: AssetRegistry,
    pub contracts: ContractRegistry,
    pub baseline: CanonicalBaseline,
    pub mappings: MappingSet,
    /// Vendor signal to the contract governing it.
    pub bindings: BTreeMap<String, String>,
    policies: Vec<PolicyAst>,
    effective: EffectivePolicy,
    pub store: Vec<StoredMeasurement>,
    pub quarantine: Vec<QuarantineItem>,
    pub reports: Vec<ValidationReport>,
    pub audit: AuditLog,
    pub notifications: Vec<Notification>,
    pub vault: TokenVault,
    pub partitions: PartitionedStore,
    pub catalog: BTreeMap<String, Vec<ProductEntry>>,
    pub budgets: BTreeMap<String, PrivacyBudget>,
    /// Per-stream quality observations, keyed by vendor signal.
    pub observations: BTreeMap<String, Vec<Observation>>,
    pub breaches: Vec<SlaBreach>,
    /// (stream, window start, breached) for every SLA check.
    pub sla_log: Vec<(String, DateTime<Utc>, bool)>,
    pub counts: IngestCounts,
    pub severities: SeverityCounts,
    pub decisions: DecisionCounts,
    pub weights: QualityWeights,
    order: BTreeMap<String, DeviceOrder>,
    seed: u64,
    draws: u64,
}

impl Fabric {
    pub fn new(baseline: CanonicalBaseline, seed: u64) -> Self {
        Fabric {
            assets: AssetRegistry::new(),
            contracts: ContractRegistry::new(),
            mappings: MappingSet::empty(&baseline),
            baseline,
            bindings: BTreeMap::new(),
            policies: Vec::new(),
            effective: EffectivePolicy::default(),
            store: Vec::new(),
            quarantine: Vec::new(),
            reports: Vec::new(),
            audit: AuditLog::new(),
            notifications: Vec::new(),
            vault: TokenVault::new(&format!("vault-{seed}")),
            partitions: PartitionedStore::new(&DEFAULT_REGIONS),
            catalog: BTreeMap::new(),
            budgets: BTreeMap::new(),
            observations: BTreeMap::new(),
            breaches: Vec::new(),
            sla_log: Vec::new(),
            counts: IngestCounts::default(),
            severities: SeverityCounts::default(),
            decisions: DecisionCounts::default(),
            weights: QualityWeights::default(),
            order: BTreeMap::new(),
            seed,
            draws: 0,
        }
    }

    pub fn policies(&self) -> &[PolicyAst] {
        &self.policies
    }

    pub fn effective_policy(&self) -> &EffectivePolicy {
        &self.effective
    }

    /// Replaces the policy set and recomposes the effective policy for `today`.
    pub fn set_policies(&mut self, policies: Vec<PolicyAst>, today: NaiveDate) -> Result<(), PolicyError> {
        self.effective = compose_effective(&policies, today)?;
        self.policies = policies;
        Ok(())
    }

    pub fn bind(&mut self, signal: &str, contract_id: &str) {
        self.bindings.insert(signal.to_string(), contract_id.to_string());
    }

    /// Fresh deterministic RNG for one sampling operation.
    pub(crate) fn op_rng(&mut self) -> ChaCha8Rng {
        self.draws += 1;
        ChaCha8Rng::seed_from_u64(self.seed ^ self.draws.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub(crate) fn notify(&mut self, at: DateTime<Utc>, to: &str, topic: &str, message: String) {
        self.notifications.push(Notification {
            at,
            to: to.to_string(),
            topic: topic.to_string(),
            message,
        });
    }

    pub(crate) fn record(&mut self, entry: AuditEntry) -> Result<u64, BoundaryError> {
        Ok(self.audit.record_audit(entry)?)
    }
}
