//! Violation kinds and their fixed severity mapping.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Informational,
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    MissingRequired,
    TypeMismatch { expected: String, found: String },
    UnknownField,
    ReferentialIntegrity { asset: String },
    OutOfRange { value: f64, min: f64, max: f64 },
    NullInOptional,
    PrecisionExceeded { value: f64, precision: f64 },
    /// Timestamp drift beyond the contract bound. Within twice the bound it is
    /// a warning; past that the timestamp is not trusted.
    TimestampDrift { drift_s: f64, max_s: f64 },
    UnparseableTimestamp { raw: String },
    UnmappedSignal { signal: String },
    UnknownJurisdiction { asset: String },
    UnitMismatch { detail: String },
    OutOfOrder { sequence: u64, behind: u64 },
    Duplicate { sequence: u64 },
    PolicyDenied { reason: String },
    Deprecated { detail: String },
    SlaApproach { dimension: String },
    Internal { detail: String },
}

impl ViolationKind {
    pub fn severity(&self) -> Severity {
        use ViolationKind::*;
        match self {
            MissingRequired
            | TypeMismatch { .. }
            | UnknownField
            | ReferentialIntegrity { .. }
            | UnparseableTimestamp { .. }
            | UnmappedSignal { .. }
            | UnknownJurisdiction { .. }
            | UnitMismatch { .. }
            | PolicyDenied { .. }
            | Internal { .. } => Severity::Critical,
            TimestampDrift { drift_s, max_s } => {
                if *drift_s <= 2.0 * max_s {
                    Severity::Warning
                } else {
                    Severity::Critical
                }
            }
            OutOfRange { .. } | NullInOptional | PrecisionExceeded { .. } | OutOfOrder { .. } => {
                Severity::Warning
            }
            Duplicate { .. } | Deprecated { .. } | SlaApproach { .. } => Severity::Informational,
        }
    }

    pub fn label(&self) -> &'static str {
        use ViolationKind::*;
        match self {
            MissingRequired => "missing_required",
            TypeMismatch { .. } => "type_mismatch",
            UnknownField => "unknown_field",
            ReferentialIntegrity { .. } => "referential_integrity",
            OutOfRange { .. } => "out_of_range",
            NullInOptional => "null_in_optional",
            PrecisionExceeded { .. } => "precision_exceeded",
            TimestampDrift { .. } => "timestamp_drift",
            UnparseableTimestamp { .. } => "unparseable_timestamp",
            UnmappedSignal { .. } => "unmapped_signal",
            UnknownJurisdiction { .. } => "unknown_jurisdiction",
            UnitMismatch { .. } => "unit_mismatch",
            OutOfOrder { .. } => "out_of_order",
            Duplicate { .. } => "duplicate",
            PolicyDenied { .. } => "policy_denied",
            Deprecated { .. } => "deprecated",
            SlaApproach { .. } => "sla_approach",
            Internal { .. } => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted field path, or a pseudo-field such as `$timestamp` for
    /// envelope-level problems.
    pub field: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub severity: Severity,
}

impl Violation {
    pub fn new(field: impl Into<String>, kind: ViolationKind) -> Self {
        let severity = kind.severity();
        Violation {
            field: field.into(),
            kind,
            severity,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {} on {}", self.severity, self.kind.label(), self.field)
    }
}
