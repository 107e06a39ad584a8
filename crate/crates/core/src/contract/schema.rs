//! Structural schemas: payload validation, semver change classification, and
//! compatibility checking.
//!
//! Payloads are named-field JSON objects under strict field-set semantics: a
//! field the schema does not declare makes the payload non-conforming. Field
//! order carries no meaning.

use std::collections::BTreeSet;
use std::fmt;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::validation::{Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Boolean,
    Integer,
    Float,
    String,
    Timestamp,
    Record,
}

impl FieldType {
    pub fn is_numeric(self) -> bool {
        matches!(self, FieldType::Integer | FieldType::Float)
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldType::Boolean => "boolean",
            FieldType::Integer => "integer",
            FieldType::Float => "float",
            FieldType::String => "string",
            FieldType::Timestamp => "timestamp",
            FieldType::Record => "record",
        }
    }

    /// Whether every value valid for `self` is also valid for `wider`.
    /// Timestamps are strings, so a timestamp field may widen to string.
    fn values_subsumed_by(self, wider: FieldType) -> bool {
        self == wider || (self == FieldType::Timestamp && wider == FieldType::String)
    }
}

/// Inclusive numeric bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    /// Bounds as they apply to values of `ty`; integer fields only admit
    /// whole numbers inside the interval.
    fn effective(&self, ty: FieldType) -> (f64, f64) {
        if ty == FieldType::Integer {
            (self.min.ceil(), self.max.floor())
        } else {
            (self.min, self.max)
        }
    }

    fn within(&self, outer: &Range, ty: FieldType) -> bool {
        let (a, b) = self.effective(ty);
        let (c, d) = outer.effective(ty);
        c <= a && b <= d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: FieldType,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<StructSchema>,
}

impl FieldSpec {
    pub fn new(name: &str, ty: FieldType, required: bool) -> Self {
        FieldSpec {
            name: name.to_string(),
            ty,
            required,
            range: None,
            fields: if ty == FieldType::Record {
                Some(StructSchema::default())
            } else {
                None
            },
        }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.range = Some(Range::new(min, max));
        self
    }

    pub fn with_fields(mut self, schema: StructSchema) -> Self {
        self.fields = Some(schema);
        self
    }

    fn nested(&self) -> &StructSchema {
        static EMPTY: StructSchema = StructSchema { fields: Vec::new() };
        self.fields.as_ref().unwrap_or(&EMPTY)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructSchema {
    pub fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StructSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Self {
        StructSchema { fields }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Resolves a dotted path through nested records.
    pub fn field_path(&self, path: &str) -> Option<&FieldSpec> {
        let mut parts = path.split('.');
        let mut cur = self.field(parts.next()?)?;
        for part in parts {
            cur = cur.fields.as_ref()?.field(part)?;
        }
        Some(cur)
    }

    pub fn check_well_formed(&self) -> Result<(), SchemaError> {
        self.check_at("")
    }

    fn check_at(&self, prefix: &str) -> Result<(), SchemaError> {
        let mut seen = BTreeSet::new();
        for f in &self.fields {
            let path = join(prefix, &f.name);
            if f.name.is_empty() || f.name.contains('.') {
                return Err(SchemaError(format!("invalid field name {path:?}")));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError(format!("duplicate field {path}")));
            }
            if let Some(r) = &f.range {
                if !f.ty.is_numeric() {
                    return Err(SchemaError(format!("range on non-numeric field {path}")));
                }
                let (lo, hi) = r.effective(f.ty);
                if !(lo <= hi) {
                    return Err(SchemaError(format!("empty range on {path}")));
                }
            }
            match (f.ty, &f.fields) {
                (FieldType::Record, Some(nested)) => nested.check_at(&path)?,
                (FieldType::Record, None) => {}
                (_, Some(_)) => {
                    return Err(SchemaError(format!("nested fields on non-record {path}")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Every problem with `payload`, in schema order followed by unknown fields.
    pub fn validate(&self, payload: &Map<String, Value>) -> Vec<Violation> {
        let mut out = Vec::new();
        self.validate_at("", payload, &mut out);
        out
    }

    /// True iff the payload has no violations of any severity.
    pub fn conforms(&self, payload: &Map<String, Value>) -> bool {
        self.validate(payload).is_empty()
    }

    fn validate_at(&self, prefix: &str, payload: &Map<String, Value>, out: &mut Vec<Violation>) {
        for f in &self.fields {
            let path = join(prefix, &f.name);
            match payload.get(&f.name) {
                None => {
                    if f.required {
                        out.push(Violation::new(path, ViolationKind::MissingRequired));
                    }
                }
                Some(Value::Null) => {
                    let kind = if f.required {
                        ViolationKind::MissingRequired
                    } else {
                        ViolationKind::NullInOptional
                    };
                    out.push(Violation::new(path, kind));
                }
                Some(v) => validate_value(f, &path, v, out),
            }
        }
        for name in payload.keys() {
            if self.field(name).is_none() {
                out.push(Violation::new(join(prefix, name), ViolationKind::UnknownField));
            }
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn value_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "float",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "record",
    }
}

fn validate_value(f: &FieldSpec, path: &str, v: &Value, out: &mut Vec<Violation>) {
    let type_ok = match (f.ty, v) {
        (FieldType::Boolean, Value::Bool(_)) => true,
        (FieldType::Integer, Value::Number(n)) => !n.is_f64(),
        (FieldType::Float, Value::Number(n)) => n.is_f64(),
        (FieldType::String, Value::String(_)) => true,
        (FieldType::Timestamp, Value::String(s)) => DateTime::parse_from_rfc3339(s).is_ok(),
        (FieldType::Record, Value::Object(_)) => true,
        _ => false,
    };
    if !type_ok {
        out.push(Violation::new(
            path,
            ViolationKind::TypeMismatch {
                expected: f.ty.name().to_string(),
                found: value_kind(v).to_string(),
            },
        ));
        return;
    }
    if let (Some(r), Some(x)) = (&f.range, v.as_f64()) {
        if !r.contains(x) {
            out.push(Violation::new(
                path,
                ViolationKind::OutOfRange {
                    value: x,
                    min: r.min,
                    max: r.max,
                },
            ));
        }
    }
    if let (FieldType::Record, Value::Object(inner)) = (f.ty, v) {
        f.nested().validate_at(path, inner, out);
    }
}

/// Version component a schema change requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionBump {
    Patch,
    Minor,
    Major,
}

/// Classifies the change from `old` to `new`.
///
/// Patch: structurally identical (field order ignored). Minor: only new
/// optional fields, required fields relaxed to optional, or ranges widened.
/// Major: anything else.
pub fn classify_schema_change(old: &StructSchema, new: &StructSchema) -> VersionBump {
    let mut bump = VersionBump::Patch;
    for of in &old.fields {
        let change = match new.field(&of.name) {
            None => VersionBump::Major,
            Some(nf) => classify_field(of, nf),
        };
        bump = bump.max(change);
    }
    for nf in &new.fields {
        if old.field(&nf.name).is_none() {
            let change = if nf.required {
                VersionBump::Major
            } else {
                VersionBump::Minor
            };
            bump = bump.max(change);
        }
    }
    bump
}

fn classify_field(old: &FieldSpec, new: &FieldSpec) -> VersionBump {
    if old.ty != new.ty {
        return VersionBump::Major;
    }
    let mut bump = match (old.required, new.required) {
        (false, true) => return VersionBump::Major,
        (true, false) => VersionBump::Minor,
        _ => VersionBump::Patch,
    };
    match (&old.range, &new.range) {
        (None, None) => {}
        (Some(_), None) => bump = bump.max(VersionBump::Minor),
        (None, Some(_)) => return VersionBump::Major,
        (Some(o), Some(n)) => {
            if o != n {
                if o.within(n, old.ty) {
                    bump = bump.max(VersionBump::Minor);
                } else {
                    return VersionBump::Major;
                }
            }
        }
    }
    if old.ty == FieldType::Record {
        bump = bump.max(classify_schema_change(old.nested(), new.nested()));
    }
    bump
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompatibilityMode {
    Backward,
    Forward,
    Full,
    None,
}

impl CompatibilityMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "backward" => Some(CompatibilityMode::Backward),
            "forward" => Some(CompatibilityMode::Forward),
            "full" => Some(CompatibilityMode::Full),
            "none" => Some(CompatibilityMode::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatIssue {
    Removed,
    TypeChanged { from: FieldType, to: FieldType },
    BecameRequired,
    NewRequired,
    RangeNarrowed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatViolation {
    /// Which direction failed: `backward` (old data under new schema) or
    /// `forward` (new data under old schema).
    pub direction: String,
    pub field: String,
    pub issue: CompatIssue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub compatible: bool,
    pub violations: Vec<CompatViolation>,
}

/// Backward: every payload valid under `old` is valid under `new`.
/// Forward: the converse. Full: both. None: always compatible.
pub fn check_compatibility(
    old: &StructSchema,
    new: &StructSchema,
    mode: CompatibilityMode,
) -> CompatibilityReport {
    let mut violations = Vec::new();
    if matches!(mode, CompatibilityMode::Backward | CompatibilityMode::Full) {
        subsumption_violations(old, new, "", "backward", &mut violations);
    }
    if matches!(mode, CompatibilityMode::Forward | CompatibilityMode::Full) {
        subsumption_violations(new, old, "", "forward", &mut violations);
    }
    CompatibilityReport {
        compatible: violations.is_empty(),
        violations,
    }
}

/// Records every reason some payload valid under `from` fails under `to`.
///
/// Exact because per-field constraints are independent and every
/// well-formed field admits at least one valid value.
fn subsumption_violations(
    from: &StructSchema,
    to: &StructSchema,
    prefix: &str,
    direction: &str,
    out: &mut Vec<CompatViolation>,
) {
    let mut push = |field: String, issue: CompatIssue| {
        out.push(CompatViolation {
            direction: direction.to_string(),
            field,
            issue,
        })
    };
    let mut nested = Vec::new();
    for ff in &from.fields {
        let path = join(prefix, &ff.name);
        let Some(tf) = to.field(&ff.name) else {
            push(path, CompatIssue::Removed);
            continue;
        };
        if !ff.ty.values_subsumed_by(tf.ty) {
            push(
                path,
                CompatIssue::TypeChanged {
                    from: ff.ty,
                    to: tf.ty,
                },
            );
            continue;
        }
        if !ff.required && tf.required {
            push(path.clone(), CompatIssue::BecameRequired);
        }
        if ff.ty == tf.ty {
            if let Some(tr) = &tf.range {
                let contained = ff.range.as_ref().is_some_and(|fr| fr.within(tr, ff.ty));
                if !contained {
                    push(path.clone(), CompatIssue::RangeNarrowed);
                }
            }
            if ff.ty == FieldType::Record {
                nested.push((ff, tf, path));
            }
        }
    }
    for tf in &to.fields {
        if tf.required && from.field(&tf.name).is_none() {
            push(join(prefix, &tf.name), CompatIssue::NewRequired);
        }
    }
    for (ff, tf, path) in nested {
        subsumption_violations(ff.nested(), tf.nested(), &path, direction, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn temp_schema() -> StructSchema {
        StructSchema::new(vec![
            FieldSpec::new("temp_celsius", FieldType::Float, true).with_range(-40.0, 150.0),
            FieldSpec::new("status", FieldType::String, true),
        ])
    }

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn validate_reports_each_problem() {
        let s = temp_schema();
        assert!(s.conforms(&obj(json!({"temp_celsius": 21.5, "status": "ok"}))));
        let v = s.validate(&obj(json!({"temp_celsius": 200.0, "extra": 1})));
        let labels: Vec<_> = v.iter().map(|v| v.kind.label()).collect();
        assert_eq!(labels, ["out_of_range", "missing_required", "unknown_field"]);
        let v = s.validate(&obj(json!({"temp_celsius": "hot", "status": "ok"})));
        assert_eq!(v[0].kind.label(), "type_mismatch");
    }

    #[test]
    fn integer_and_float_are_distinct() {
        let s = StructSchema::new(vec![FieldSpec::new("n", FieldType::Integer, true)]);
        assert!(s.conforms(&obj(json!({"n": 3}))));
        assert!(!s.conforms(&obj(json!({"n": 3.0}))));
    }

    #[test]
    fn nested_records_validate_recursively() {
        let s = StructSchema::new(vec![FieldSpec::new("loc", FieldType::Record, true)
            .with_fields(StructSchema::new(vec![FieldSpec::new("x", FieldType::Integer, true)]))]);
        let v = s.validate(&obj(json!({"loc": {"y": 1}})));
        let fields: Vec<_> = v.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["loc.x", "loc.y"]);
    }

    #[test]
    fn well_formedness() {
        let dup = StructSchema::new(vec![
            FieldSpec::new("a", FieldType::Float, true),
            FieldSpec::new("a", FieldType::Float, false),
        ]);
        assert!(dup.check_well_formed().is_err());
        let bad_range = StructSchema::new(vec![FieldSpec::new("s", FieldType::String, true).with_range(0.0, 1.0)]);
        assert!(bad_range.check_well_formed().is_err());
        let empty_int = StructSchema::new(vec![FieldSpec::new("i", FieldType::Integer, true).with_range(0.2, 0.8)]);
        assert!(empty_int.check_well_formed().is_err());
        assert!(temp_schema().check_well_formed().is_ok());
    }

    #[test]
    fn classify_examples() {
        let old = temp_schema();
        let mut added = old.clone();
        added.fields.push(FieldSpec::new("humidity", FieldType::Float, false));
        assert_eq!(classify_schema_change(&old, &added), VersionBump::Minor);

        let mut removed = old.clone();
        removed.fields.remove(0);
        assert_eq!(classify_schema_change(&old, &removed), VersionBump::Major);

        assert_eq!(classify_schema_change(&old, &old), VersionBump::Patch);

        let mut retyped = old.clone();
        retyped.fields[0].ty = FieldType::String;
        retyped.fields[0].range = None;
        assert_eq!(classify_schema_change(&old, &retyped), VersionBump::Major);
    }

    #[test]
    fn reorder_is_patch() {
        let old = temp_schema();
        let mut swapped = old.clone();
        swapped.fields.reverse();
        assert_eq!(classify_schema_change(&old, &swapped), VersionBump::Patch);
    }

    #[test]
    fn requiredness_changes() {
        let old = temp_schema();
        let mut relaxed = old.clone();
        relaxed.fields[1].required = false;
        assert_eq!(classify_schema_change(&old, &relaxed), VersionBump::Minor);
        assert_eq!(classify_schema_change(&relaxed, &old), VersionBump::Major);
    }

    #[test]
    fn backward_and_forward_on_additive_change() {
        let old = StructSchema::new(vec![FieldSpec::new("temp", FieldType::Float, true)]);
        let new = StructSchema::new(vec![
            FieldSpec::new("temp", FieldType::Float, true),
            FieldSpec::new("humidity", FieldType::Float, false),
        ]);
        assert!(check_compatibility(&old, &new, CompatibilityMode::Backward).compatible);
        let fwd = check_compatibility(&old, &new, CompatibilityMode::Forward);
        assert!(!fwd.compatible);
        assert_eq!(fwd.violations[0].field, "humidity");
        assert!(!check_compatibility(&old, &new, CompatibilityMode::Full).compatible);
        assert!(check_compatibility(&old, &new, CompatibilityMode::None).compatible);
    }

    #[test]
    fn timestamp_widens_to_string() {
        let ts = StructSchema::new(vec![FieldSpec::new("at", FieldType::Timestamp, true)]);
        let st = StructSchema::new(vec![FieldSpec::new("at", FieldType::String, true)]);
        assert!(check_compatibility(&ts, &st, CompatibilityMode::Backward).compatible);
        assert!(!check_compatibility(&st, &ts, CompatibilityMode::Backward).compatible);
    }
}
