use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use crate::attrs::{AttrMap, AttrValue, Classification};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy `{policy_id}` declares layer {declared:?} but was supplied as {slot:?}")]
    LayerMismatch {
        policy_id: String,
        declared: Layer,
        slot: Layer,
    },
    #[error("policy `{0}` supplied more than once")]
    DuplicatePolicy(String),
    #[error("unresolvable conflict in {layer:?} layer: `{permit}` and `{forbid}` share a predicate")]
    ConflictUnresolvable {
        layer: Layer,
        permit: String,
        forbid: String,
    },
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("attribute domain has {size} assignments, bound is {limit}")]
    DomainTooLarge { size: u128, limit: u128 },
}

/// Anything predicates can read attributes from.
pub trait AttrSource {
    fn lookup(&self, path: &AttrPath) -> Option<AttrValue>;
    /// Resource age in seconds.
    fn age_seconds(&self) -> Option<i64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRequest {
    #[serde(default)]
    pub subject: AttrMap,
    #[serde(default)]
    pub resource: AttrMap,
    #[serde(default)]
    pub asset: AttrMap,
    #[serde(default)]
    pub env: AttrMap,
    pub action: String,
    pub timestamp: DateTime<Utc>,
}

impl AttributeRequest {
    pub fn new(action: &str, timestamp: DateTime<Utc>, classification: Classification) -> Self {
        let mut resource = AttrMap::new();
        resource.insert("classification".into(), classification.as_str().into());
        AttributeRequest {
            subject: AttrMap::new(),
            resource,
            asset: AttrMap::new(),
            env: AttrMap::new(),
            action: action.to_string(),
            timestamp,
        }
    }

    pub fn set(&mut self, path: &AttrPath, value: AttrValue) {
        let key = path.key();
        match path.root {
            AttrRoot::Subject => self.subject.insert(key, value),
            AttrRoot::Resource => self.resource.insert(key, value),
            AttrRoot::Asset => self.asset.insert(key, value),
            AttrRoot::Env => {
                if key == "action" {
                    if let AttrValue::Str(s) = &value {
                        self.action = s.clone();
                    }
                }
                self.env.insert(key, value)
            }
        };
    }

    pub fn with(mut self, path: &str, value: impl Into<AttrValue>) -> Self {
        let p = AttrPath::parse(path).expect("valid attribute path");
        self.set(&p, value.into());
        self
    }

    pub fn classification(&self) -> Option<Classification> {
        self.resource
            .get("classification")
            .and_then(AttrValue::as_str)
            .and_then(Classification::parse)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match self.resource.get("classification") {
            None => Err(PolicyError::MalformedRequest(
                "resource.classification is required".into(),
            )),
            Some(v) if v.as_str().and_then(Classification::parse).is_none() => Err(
                PolicyError::MalformedRequest(format!("classification `{v}` is not in the taxonomy")),
            ),
            _ => Ok(()),
        }
    }
}

impl AttrSource for AttributeRequest {
    fn lookup(&self, path: &AttrPath) -> Option<AttrValue> {
        let key = path.key();
        match path.root {
            AttrRoot::Subject => self.subject.get(&key).cloned(),
            AttrRoot::Resource => self.resource.get(&key).cloned(),
            AttrRoot::Asset => self.asset.get(&key).cloned(),
            AttrRoot::Env => match key.as_str() {
                "action" => Some(AttrValue::Str(self.action.clone())),
                "timestamp" => Some(AttrValue::Str(self.timestamp.to_rfc3339())),
                _ => self.env.get(&key).cloned(),
            },
        }
    }

    fn age_seconds(&self) -> Option<i64> {
        let created = self.resource.get("created_at")?.as_str()?;
        let created = DateTime::parse_from_rfc3339(created).ok()?;
        Some((self.timestamp - created.with_timezone(&Utc)).num_seconds())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Missing(String),
}

fn lit_value(l: &Literal) -> AttrValue {
    match l {
        Literal::Str(s) => AttrValue::Str(s.clone()),
        Literal::Num(n) => AttrValue::Num(*n),
        Literal::Bool(b) => AttrValue::Bool(*b),
    }
}

fn compare(lhs: &AttrValue, op: CmpOp, rhs: &AttrValue) -> bool {
    match lhs.partial_order(rhs) {
        Some(ord) => op.holds(ord),
        None => op == CmpOp::Ne,
    }
}

/// Three-valued evaluation; absent attributes yield `Missing`.
pub fn eval_expr(e: &Expr, src: &dyn AttrSource) -> Truth {
    match e {
        Expr::Or(xs) => {
            let mut missing = None;
            for x in xs {
                match eval_expr(x, src) {
                    Truth::True => return Truth::True,
                    Truth::Missing(p) => {
                        missing.get_or_insert(p);
                    }
                    Truth::False => {}
                }
            }
            missing.map_or(Truth::False, Truth::Missing)
        }
        Expr::And(xs) => {
            let mut missing = None;
            for x in xs {
                match eval_expr(x, src) {
                    Truth::False => return Truth::False,
                    Truth::Missing(p) => {
                        missing.get_or_insert(p);
                    }
                    Truth::True => {}
                }
            }
            missing.map_or(Truth::True, Truth::Missing)
        }
        Expr::Not(x) => match eval_expr(x, src) {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            m => m,
        },
        Expr::Cmp { path, op, rhs } => {
            let Some(lhs) = src.lookup(path) else {
                return Truth::Missing(path.to_string());
            };
            let rhs = match rhs {
                Operand::Lit(l) => lit_value(l),
                Operand::Path(p) => match src.lookup(p) {
                    Some(v) => v,
                    None => return Truth::Missing(p.to_string()),
                },
            };
            if compare(&lhs, *op, &rhs) {
                Truth::True
            } else {
                Truth::False
            }
        }
        Expr::In { path, values } => {
            let Some(v) = src.lookup(path) else {
                return Truth::Missing(path.to_string());
            };
            if values.iter().any(|l| compare(&v, CmpOp::Eq, &lit_value(l))) {
                Truth::True
            } else {
                Truth::False
            }
        }
        Expr::Age { op, duration } => match src.age_seconds() {
            None => Truth::Missing("resource.created_at".into()),
            Some(age) => {
                if op.holds(age.cmp(&duration.as_seconds())) {
                    Truth::True
                } else {
                    Truth::False
                }
            }
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Allow,
    Deny,
    Escalate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reason {
    Rule {
        rule: String,
        layer: Layer,
        effect: Effect,
    },
    MissingAttribute {
        rule: String,
        path: String,
    },
    NoPermit {
        layer: Layer,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleResult {
    Matched,
    NotMatched,
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule: String,
    pub layer: Layer,
    pub effect: Effect,
    pub result: RuleResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub obligations: Vec<Obligation>,
    pub reasons: Vec<Reason>,
    pub trace: Vec<TraceStep>,
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        self.outcome == Outcome::Allow
    }

    pub fn deny(reasons: Vec<Reason>) -> Decision {
        Decision {
            outcome: Outcome::Deny,
            obligations: Vec::new(),
            reasons,
            trace: Vec::new(),
        }
    }

    /// Masked attribute keys (`mask(resource.x)` yields `x`).
    pub fn masked_fields(&self) -> Vec<String> {
        self.obligations
            .iter()
            .filter_map(|o| match o {
                Obligation::Mask(p) => Some(p.key()),
                _ => None,
            })
            .collect()
    }

    pub fn aggregation(&self) -> Option<&str> {
        self.obligations.iter().find_map(|o| match o {
            Obligation::Aggregate(g) => Some(g.as_str()),
            _ => None,
        })
    }
}

fn push_unique(out: &mut Vec<Obligation>, obligations: &[Obligation]) {
    for o in obligations {
        if !out.contains(o) {
            out.push(o.clone());
        }
    }
}

/// Composed enterprise, domain and plant policies. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectivePolicy {
    policies: Vec<PolicyAst>,
}

fn check_layer(policies: &[PolicyAst], slot: Layer) -> Result<(), PolicyError> {
    for p in policies {
        if p.layer != slot {
            return Err(PolicyError::LayerMismatch {
                policy_id: p.policy_id.clone(),
                declared: p.layer,
                slot,
            });
        }
    }
    Ok(())
}

/// Builds the effective policy. Same-layer Permit and Forbid rules with
/// identical predicates cannot be reconciled and are rejected.
pub fn compose_layers(
    enterprise: &[PolicyAst],
    domain: &[PolicyAst],
    plant: &[PolicyAst],
) -> Result<EffectivePolicy, PolicyError> {
    check_layer(enterprise, Layer::Enterprise)?;
    check_layer(domain, Layer::Domain)?;
    check_layer(plant, Layer::Plant)?;
    let policies: Vec<PolicyAst> = enterprise.iter().chain(domain).chain(plant).cloned().collect();
    let mut seen = std::collections::BTreeSet::new();
    for p in &policies {
        if !seen.insert(p.policy_id.as_str()) {
            return Err(PolicyError::DuplicatePolicy(p.policy_id.clone()));
        }
    }
    for layer in Layer::ALL {
        let rules: Vec<(String, &Rule)> = policies
            .iter()
            .filter(|p| p.layer == layer)
            .flat_map(|p| p.rules.iter().enumerate().map(move |(i, r)| (p.rule_id(i), r)))
            .collect();
        for (pid, p) in rules.iter().filter(|(_, r)| r.effect == Effect::Permit) {
            for (fid, f) in rules.iter().filter(|(_, r)| r.effect == Effect::Forbid) {
                if p.predicate == f.predicate {
                    return Err(PolicyError::ConflictUnresolvable {
                        layer,
                        permit: pid.clone(),
                        forbid: fid.clone(),
                    });
                }
            }
        }
    }
    Ok(EffectivePolicy { policies })
}

/// Keeps, per policy id, the version with the greatest effective date not
/// after `today`. Undated versions are always effective; ties go to the
/// higher version.
pub fn select_effective_versions(policies: &[PolicyAst], today: NaiveDate) -> Vec<PolicyAst> {
    let mut best: BTreeMap<&str, &PolicyAst> = BTreeMap::new();
    for p in policies {
        if p.effective.is_some_and(|d| d > today) {
            continue;
        }
        let key = (p.effective.unwrap_or(NaiveDate::MIN), &p.version);
        match best.get(p.policy_id.as_str()) {
            Some(cur) if (cur.effective.unwrap_or(NaiveDate::MIN), &cur.version) >= key => {}
            _ => {
                best.insert(p.policy_id.as_str(), p);
            }
        }
    }
    best.into_values().cloned().collect()
}

/// Selects effective versions and composes them by declared layer.
pub fn compose_effective(policies: &[PolicyAst], today: NaiveDate) -> Result<EffectivePolicy, PolicyError> {
    let selected = select_effective_versions(policies, today);
    let by = |l: Layer| selected.iter().filter(|p| p.layer == l).cloned().collect::<Vec<_>>();
    compose_layers(&by(Layer::Enterprise), &by(Layer::Domain), &by(Layer::Plant))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "disposition", rename_all = "snake_case")]
pub enum Disposition {
    MustRetain { until: DateTime<Utc> },
    MayDelete,
    MustDelete { by: DateTime<Utc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionDecision {
    pub disposition: Disposition,
    pub min: Option<DurationLit>,
    pub max: Option<DurationLit>,
    pub rules: Vec<String>,
}

impl EffectivePolicy {
    pub fn policies(&self) -> &[PolicyAst] {
        &self.policies
    }

    pub fn layer(&self, layer: Layer) -> impl Iterator<Item = &PolicyAst> {
        self.policies.iter().filter(move |p| p.layer == layer)
    }

    pub fn enterprise_only(&self) -> EffectivePolicy {
        EffectivePolicy {
            policies: self.layer(Layer::Enterprise).cloned().collect(),
        }
    }

    /// Deny-overrides, then escalate, then permit. Allow needs a matching
    /// enterprise Permit and a matching Permit in every other layer that
    /// has Permit rules for the action.
    pub fn evaluate(&self, req: &dyn AttrSource, action: &str) -> Decision {
        let mut trace = Vec::new();
        let mut forbids = Vec::new();
        let mut escalations = Vec::new();
        let mut uncertain = Vec::new();
        let mut permits: BTreeMap<Layer, Vec<(String, &Rule)>> = BTreeMap::new();
        let mut permit_layers = std::collections::BTreeSet::new();
        let mut permit_missing: BTreeMap<Layer, Vec<Reason>> = BTreeMap::new();

        for p in self.policies.iter().filter(|p| p.category.governs(action)) {
            for (i, rule) in p.rules.iter().enumerate() {
                let id = p.rule_id(i);
                let truth = eval_expr(&rule.predicate, req);
                if rule.effect == Effect::Permit {
                    permit_layers.insert(p.layer);
                }
                let result = match &truth {
                    Truth::True => RuleResult::Matched,
                    Truth::False => RuleResult::NotMatched,
                    Truth::Missing(path) => RuleResult::Missing(path.clone()),
                };
                trace.push(TraceStep {
                    rule: id.clone(),
                    layer: p.layer,
                    effect: rule.effect,
                    result,
                });
                match (truth, rule.effect) {
                    (Truth::True, Effect::Forbid) => forbids.push(Reason::Rule {
                        rule: id,
                        layer: p.layer,
                        effect: Effect::Forbid,
                    }),
                    (Truth::True, Effect::Escalate) => escalations.push((id, p.layer, rule)),
                    (Truth::True, Effect::Permit) => permits.entry(p.layer).or_default().push((id, rule)),
                    (Truth::Missing(path), Effect::Permit) => permit_missing
                        .entry(p.layer)
                        .or_default()
                        .push(Reason::MissingAttribute { rule: id, path }),
                    (Truth::Missing(path), _) => uncertain.push(Reason::MissingAttribute { rule: id, path }),
                    (Truth::False, _) => {}
                }
            }
        }

        let deny = |reasons: Vec<Reason>, trace: Vec<TraceStep>| Decision {
            outcome: Outcome::Deny,
            obligations: Vec::new(),
            reasons,
            trace,
        };

        if !forbids.is_empty() || !uncertain.is_empty() {
            forbids.extend(uncertain);
            return deny(forbids, trace);
        }
        if !permits.contains_key(&Layer::Enterprise) {
            let mut reasons = vec![Reason::NoPermit {
                layer: Layer::Enterprise,
            }];
            reasons.extend(permit_missing.remove(&Layer::Enterprise).unwrap_or_default());
            return deny(reasons, trace);
        }
        if !escalations.is_empty() {
            let mut obligations = Vec::new();
            let mut reasons = Vec::new();
            for (id, layer, rule) in escalations {
                push_unique(&mut obligations, &rule.obligations);
                reasons.push(Reason::Rule {
                    rule: id,
                    layer,
                    effect: Effect::Escalate,
                });
            }
            push_unique(&mut obligations, &[Obligation::NotifySteward]);
            return Decision {
                outcome: Outcome::Escalate,
                obligations,
                reasons,
                trace,
            };
        }
        permit_layers.insert(Layer::Enterprise);
        let mut reasons = Vec::new();
        for layer in &permit_layers {
            if !permits.contains_key(layer) {
                reasons.push(Reason::NoPermit { layer: *layer });
                reasons.extend(permit_missing.remove(layer).unwrap_or_default());
            }
        }
        if !reasons.is_empty() {
            return deny(reasons, trace);
        }
        let mut obligations = Vec::new();
        for (layer, rules) in permits {
            for (id, rule) in rules {
                push_unique(&mut obligations, &rule.obligations);
                reasons.push(Reason::Rule {
                    rule: id,
                    layer,
                    effect: Effect::Permit,
                });
            }
        }
        Decision {
            outcome: Outcome::Allow,
            obligations,
            reasons,
            trace,
        }
    }

    /// Retention applies the longest minimum and the shortest maximum of
    /// every matching rule. A rule whose predicate cannot be decided still
    /// contributes its minimum but not its maximum.
    pub fn evaluate_retention(&self, req: &AttributeRequest) -> RetentionDecision {
        let mut min: Option<DurationLit> = None;
        let mut max: Option<DurationLit> = None;
        let mut rules = Vec::new();
        for p in &self.policies {
            for (i, r) in p.retention.iter().enumerate() {
                let truth = eval_expr(&r.predicate, req);
                if truth == Truth::False {
                    continue;
                }
                rules.push(p.retention_id(i));
                if min.is_none_or(|m| r.min.as_seconds() > m.as_seconds()) {
                    min = Some(r.min);
                }
                if truth == Truth::True {
                    if let Some(rmax) = r.max {
                        if max.is_none_or(|m| rmax.as_seconds() < m.as_seconds()) {
                            max = Some(rmax);
                        }
                    }
                }
            }
        }
        let created = req
            .resource
            .get("created_at")
            .and_then(AttrValue::as_str)
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|d| d.with_timezone(&Utc));
        let disposition = match created {
            None if min.is_some() => Disposition::MustRetain {
                until: DateTime::<Utc>::MAX_UTC,
            },
            None => Disposition::MayDelete,
            Some(created) => retention_disposition(created, req.timestamp, min, max),
        };
        RetentionDecision {
            disposition,
            min,
            max,
            rules,
        }
    }
}

/// Interval semantics: retain while age < min, deletable in [min, max),
/// deletion due once age ≥ max. A max below min is raised to min.
pub fn retention_disposition(
    created: DateTime<Utc>,
    now: DateTime<Utc>,
    min: Option<DurationLit>,
    max: Option<DurationLit>,
) -> Disposition {
    let age = (now - created).num_seconds();
    let min_s = min.map_or(0, DurationLit::as_seconds);
    if age < min_s {
        return Disposition::MustRetain {
            until: created + chrono::Duration::seconds(min_s),
        };
    }
    match max {
        Some(m) => {
            let max_s = m.as_seconds().max(min_s);
            if age >= max_s {
                Disposition::MustDelete {
                    by: created + chrono::Duration::seconds(max_s),
                }
            } else {
                Disposition::MayDelete
            }
        }
        None => Disposition::MayDelete,
    }
}

/// Evaluates `req` against the composed policy. Fails only on a malformed
/// request; absent attributes deny.
pub fn evaluate_request(policy: &EffectivePolicy, req: &AttributeRequest) -> Result<Decision, PolicyError> {
    req.validate()?;
    Ok(policy.evaluate(req, &req.action))
}
