use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::eval::{eval_expr, AttrSource, PolicyError, Truth};
use crate::attrs::AttrValue;

/// Key under which the resource age (seconds) is enumerated.
pub const AGE_KEY: &str = "age";

/// Default enumeration bound.
pub const DEFAULT_DOMAIN_LIMIT: u128 = 1_000_000;

/// One point of an attribute domain: path text to value.
pub type Assignment = BTreeMap<String, AttrValue>;

impl AttrSource for Assignment {
    fn lookup(&self, path: &AttrPath) -> Option<AttrValue> {
        self.get(&path.to_string()).cloned()
    }

    fn age_seconds(&self) -> Option<i64> {
        self.get(AGE_KEY).and_then(AttrValue::as_f64).map(|s| s as i64)
    }
}

/// Finite attribute domains for exhaustive checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeDomains {
    pub values: BTreeMap<String, Vec<AttrValue>>,
}

fn push_value(out: &mut Vec<AttrValue>, v: AttrValue) {
    if !out.contains(&v) {
        out.push(v);
    }
}

fn lit_value(l: &Literal) -> AttrValue {
    match l {
        Literal::Str(s) => AttrValue::Str(s.clone()),
        Literal::Num(n) => AttrValue::Num(*n),
        Literal::Bool(b) => AttrValue::Bool(*b),
    }
}

#[derive(Default)]
struct PathInfo {
    lits: Vec<AttrValue>,
    ordered: bool,
}

fn collect(e: &Expr, info: &mut BTreeMap<String, PathInfo>, links: &mut Vec<(String, String)>, ages: &mut Vec<i64>) {
    match e {
        Expr::Or(xs) | Expr::And(xs) => xs.iter().for_each(|x| collect(x, info, links, ages)),
        Expr::Not(x) => collect(x, info, links, ages),
        Expr::Cmp { path, op, rhs } => {
            let ordered = !matches!(op, CmpOp::Eq | CmpOp::Ne);
            let entry = info.entry(path.to_string()).or_default();
            entry.ordered |= ordered;
            match rhs {
                Operand::Lit(l) => push_value(&mut entry.lits, lit_value(l)),
                Operand::Path(p) => {
                    info.entry(p.to_string()).or_default().ordered |= ordered;
                    links.push((path.to_string(), p.to_string()));
                }
            }
        }
        Expr::In { path, values } => {
            let entry = info.entry(path.to_string()).or_default();
            for v in values {
                push_value(&mut entry.lits, lit_value(v));
            }
        }
        Expr::Age { duration, .. } => ages.push(duration.as_seconds()),
    }
}

fn expand(info: &PathInfo) -> Vec<AttrValue> {
    let mut out = Vec::new();
    let mut nums: Vec<f64> = info.lits.iter().filter_map(AttrValue::as_f64).collect();
    nums.sort_by(f64::total_cmp);
    nums.dedup();
    if let (Some(lo), Some(hi)) = (nums.first(), nums.last()) {
        push_value(&mut out, AttrValue::Num(lo - 1.0));
        for w in nums.windows(2) {
            push_value(&mut out, AttrValue::Num(w[0]));
            push_value(&mut out, AttrValue::Num((w[0] + w[1]) / 2.0));
        }
        push_value(&mut out, AttrValue::Num(*hi));
        push_value(&mut out, AttrValue::Num(hi + 1.0));
    }
    let mut strs: Vec<&str> = info.lits.iter().filter_map(AttrValue::as_str).collect();
    strs.sort();
    strs.dedup();
    if !strs.is_empty() {
        for s in &strs {
            push_value(&mut out, AttrValue::Str(s.to_string()));
            if info.ordered {
                push_value(&mut out, AttrValue::Str(format!("{s}\u{0}")));
            }
        }
        if info.ordered {
            push_value(&mut out, AttrValue::Str(String::new()));
        } else {
            push_value(&mut out, AttrValue::Str("<other>".into()));
        }
    }
    if info.lits.iter().any(|v| v.as_bool().is_some()) {
        push_value(&mut out, AttrValue::Bool(false));
        push_value(&mut out, AttrValue::Bool(true));
    }
    out
}

impl AttributeDomains {
    pub fn new() -> Self {
        AttributeDomains::default()
    }

    pub fn with(mut self, path: &str, values: Vec<AttrValue>) -> Self {
        self.values.insert(path.to_string(), values);
        self
    }

    /// Domains that separate every literal, midpoint and "other" value the
    /// given policies can distinguish.
    pub fn derive<'a>(policies: impl IntoIterator<Item = &'a PolicyAst>) -> Self {
        let mut info = BTreeMap::new();
        let mut links = Vec::new();
        let mut ages = Vec::new();
        for p in policies {
            for r in &p.rules {
                collect(&r.predicate, &mut info, &mut links, &mut ages);
            }
            for r in &p.retention {
                collect(&r.predicate, &mut info, &mut links, &mut ages);
            }
        }
        let mut values: BTreeMap<String, Vec<AttrValue>> =
            info.iter().map(|(k, i)| (k.clone(), expand(i))).collect();
        loop {
            let mut changed = false;
            for (a, b) in &links {
                let union: Vec<AttrValue> = values[a].iter().chain(values[b].iter()).cloned().collect();
                for key in [a, b] {
                    let slot = values.get_mut(key).expect("linked path has a domain");
                    for v in &union {
                        if !slot.contains(v) {
                            slot.push(v.clone());
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (a, _) in &links {
            if values[a].len() < 2 {
                let slot = values.get_mut(a).expect("linked path has a domain");
                push_value(slot, AttrValue::Str("<a>".into()));
                push_value(slot, AttrValue::Str("<b>".into()));
                let copy = slot.clone();
                for (x, y) in &links {
                    if x == a {
                        values.insert(y.clone(), copy.clone());
                    }
                }
            }
        }
        if !ages.is_empty() {
            let mut pts = BTreeSet::new();
            pts.insert(0i64);
            for d in ages {
                pts.insert((d - 1).max(0));
                pts.insert(d);
                pts.insert(d + 1);
            }
            values.insert(
                AGE_KEY.to_string(),
                pts.into_iter().map(|s| AttrValue::Num(s as f64)).collect(),
            );
        }
        AttributeDomains { values }
    }

    /// Union with `other`, keeping every value from both.
    pub fn merge(mut self, other: &AttributeDomains) -> Self {
        for (k, vs) in &other.values {
            let slot = self.values.entry(k.clone()).or_default();
            for v in vs {
                push_value(slot, v.clone());
            }
        }
        self
    }

    pub fn size(&self) -> u128 {
        self.values
            .values()
            .fold(1u128, |acc, v| acc.saturating_mul(v.len().max(1) as u128))
    }

    /// Visits every assignment; empty domains leave their path unset.
    pub fn for_each(&self, limit: u128, mut f: impl FnMut(&Assignment)) -> Result<u128, PolicyError> {
        let size = self.size();
        if size > limit {
            return Err(PolicyError::DomainTooLarge { size, limit });
        }
        let keys: Vec<&String> = self.values.keys().collect();
        let doms: Vec<&Vec<AttrValue>> = self.values.values().collect();
        let mut idx = vec![0usize; keys.len()];
        let mut current = Assignment::new();
        loop {
            current.clear();
            for (i, k) in keys.iter().enumerate() {
                if let Some(v) = doms[i].get(idx[i]) {
                    current.insert((*k).clone(), v.clone());
                }
            }
            f(&current);
            let mut carry = true;
            for i in (0..idx.len()).rev() {
                idx[i] += 1;
                if idx[i] < doms[i].len() {
                    carry = false;
                    break;
                }
                idx[i] = 0;
            }
            if carry {
                break;
            }
        }
        Ok(size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LintViolation {
    /// A Permit admits a request the baseline forbids.
    PermitsForbidden {
        rule: String,
        baseline_rule: String,
        witness: Assignment,
    },
    /// A retention bound weaker than the baseline's on overlapping data.
    RelaxesRetention {
        rule: String,
        baseline_rule: String,
        detail: String,
        witness: Assignment,
    },
    /// Enumeration bound exceeded; the policy was not fully checked.
    Inconclusive { size: u128 },
    /// No baseline supplied for a non-enterprise policy.
    MissingBaseline,
}

struct RetentionSpec {
    id: String,
    min: DurationLit,
    max: Option<DurationLit>,
    predicate: Expr,
}

fn retention_specs(p: &PolicyAst) -> Vec<RetentionSpec> {
    let mut out: Vec<RetentionSpec> = p
        .retention
        .iter()
        .enumerate()
        .map(|(i, r)| RetentionSpec {
            id: p.retention_id(i),
            min: r.min,
            max: r.max,
            predicate: r.predicate.clone(),
        })
        .collect();
    for (i, r) in p.rules.iter().enumerate() {
        for o in &r.obligations {
            if let Obligation::Retain { min, max } = o {
                out.push(RetentionSpec {
                    id: p.rule_id(i),
                    min: *min,
                    max: *max,
                    predicate: r.predicate.clone(),
                });
            }
        }
    }
    out
}

fn relaxation(child: &RetentionSpec, base: &RetentionSpec) -> Option<String> {
    let cmin = child.min.as_seconds();
    if cmin < base.min.as_seconds() {
        return Some(format!("minimum {} below baseline {}", child.min, base.min));
    }
    if let Some(cmax) = child.max {
        if cmax.as_seconds() < base.min.as_seconds() {
            return Some(format!("maximum {} below baseline minimum {}", cmax, base.min));
        }
    }
    if let Some(bmax) = base.max {
        match child.max {
            None => return Some(format!("drops baseline maximum {bmax}")),
            Some(cmax) if cmax.as_seconds() > bmax.as_seconds() => {
                return Some(format!("maximum {cmax} above baseline {bmax}"))
            }
            _ => {}
        }
    }
    None
}

/// Checks that a Domain or Plant policy only extends `baseline`: none of
/// its Permits admits a request the baseline forbids, and none of its
/// retention bounds is weaker on data the baseline also covers.
pub fn lint_policy(ast: &PolicyAst, baseline: &[PolicyAst]) -> Vec<LintViolation> {
    lint_policy_bounded(ast, baseline, DEFAULT_DOMAIN_LIMIT)
}

pub fn lint_policy_bounded(ast: &PolicyAst, baseline: &[PolicyAst], limit: u128) -> Vec<LintViolation> {
    if ast.layer == Layer::Enterprise {
        return Vec::new();
    }
    let parents: Vec<&PolicyAst> = baseline.iter().filter(|b| b.layer < ast.layer).collect();
    if parents.is_empty() {
        return if ast.rules.is_empty() && ast.retention.is_empty() {
            Vec::new()
        } else {
            vec![LintViolation::MissingBaseline]
        };
    }
    let forbids: Vec<(String, &Rule)> = parents
        .iter()
        .flat_map(|p| {
            p.rules
                .iter()
                .enumerate()
                .filter(|(_, r)| r.effect == Effect::Forbid)
                .map(move |(i, r)| (p.rule_id(i), r))
        })
        .collect();
    let base_ret: Vec<RetentionSpec> = parents.iter().flat_map(|p| retention_specs(p)).collect();
    let own_ret = retention_specs(ast);
    let permits: Vec<(String, &Rule)> = ast
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.effect == Effect::Permit)
        .map(|(i, r)| (ast.rule_id(i), r))
        .collect();
    if (permits.is_empty() || forbids.is_empty()) && (own_ret.is_empty() || base_ret.is_empty()) {
        return Vec::new();
    }

    let domains = AttributeDomains::derive(std::iter::once(ast).chain(parents.iter().copied()));
    let mut found: BTreeMap<(String, String), LintViolation> = BTreeMap::new();
    let result = domains.for_each(limit, |a| {
        for (pid, p) in &permits {
            if eval_expr(&p.predicate, a) != Truth::True {
                continue;
            }
            for (fid, f) in &forbids {
                if eval_expr(&f.predicate, a) == Truth::True {
                    found.entry((pid.clone(), fid.clone())).or_insert_with(|| LintViolation::PermitsForbidden {
                        rule: pid.clone(),
                        baseline_rule: fid.clone(),
                        witness: a.clone(),
                    });
                }
            }
        }
        for c in &own_ret {
            if eval_expr(&c.predicate, a) != Truth::True {
                continue;
            }
            for b in &base_ret {
                let key = (c.id.clone(), b.id.clone());
                if found.contains_key(&key) || eval_expr(&b.predicate, a) != Truth::True {
                    continue;
                }
                if let Some(detail) = relaxation(c, b) {
                    found.insert(
                        key,
                        LintViolation::RelaxesRetention {
                            rule: c.id.clone(),
                            baseline_rule: b.id.clone(),
                            detail,
                            witness: a.clone(),
                        },
                    );
                }
            }
        }
    });
    match result {
        Ok(_) => found.into_values().collect(),
        Err(PolicyError::DomainTooLarge { size, .. }) => vec![LintViolation::Inconclusive { size }],
        Err(_) => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub layer: Layer,
    pub assignment: Assignment,
    pub permits: Vec<String>,
    pub forbids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub checked: u128,
    pub conflicts: Vec<Conflict>,
}

/// Enumerates every assignment of `domains` and reports those on which a
/// Permit and a Forbid of the same layer both match.
pub fn detect_conflicts(
    policies: &[PolicyAst],
    domains: &AttributeDomains,
    limit: u128,
) -> Result<ConflictReport, PolicyError> {
    let mut conflicts = Vec::new();
    let checked = domains.for_each(limit, |a| {
        for layer in Layer::ALL {
            let mut permits = Vec::new();
            let mut forbids = Vec::new();
            for p in policies.iter().filter(|p| p.layer == layer) {
                for (i, r) in p.rules.iter().enumerate() {
                    if eval_expr(&r.predicate, a) != Truth::True {
                        continue;
                    }
                    match r.effect {
                        Effect::Permit => permits.push(p.rule_id(i)),
                        Effect::Forbid => forbids.push(p.rule_id(i)),
                        Effect::Escalate => {}
                    }
                }
            }
            if !permits.is_empty() && !forbids.is_empty() {
                conflicts.push(Conflict {
                    layer,
                    assignment: a.clone(),
                    permits,
                    forbids,
                });
            }
        }
    })?;
    Ok(ConflictReport { checked, conflicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    fn p(src: &str) -> PolicyAst {
        parse_policy(src).unwrap()
    }

    fn enterprise() -> PolicyAst {
        p(r#"policy ent layer enterprise category access version 1.0.0
  permit when subject.role == "Analyst" and subject.mfa == true
  forbid when resource.classification == "Restricted" and subject.role == "Intern"
  retain 5y..7y when resource.category == "quality-inspection""#)
    }

    #[test]
    fn domain_permit_for_intern_on_restricted_is_flagged() {
        let d = p(r#"policy dom layer domain category access version 1.0.0
  permit when subject.role == "Intern" and resource.classification == "Restricted""#);
        let v = lint_policy(&d, &[enterprise()]);
        assert_eq!(v.len(), 1);
        let LintViolation::PermitsForbidden { witness, baseline_rule, .. } = &v[0] else {
            panic!("unexpected {v:?}")
        };
        assert_eq!(baseline_rule, "ent#1");
        assert_eq!(witness["subject.role"], AttrValue::from("Intern"));
    }

    #[test]
    fn extra_mfa_requirement_is_clean() {
        let d = p(r#"policy dom layer domain category access version 1.0.0
  permit when subject.role == "Analyst" and subject.mfa == true and subject.clearance >= 3"#);
        assert!(lint_policy(&d, &[enterprise()]).is_empty());
    }

    #[test]
    fn empty_domain_policy_is_clean() {
        let mut d = PolicyAst::new("dom", Layer::Domain, Category::Access);
        assert!(lint_policy(&d, &[enterprise()]).is_empty());
        d.rules.clear();
        assert!(lint_policy(&d, &[]).is_empty());
    }

    #[test]
    fn retention_relaxation_is_flagged() {
        let d = p(r#"policy dom layer domain category compliance version 1.0.0
  retain 3y when resource.category == "quality-inspection" and asset.site == "berlin""#);
        let v = lint_policy(&d, &[enterprise()]);
        assert!(matches!(&v[..], [LintViolation::RelaxesRetention { .. }]));
        let tighter = p(r#"policy dom layer domain category compliance version 1.0.0
  retain 6y..7y when resource.category == "quality-inspection""#);
        assert!(lint_policy(&tighter, &[enterprise()]).is_empty());
    }

    #[test]
    fn same_predicate_conflict() {
        let e = p(r#"policy e layer enterprise category access version 1.0.0
  permit when subject.role == "A"
  forbid when subject.role == "A""#);
        let doms = AttributeDomains::derive([&e]);
        let r = detect_conflicts(&[e], &doms, DEFAULT_DOMAIN_LIMIT).unwrap();
        assert_eq!(r.conflicts.len(), 1);
    }

    #[test]
    fn disjoint_predicates_do_not_conflict() {
        let e = p(r#"policy e layer enterprise category access version 1.0.0
  permit when subject.role == "A"
  forbid when subject.role == "B""#);
        let doms = AttributeDomains::derive([&e]);
        assert!(detect_conflicts(&[e], &doms, DEFAULT_DOMAIN_LIMIT).unwrap().conflicts.is_empty());
    }

    #[test]
    fn overlap_reports_the_single_assignment() {
        let e = p(r#"policy e layer enterprise category access version 1.0.0
  permit when subject.role == "Analyst"
  forbid when subject.mfa == false and subject.role in {"Analyst", "Operator"}"#);
        let doms = AttributeDomains::new()
            .with("subject.role", vec!["Analyst".into(), "Intern".into()])
            .with("subject.mfa", vec![true.into(), false.into()]);
        let r = detect_conflicts(&[e], &doms, DEFAULT_DOMAIN_LIMIT).unwrap();
        assert_eq!(r.checked, 4);
        assert_eq!(r.conflicts.len(), 1);
        let a = &r.conflicts[0].assignment;
        assert_eq!(a["subject.role"], AttrValue::from("Analyst"));
        assert_eq!(a["subject.mfa"], AttrValue::from(false));
    }

    #[test]
    fn domain_too_large() {
        let vals: Vec<AttrValue> = (0..1000).map(|i| AttrValue::Num(i as f64)).collect();
        let doms = AttributeDomains::new()
            .with("subject.a", vals.clone())
            .with("subject.b", vals.clone())
            .with("subject.c", vals);
        assert!(matches!(
            detect_conflicts(&[], &doms, DEFAULT_DOMAIN_LIMIT),
            Err(PolicyError::DomainTooLarge { .. })
        ));
    }

    #[test]
    fn derived_domains_separate_numeric_thresholds() {
        let e = p("policy e layer enterprise category access version 1.0.0\n permit when subject.clearance >= 3 and age < 10d");
        let d = AttributeDomains::derive([&e]);
        let cl = &d.values["subject.clearance"];
        assert!(cl.contains(&AttrValue::Num(2.0)) && cl.contains(&AttrValue::Num(3.0)) && cl.contains(&AttrValue::Num(4.0)));
        assert!(d.values[AGE_KEY].contains(&AttrValue::Num(864_000.0)));
    }
}
