//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use govfabric_core::attrs::Classification;
use govfabric_core::boundary::{
    AuditEntry, BoundaryError, Disposition, Fabric, FieldSource, ProductDefinition, ProductTransform, ValidationReport,
    GENESIS_HASH,
};
use govfabric_core::contract::{
    check_compatibility, classify_schema_change, CompatibilityMode, ContractRef, ContractState, DataContract,
    FieldSpec, FieldType, OrderingGuarantee, Ownership, QualitySla, Raci, Steward, StructSchema, TemporalRules,
    TimestampSemantics, VersionBump,
};
use govfabric_core::mapping::{apply_mapping, convert_unit, MappingInput, RawSignal};
use govfabric_core::policy::{
    compose_effective, evaluate_request, parse_policy, print_policy, AttributeRequest, Disposition as Retention,
    Outcome,
};
use govfabric_core::privacy::{
    aggregate_records, laplace_noise, min_group_size, AggregationLevel, PrivacyBudget, PrivacyError,
};
use govfabric_sim::{simulate, FaultKind, FleetSpec, Run, Scenario};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

type Verdict = Result<String, String>;
type Flag = fn(&ValidationReport) -> bool;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_builtin(name: &str) -> Run {
    simulate(&Scenario::builtin(name).expect("builtin scenario")).expect("scenario runs")
}

// ---- schema oracle ----

const NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];
const TS: &str = "2025-01-01T00:00:00Z";

fn domain(ty: FieldType) -> Vec<Value> {
    match ty {
        FieldType::Boolean => vec![json!(true), json!(false)],
        FieldType::Integer => vec![json!(0), json!(1), json!(2)],
        FieldType::Float => vec![json!(0.0), json!(1.0), json!(2.0)],
        FieldType::String => vec![json!("x"), json!(TS)],
        FieldType::Timestamp => vec![json!(TS)],
        FieldType::Record => Vec::new(),
    }
}

fn admits(f: &FieldSpec, v: &Value) -> bool {
    let typed = match f.ty {
        FieldType::Boolean => v.is_boolean(),
        FieldType::Integer => v.is_i64() || v.is_u64(),
        FieldType::Float => v.is_f64(),
        FieldType::String => v.is_string(),
        FieldType::Timestamp => v.as_str() == Some(TS),
        FieldType::Record => false,
    };
    typed
        && match (&f.range, v.as_f64()) {
            (Some(r), Some(x)) => r.min <= x && x <= r.max,
            _ => true,
        }
}

fn valid(s: &StructSchema, p: &Map<String, Value>) -> bool {
    p.iter().all(|(k, v)| s.field(k).is_some_and(|f| admits(f, v)))
        && s.fields.iter().all(|f| !f.required || p.contains_key(&f.name))
}

fn payloads(old: &StructSchema, new: &StructSchema) -> Vec<Map<String, Value>> {
    let names: BTreeSet<&str> = old.fields.iter().chain(&new.fields).map(|f| f.name.as_str()).collect();
    let mut out = vec![Map::new()];
    for name in names {
        let mut values: Vec<Value> = Vec::new();
        for s in [old, new] {
            for v in s.field(name).map(|f| domain(f.ty)).unwrap_or_default() {
                if !values.contains(&v) {
                    values.push(v);
                }
            }
        }
        let mut next = Vec::new();
        for p in &out {
            next.push(p.clone());
            for v in &values {
                let mut q = p.clone();
                q.insert(name.to_string(), v.clone());
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn oracle(old: &StructSchema, new: &StructSchema, mode: CompatibilityMode) -> bool {
    let ps = payloads(old, new);
    let backward = || ps.iter().all(|p| !valid(old, p) || valid(new, p));
    let forward = || ps.iter().all(|p| !valid(new, p) || valid(old, p));
    match mode {
        CompatibilityMode::Backward => backward(),
        CompatibilityMode::Forward => forward(),
        CompatibilityMode::Full => backward() && forward(),
        CompatibilityMode::None => true,
    }
}

fn random_schema(rng: &mut ChaCha8Rng, min_fields: usize) -> StructSchema {
    let n = rng.gen_range(min_fields..=4);
    let mut names = NAMES.to_vec();
    names.shuffle(rng);
    let mut names: Vec<&str> = names.into_iter().take(n).collect();
    names.sort();
    let types = [FieldType::Boolean, FieldType::Integer, FieldType::Float, FieldType::String, FieldType::Timestamp];
    let ranges = [None, Some((0.0, 0.0)), Some((0.0, 1.0)), Some((1.0, 1.0))];
    StructSchema::new(
        names
            .into_iter()
            .map(|name| {
                let ty = *types.choose(rng).unwrap();
                let f = FieldSpec::new(name, ty, rng.gen_bool(0.5));
                match ranges.choose(rng).unwrap() {
                    Some((lo, hi)) if ty.is_numeric() => f.with_range(*lo, *hi),
                    _ => f,
                }
            })
            .collect(),
    )
}

fn compatibility_matches_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    let pairs = 2000;
    let mut disagreements = 0;
    let mut first = None;
    for _ in 0..pairs {
        let (old, new) = (random_schema(&mut rng, 0), random_schema(&mut rng, 0));
        for mode in [CompatibilityMode::Backward, CompatibilityMode::Forward, CompatibilityMode::Full, CompatibilityMode::None] {
            if check_compatibility(&old, &new, mode).compatible != oracle(&old, &new, mode) {
                disagreements += 1;
                first.get_or_insert_with(|| format!("{mode:?} {old:?} -> {new:?}"));
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    ensure(disagreements == 0, || format!("{disagreements} disagreements, first: {}", first.unwrap_or_default()))?;
    ensure(elapsed < 60.0, || format!("took {elapsed:.1}s"))?;
    Ok(format!("{pairs} pairs x 4 modes, 0 disagreements, {elapsed:.2}s"))
}

// ---- publication gate ----

fn product_contract(version: &str, schema: StructSchema) -> DataContract {
    let mut sla = QualitySla::new(0.0, 1e9, 1e9, 0.0);
    sla.min_accuracy = 0.0;
    sla.min_freshness = 0.0;
    sla.min_validity = 0.0;
    DataContract {
        contract_id: "product.gate".into(),
        version: semver::Version::parse(version).unwrap(),
        classification: Classification::Internal,
        schema,
        semantics: BTreeMap::new(),
        temporal: TemporalRules {
            timestamp_semantics: TimestampSemantics::Event,
            sample_rate_hz: 1.0,
            max_drift_s: 60.0,
            ordering: OrderingGuarantee::PerDevice,
            reorder_window_s: 10.0,
        },
        ownership: Ownership {
            domain: "manufacturing".into(),
            producer: "gate".into(),
            stewards: vec![Steward {
                name: "gate-steward".into(),
                role: Raci::Responsible,
            }],
        },
        quality_sla: Some(sla),
        compatibility: CompatibilityMode::Backward,
        state: ContractState::Definition,
        migration_timeline_days: None,
    }
}

fn product(source: &ContractRef, version: &str, schema: StructSchema) -> ProductDefinition {
    ProductDefinition {
        product_id: "gate".into(),
        steward: "gate-steward".into(),
        sources: vec![source.clone()],
        transform: ProductTransform::default().with("sensor", FieldSource::Sensor),
        contract: product_contract(version, schema),
    }
}

fn major_changes_need_major_versions() -> Verdict {
    let mut s = Scenario::new("gate", 5, 30, FleetSpec::new(1, 1, 1, 1));
    s.faults.clear();
    let base = simulate(&s).map_err(|e| e.to_string())?;
    let source = base
        .artifacts
        .contracts
        .iter()
        .find(|c| c.contract_id == "telemetry.temperature")
        .map(|c| ContractRef {
            contract_id: c.contract_id.clone(),
            version: c.version.clone(),
        })
        .ok_or("no temperature contract")?;
    let now = base.result.end + Duration::minutes(5);
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    let (mut major, mut escapes, mut blocked_bumps) = (0, 0, 0);
    let mut first = None;
    for _ in 0..1500 {
        let (old, new) = (random_schema(&mut rng, 1), random_schema(&mut rng, 1));
        let breaking = !oracle(&old, &new, CompatibilityMode::Backward);
        if !(breaking || classify_schema_change(&old, &new) == VersionBump::Major) {
            continue;
        }
        major += 1;
        let mut f: Fabric = base.fabric.clone();
        f.publish_product(product(&source, "1.0.0", old.clone()), now)
            .map_err(|e| format!("v1 publication failed: {e}"))?;
        match f.clone().publish_product(product(&source, "1.1.0", new.clone()), now) {
            Err(BoundaryError::IncompatibleContract { .. }) => {}
            other => {
                escapes += 1;
                first.get_or_insert_with(|| format!("{old:?} -> {new:?}: {other:?}"));
            }
        }
        if let Err(e) = f.publish_product(product(&source, "2.0.0", new), now) {
            blocked_bumps += 1;
            first.get_or_insert_with(|| format!("major bump refused: {e}"));
        }
    }
    ensure(major >= 1000, || format!("only {major} major pairs generated"))?;
    ensure(escapes == 0 && blocked_bumps == 0, || {
        format!("{escapes} escapes, {blocked_bumps} refused bumps, first: {}", first.unwrap_or_default())
    })?;
    Ok(format!("{major} major pairs, 0 escapes, all 2.0.0 bumps accepted"))
}

// ---- federated monotonicity ----

fn random_rule(rng: &mut ChaCha8Rng) -> String {
    let effect = ["permit", "permit", "permit", "forbid", "forbid", "escalate"].choose(rng).unwrap();
    let atoms: Vec<String> = (0..rng.gen_range(1..=2))
        .map(|_| match rng.gen_range(0..5) {
            0 => format!("subject.role == \"{}\"", ["Analyst", "Operator", "Partner"].choose(rng).unwrap()),
            1 => format!("subject.mfa == {}", rng.gen_bool(0.5)),
            2 => "subject.jurisdiction == asset.jurisdiction".to_string(),
            3 => format!("resource.classification == \"{}\"", ["Internal", "Confidential"].choose(rng).unwrap()),
            _ => format!("env.purpose == \"{}\"", ["audit", "benchmarking"].choose(rng).unwrap()),
        })
        .collect();
    format!("  {effect} when {}", atoms.join(" and "))
}

fn random_layer(rng: &mut ChaCha8Rng, layer: &str) -> String {
    let rules: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| random_rule(rng)).collect();
    format!("policy {layer}.p layer {layer} category access version 1.0.0\n{}", rules.join("\n"))
}

fn all_requests(at: DateTime<Utc>) -> Vec<AttributeRequest> {
    let mut out = Vec::new();
    for role in ["Analyst", "Operator", "Partner"] {
        for mfa in [true, false] {
            for sj in ["DE", "US"] {
                for aj in ["DE", "US"] {
                    for class in [Classification::Internal, Classification::Confidential] {
                        for purpose in [None, Some("audit"), Some("benchmarking")] {
                            let mut r = AttributeRequest::new("access", at, class)
                                .with("subject.role", role)
                                .with("subject.mfa", mfa)
                                .with("subject.jurisdiction", sj)
                                .with("asset.jurisdiction", aj);
                            if let Some(p) = purpose {
                                r = r.with("env.purpose", p);
                            }
                            out.push(r);
                        }
                    }
                }
            }
        }
    }
    out
}

fn layered_policies_are_monotone() -> Verdict {
    let at: DateTime<Utc> = "2025-06-01T00:00:00Z".parse().unwrap();
    let requests = all_requests(at);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1A7E);
    let (mut sets, mut checks) = (0, 0);
    let mut attempts = 0;
    while sets < 150 {
        attempts += 1;
        ensure(attempts < 2000, || format!("only {sets} composable sets in {attempts} attempts"))?;
        let mut texts = vec![random_layer(&mut rng, "enterprise")];
        for layer in ["domain", "plant"] {
            if rng.gen_bool(0.7) {
                texts.push(random_layer(&mut rng, layer));
            }
        }
        let asts: Vec<_> = texts.iter().map(|t| parse_policy(t).map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
        let Ok(composed) = compose_effective(&asts, at.date_naive()) else {
            continue;
        };
        let enterprise = composed.enterprise_only();
        sets += 1;
        for r in &requests {
            let full = evaluate_request(&composed, r).map_err(|e| e.to_string())?.outcome;
            let ent = evaluate_request(&enterprise, r).map_err(|e| e.to_string())?.outcome;
            checks += 1;
            ensure(!(ent == Outcome::Deny && full != Outcome::Deny), || {
                format!("enterprise denies but composed gives {full:?}\n{}", texts.join("\n"))
            })?;
            ensure(!(full == Outcome::Allow && ent != Outcome::Allow), || {
                format!("composed allows but enterprise gives {ent:?}\n{}", texts.join("\n"))
            })?;
        }
    }
    Ok(format!("{sets} layered sets x {} requests, {checks} checks, 0 violations", requests.len()))
}

// ---- boundary accounting ----

#[derive(Serialize)]
struct ChainBody<'a> {
    index: u64,
    entry: &'a AuditEntry,
}

fn boundary_accounts_for_every_message() -> Verdict {
    let run = run_builtin("boundary-10k");
    let r = &run.result;
    let c = &r.counts;
    ensure(c.produced >= 10_000, || format!("only {} messages produced", c.produced))?;
    let sum = c.accepted + c.warned + c.quarantined + c.rejected;
    ensure(c.produced == sum, || format!("produced {} != {} dispositions", c.produced, sum))?;
    ensure(run.fabric.reports.len() as u64 == c.produced, || {
        format!("{} reports for {} messages", run.fabric.reports.len(), c.produced)
    })?;
    let ids: BTreeSet<u64> = run.fabric.reports.iter().map(|r| r.report_id).collect();
    ensure(ids.len() == run.fabric.reports.len(), || "duplicate report ids".into())?;
    let mut by_disposition = [0u64; 4];
    for rep in &run.fabric.reports {
        let i = match rep.disposition {
            Disposition::Accept => 0,
            Disposition::AcceptWithWarnings => 1,
            Disposition::Quarantine => 2,
            Disposition::Reject => 3,
        };
        by_disposition[i] += 1;
    }
    ensure(by_disposition == [c.accepted, c.warned, c.quarantined, c.rejected], || {
        format!("report dispositions {by_disposition:?} disagree with counters")
    })?;
    let mut prev = GENESIS_HASH.to_string();
    for (i, rec) in run.fabric.audit.records().iter().enumerate() {
        ensure(rec.index == i as u64 && rec.prev_hash == prev, || format!("chain link broken at {i}"))?;
        let body = serde_json::to_vec(&ChainBody {
            index: rec.index,
            entry: &rec.entry,
        })
        .unwrap();
        let mut h = Sha256::new();
        h.update(prev.as_bytes());
        h.update(&body);
        let hash = hex::encode(h.finalize());
        ensure(hash == rec.hash, || format!("hash mismatch at {i}"))?;
        prev = hash;
    }
    ensure(r.audit_valid, || "fabric reports an invalid chain".into())?;
    Ok(format!(
        "{} produced = {} accepted + {} warned + {} quarantined + {} rejected; {} audit records verified",
        c.produced,
        c.accepted,
        c.warned,
        c.quarantined,
        c.rejected,
        run.fabric.audit.len()
    ))
}

// ---- fault detection ----

fn out_of_range(r: &ValidationReport) -> bool {
    r.violations.iter().any(|v| v.kind.label() == "out_of_range")
}

fn missing_required(r: &ValidationReport) -> bool {
    r.violations.iter().any(|v| v.kind.label() == "missing_required")
}

fn rejected(r: &ValidationReport) -> bool {
    r.disposition == Disposition::Reject
}

fn faults_are_detected() -> Verdict {
    let scenario = Scenario::builtin("faults").unwrap();
    let run = simulate(&scenario).map_err(|e| e.to_string())?;
    let rate = scenario.fleet.sample_rate_hz;
    let mut parts = Vec::new();
    let checks: [(FaultKind, Flag); 3] = [
        (FaultKind::UnitDrift, out_of_range),
        (FaultKind::MissingRequiredField, missing_required),
        (FaultKind::DeviceRevocation, rejected),
    ];
    for (kind, flagged) in checks {
        let label = kind.label();
        let fault = scenario
            .faults
            .iter()
            .find(|f| f.kind == kind)
            .ok_or_else(|| format!("no {label} fault in scenario"))?;
        let index: usize = fault.target.trim_start_matches('#').parse().map_err(|_| "bad target".to_string())?;
        let stream = &run.artifacts.streams[index];
        let affected: Vec<_> = run
            .fabric
            .reports
            .iter()
            .filter(|r| r.device_id == stream.device_id && r.sequence as f64 / rate >= fault.at_s)
            .collect();
        let missed = affected.iter().filter(|r| !flagged(r)).count();
        ensure(!affected.is_empty() && missed == 0, || {
            format!("{label}: {missed} of {} affected messages undetected", affected.len())
        })?;
        let outcome = run.result.fault(label).ok_or_else(|| format!("no {label} outcome"))?;
        ensure(outcome.detection_rate() == Some(1.0), || {
            format!("{label}: simulator reports {:?}", outcome.detection_rate())
        })?;
        parts.push(format!("{label} {}/{}", affected.len(), affected.len()));
    }
    let dropout = run_builtin("dropout");
    let d = dropout.result.fault("dropout").ok_or("no dropout outcome")?;
    let latency = d.latency_s.ok_or("dropout never detected")?;
    ensure(latency <= 60.0, || format!("dropout MTTD {latency}s"))?;
    parts.push(format!("dropout MTTD {latency:.0}s"));
    Ok(parts.join(", "))
}

// ---- completeness estimate ----

fn completeness_tracks_retention() -> Verdict {
    let mut parts = Vec::new();
    for (fraction, tol) in [(1.0, 0.02), (0.2, 0.03)] {
        for seed in [11u64, 12, 13] {
            let mut s = Scenario::builtin("dropout").unwrap().with_fraction(fraction);
            s.seed = seed;
            let run = simulate(&s).map_err(|e| e.to_string())?;
            let stream = &run.artifacts.streams[0];
            let scheduled = (s.duration_s as f64 * s.fleet.sample_rate_hz).round();
            let delivered = run.fabric.reports.iter().filter(|r| r.device_id == stream.device_id).count() as f64;
            ensure(delivered >= 500.0, || format!("only {delivered} messages"))?;
            let truth = delivered / scheduled;
            let est = run.result.stream(&stream.signal).ok_or("missing stream outcome")?.completeness;
            ensure((est - truth).abs() <= tol, || {
                format!("fraction {fraction} seed {seed}: completeness {est:.4} vs retention {truth:.4}")
            })?;
            parts.push(format!("{fraction}/{seed}: {est:.3} vs {truth:.3}"));
        }
    }
    Ok(parts.join(", "))
}

// ---- mapping ----

fn mapping_is_idempotent_and_exact() -> Verdict {
    let art = Scenario::builtin("faults").unwrap().artifacts().map_err(|e| e.to_string())?;
    let set = govfabric_core::mapping::MappingSet::from_document(art.mappings.clone(), &govfabric_core::mapping::CanonicalBaseline::standard())
        .map_err(|e| e.to_string())?;
    let at: DateTime<Utc> = TS.parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut applied = 0;
    for stream in &art.streams {
        let spec = set.lookup(&stream.signal).map_err(|e| e.to_string())?;
        let unit = set.canonical_unit(&spec.target);
        for _ in 0..50 {
            let raw = RawSignal {
                signal: stream.signal.clone(),
                sensor: govfabric_core::asset_registry::AssetId(stream.sensor.clone()),
                value: rng.gen_range(-500.0..5000.0),
                unit: None,
                event_time: at,
                ingestion_time: at,
            };
            let once = apply_mapping(MappingInput::Raw(&raw), spec, unit).map_err(|e| e.to_string())?;
            let twice = apply_mapping(MappingInput::Canonical(&once), spec, unit).map_err(|e| e.to_string())?;
            ensure(once == twice, || format!("{} not idempotent", stream.signal))?;
            applied += 1;
        }
    }
    let pairs = [
        ("degF", "degC"),
        ("K", "degC"),
        ("psi", "kPa"),
        ("bar", "kPa"),
        ("ms", "s"),
        ("min", "s"),
        ("in/s", "mm/s"),
        ("gal/min", "L/min"),
        ("Wh", "kWh"),
        ("ppm", "%"),
    ];
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        for _ in 0..1000 {
            let v: f64 = rng.gen_range(-1e4..1e4);
            for (from, to) in [(a, b), (b, a)] {
                let back = convert_unit(convert_unit(v, from, to).unwrap(), to, from).unwrap();
                let rel = (back - v).abs() / v.abs().max(1e-12);
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst <= 1e-9, || format!("worst round-trip error {worst:e}"))?;
    let reference = [(212.0, "degF", "degC", 100.0), (0.0, "degC", "K", 273.15), (1.0, "psi", "kPa", 6.894757)];
    for (v, from, to, want) in reference {
        let got = convert_unit(v, from, to).unwrap();
        ensure((got - want).abs() <= 1e-9 * want.abs(), || format!("{v} {from} -> {got} {to}, want {want}"))?;
    }
    Ok(format!("{applied} double applications equal, worst round-trip error {worst:.1e}"))
}

// ---- privacy ----

fn privacy_guards_hold() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD9);
    let mut budget = PrivacyBudget::new("p", 1.0).map_err(|e| e.to_string())?;
    let mut denied = 0;
    for i in 0..200 {
        let eps = rng.gen_range(0.01..0.2);
        let before = budget.spent();
        match budget.charge(&format!("q{i}"), eps) {
            Ok(()) => {}
            Err(PrivacyError::BudgetExhausted { .. }) => {
                denied += 1;
                ensure(budget.spent() == before, || "denied charge still spent budget".into())?;
            }
            Err(e) => return Err(e.to_string()),
        }
        ensure(budget.spent() <= budget.total() + 1e-12, || format!("spent {} of {}", budget.spent(), budget.total()))?;
    }
    ensure(denied > 0, || "budget never exhausted".into())?;
    let mut tenths = PrivacyBudget::new("t", 1.0).unwrap();
    for i in 0..10 {
        tenths.charge(&format!("t{i}"), 0.1).map_err(|e| format!("tenth {i}: {e}"))?;
    }
    ensure(tenths.charge("t10", 0.1).is_err(), || "eleventh tenth accepted".into())?;

    let (sensitivity, epsilon) = (1.0, 0.5);
    let b = sensitivity / epsilon;
    let n = 10_000;
    let draws: Vec<f64> = (0..n).map(|_| laplace_noise(&mut rng, b)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want_var = 2.0 * b * b;
    ensure(mean.abs() <= 3.0 * want_var.sqrt() / (n as f64).sqrt(), || format!("laplace mean {mean}"))?;
    ensure((var - want_var).abs() <= 0.1 * want_var, || format!("laplace variance {var} vs {want_var}"))?;

    let mut fleet = FleetSpec::new(4, 1, 2, 1);
    fleet.jurisdictions = vec!["DE".into(), "FR".into(), "US".into(), "JP".into()];
    let s = Scenario::new("residency", 3, 60, fleet);
    let run = simulate(&s).map_err(|e| e.to_string())?;
    let eu: BTreeSet<&str> = ["DE", "FR"].into();
    let jurisdiction: BTreeMap<&str, &str> = run
        .artifacts
        .streams
        .iter()
        .map(|s| (s.sensor.as_str(), s.jurisdiction.as_str()))
        .collect();
    let mut eu_payloads = 0;
    let mut misplaced = 0;
    for (region, recs) in &run.fabric.partitions.payloads {
        for rec in recs {
            let j = jurisdiction.get(rec.measurement.sensor.0.as_str()).copied().unwrap_or("?");
            if eu.contains(j) {
                eu_payloads += 1;
            }
            if eu.contains(j) != (region == "EU") {
                misplaced += 1;
            }
        }
    }
    ensure(eu_payloads > 0, || "no EU payloads stored".into())?;
    ensure(misplaced == 0 && run.result.cross_region_placements == 0, || {
        format!("{misplaced} misplaced payloads, {} reported", run.result.cross_region_placements)
    })?;

    let k = min_group_size(Classification::Confidential);
    ensure(k == 5, || format!("k for confidential data is {k}"))?;
    let boundary = run_builtin("faults");
    let measurements: Vec<_> = boundary.fabric.store.iter().map(|s| s.measurement.clone()).collect();
    let mut thin = Vec::new();
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for m in &measurements {
        let n = sizes.entry(m.sensor.0.clone()).or_default();
        if *n < 3 || m.sensor.0.ends_with("0-TT0") {
            thin.push(m.clone());
        }
        *n += 1;
    }
    let mut groups_seen = 0;
    let mut suppressed = 0;
    for level in [AggregationLevel::Sensor, AggregationLevel::Asset, AggregationLevel::Line, AggregationLevel::Site] {
        for records in [&measurements, &thin] {
            let report = aggregate_records(records, boundary.fabric.assets.hierarchy(), level, k).map_err(|e| e.to_string())?;
            ensure(report.groups.iter().all(|g| g.count >= k), || format!("{level:?} group below k"))?;
            let released: usize = report.groups.iter().map(|g| g.count).sum();
            ensure(released + report.suppressed_records == records.len(), || format!("{level:?} lost records"))?;
            groups_seen += report.groups.len();
            suppressed += report.suppressed_groups;
        }
    }
    ensure(suppressed > 0, || "no small group was ever formed".into())?;
    Ok(format!(
        "{denied} exhausted charges denied, laplace mean {mean:.4} var {var:.3} (want {want_var}), {eu_payloads} EU payloads in EU, {groups_seen} groups >= {k}, {suppressed} suppressed"
    ))
}

// ---- determinism ----

fn runs_are_reproducible() -> Verdict {
    let a = run_builtin("faults").result.digest;
    let b = run_builtin("faults").result.digest;
    ensure(a == b, || format!("{a} != {b}"))?;
    let mut other = Scenario::builtin("faults").unwrap();
    other.seed += 1;
    let c = simulate(&other).map_err(|e| e.to_string())?.result.digest;
    ensure(c != a, || "different seeds gave the same digest".into())?;
    Ok(format!("digest {}", &a[..16]))
}

// ---- policy language ----

fn policy_language_round_trips() -> Verdict {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/policies"));
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "policy"))
        .collect();
    files.sort();
    ensure(!files.is_empty(), || "empty corpus".into())?;
    let mut sources = BTreeMap::new();
    for path in &files {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let src = fs::read_to_string(path).unwrap();
        let ast = parse_policy(&src).map_err(|e| format!("{name}: {e}"))?;
        let printed = print_policy(&ast);
        let again = parse_policy(&printed).map_err(|e| format!("{name} reprinted: {e}"))?;
        ensure(ast == again && printed == print_policy(&again), || format!("{name} does not round-trip"))?;
        sources.insert(name, ast);
    }

    let at: DateTime<Utc> = "2025-06-01T00:00:00Z".parse().unwrap();
    let analyst = compose_effective(&[sources["analyst_access"].clone()], at.date_naive()).map_err(|e| e.to_string())?;
    let req = |jur: &str, mfa: bool| {
        AttributeRequest::new("access", at, Classification::Confidential)
            .with("resource.domain", "manufacturing")
            .with("subject.role", "Analyst")
            .with("subject.jurisdiction", jur)
            .with("subject.mfa", mfa)
            .with("asset.jurisdiction", "DE")
    };
    for (jur, mfa, want) in [("DE", true, Outcome::Allow), ("DE", false, Outcome::Deny), ("FR", true, Outcome::Deny)] {
        let got = evaluate_request(&analyst, &req(jur, mfa)).map_err(|e| e.to_string())?.outcome;
        ensure(got == want, || format!("analyst {jur} mfa={mfa}: {got:?}, want {want:?}"))?;
    }

    let retention =
        compose_effective(&[sources["eu_quality_retention"].clone()], at.date_naive()).map_err(|e| e.to_string())?;
    let aged = |years: i64| {
        AttributeRequest::new("retention", at, Classification::Internal)
            .with("asset.site.jurisdiction", "EU")
            .with("resource.category", "quality-inspection")
            .with("resource.created_at", (at - Duration::days(365 * years)).to_rfc3339())
    };
    let nine = retention.evaluate_retention(&aged(9)).disposition;
    let eleven = retention.evaluate_retention(&aged(11)).disposition;
    ensure(matches!(nine, Retention::MustRetain { .. }), || format!("9y: {nine:?}"))?;
    ensure(eleven == Retention::MayDelete, || format!("11y: {eleven:?}"))?;
    Ok(format!("{} corpus files round-trip, analyst and 10y retention as documented", files.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("compatibility agrees with brute-force oracle", compatibility_matches_oracle),
        ("major changes blocked without major version", major_changes_need_major_versions),
        ("layered policies are monotone", layered_policies_are_monotone),
        ("boundary accounts for every message", boundary_accounts_for_every_message),
        ("injected faults are detected", faults_are_detected),
        ("completeness tracks retention", completeness_tracks_retention),
        ("mapping idempotent, conversions exact", mapping_is_idempotent_and_exact),
        ("privacy guards hold", privacy_guards_hold),
        ("same seed, same digest", runs_are_reproducible),
        ("policy language round-trips", policy_language_round_trips),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
