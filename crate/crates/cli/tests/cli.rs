use std::fs;
use std::path::Path;
use std::process::Command;

use govfabric_core::contract::DataContract;
use govfabric_sim::{generate_fleet, FleetSpec};
use serde_json::Value;
use tempfile::TempDir;

const NOW: &str = "2025-06-01T00:00:00Z";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn govfabric(ws: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_govfabric"))
        .arg("--workspace")
        .arg(ws)
        .args(["--now", NOW])
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn temperature_contract() -> DataContract {
    generate_fleet(&FleetSpec::new(1, 1, 1, 1), 1).unwrap().contracts[0].clone()
}

const ANALYST_POLICY: &str = r#"policy ent.access layer enterprise category access version 1.0.0
  permit when resource.classification == "Confidential" and subject.role == "Analyst" and subject.jurisdiction == asset.jurisdiction and subject.mfa == true
"#;

fn request(role: &str, jurisdiction: &str, mfa: bool) -> String {
    serde_json::json!({
        "subject": { "role": role, "jurisdiction": jurisdiction, "mfa": mfa },
        "resource": { "classification": "Confidential", "domain": "manufacturing" },
        "asset": { "jurisdiction": "DE" },
        "action": "access",
        "timestamp": NOW,
    })
    .to_string()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let r = govfabric(dir.path(), &["frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"));
    assert_eq!(govfabric(dir.path(), &["contract", "check"]).code, 2);
}

#[test]
fn missing_input_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let r = govfabric(dir.path(), &["policy", "eval", "--request", "no-such-file.json"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("no-such-file.json"));
}

#[test]
fn incompatible_contract_check_exits_one_with_violations() {
    let dir = TempDir::new().unwrap();
    let old = temperature_contract();
    let mut new = old.clone();
    new.version = semver::Version::new(1, 1, 0);
    new.schema.fields[0] = new.schema.fields[0].clone().with_range(50.0, 80.0);
    let a = write(dir.path(), "a.json", &serde_json::to_string(&old).unwrap());
    let b = write(dir.path(), "b.json", &serde_json::to_string(&new).unwrap());

    let r = govfabric(dir.path(), &["contract", "check", "--old", &a, "--new", &b, "--mode", "backward"]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    assert!(r.stdout.contains("incompatible"));
    assert!(r.stdout.contains("temp_c"));
    assert!(r.stdout.contains("RangeNarrowed"));

    let r = govfabric(dir.path(), &["contract", "check", "--old", &b, "--new", &a, "--mode", "backward"]);
    assert_eq!(r.code, 0, "{}", r.stdout);

    let r = govfabric(dir.path(), &["contract", "diff", "--old", &a, "--new", &b]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("Major"));
}

#[test]
fn contract_register_state_and_impact() {
    let dir = TempDir::new().unwrap();
    let c = temperature_contract();
    let f = write(dir.path(), "c.json", &serde_json::to_string(&c).unwrap());
    let r = govfabric(dir.path(), &["contract", "register", "--file", &f]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("Definition"));

    let id = &c.contract_id;
    let r = govfabric(dir.path(), &["contract", "state", "--id", id, "--version", "1.0.0", "--to", "Deployment"]);
    assert_eq!(r.code, 1, "illegal jump must be refused: {}", r.stdout);
    let r = govfabric(dir.path(), &["contract", "state", "--id", id, "--version", "1.0.0", "--to", "Review"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let r = govfabric(
        dir.path(),
        &["contract", "state", "--id", id, "--version", "1.0.0", "--to", "Deployment", "--reviewer", "lead"],
    );
    assert_eq!(r.code, 0, "{}", r.stdout);

    let r = govfabric(dir.path(), &["contract", "impact", "--id", id]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("0 consumer(s)"));

    let r = govfabric(dir.path(), &["contract", "check", "--old", id, "--new", &format!("{id}@1.0.0")]);
    assert_eq!(r.code, 0);
    assert_eq!(govfabric(dir.path(), &["audit", "verify"]).code, 0);
}

#[test]
fn analyst_request_is_allowed_and_others_denied() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "access.policy", ANALYST_POLICY);
    let allow = write(dir.path(), "allow.json", &request("Analyst", "DE", true));
    let r = govfabric(dir.path(), &["policy", "eval", "--request", &allow, "--policy", &p]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.starts_with("Allow"));

    for (role, j, mfa) in [("Analyst", "US", true), ("Analyst", "DE", false), ("Operator", "DE", true)] {
        let deny = write(dir.path(), "deny.json", &request(role, j, mfa));
        let r = govfabric(dir.path(), &["policy", "eval", "--request", &deny, "--policy", &p]);
        assert_eq!(r.code, 1, "{role} {j} {mfa}");
        assert!(r.stdout.starts_with("Deny"));
    }
}

#[test]
fn workspace_policies_are_used_after_load() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "access.policy", ANALYST_POLICY);
    assert_eq!(govfabric(dir.path(), &["policy", "load", "--file", &p]).code, 0);
    let allow = write(dir.path(), "allow.json", &request("Analyst", "DE", true));
    assert_eq!(govfabric(dir.path(), &["policy", "eval", "--request", &allow]).code, 0);

    let cases = serde_json::json!([
        { "name": "analyst", "request": serde_json::from_str::<Value>(&request("Analyst", "DE", true)).unwrap(), "expect": "Allow" },
        { "name": "no-mfa", "request": serde_json::from_str::<Value>(&request("Analyst", "DE", false)).unwrap(), "expect": "Allow" },
    ]);
    let c = write(dir.path(), "cases.json", &cases.to_string());
    let r = govfabric(dir.path(), &["policy", "test", "--cases", &c]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("pass analyst"));
    assert!(r.stdout.contains("FAIL no-mfa"));
}

#[test]
fn lint_flags_a_plant_permit_the_enterprise_forbids() {
    let dir = TempDir::new().unwrap();
    let ent = write(
        dir.path(),
        "ent.policy",
        "policy ent.export layer enterprise category compliance version 1.0.0\n  forbid when resource.classification == \"Restricted\" and env.destination != \"EU\"\n  permit when subject.role == \"Steward\"\n",
    );
    let plant = write(
        dir.path(),
        "plant.policy",
        "policy plant.export layer plant category compliance version 1.0.0\n  permit when subject.role == \"Steward\" and resource.classification == \"Restricted\"\n",
    );
    let r = govfabric(dir.path(), &["policy", "lint", "--file", &plant, "--policy", &ent]);
    assert_eq!(r.code, 1, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("PermitsForbidden"));

    let ok = write(
        dir.path(),
        "ok.policy",
        "policy plant.ok layer plant category compliance version 1.0.0\n  permit when subject.role == \"Steward\" and env.destination == \"EU\"\n",
    );
    assert_eq!(govfabric(dir.path(), &["policy", "lint", "--file", &ok, "--policy", &ent]).code, 0);
}

#[test]
fn conflicts_are_reported() {
    let dir = TempDir::new().unwrap();
    let p = write(
        dir.path(),
        "c.policy",
        "policy ent.c layer enterprise category access version 1.0.0\n  permit when subject.role == \"Analyst\"\n  forbid when subject.mfa == false\n",
    );
    let r = govfabric(dir.path(), &["policy", "conflicts", "--policy", &p]);
    assert_eq!(r.code, 1, "{}{}", r.stdout, r.stderr);
    assert!(!r.stdout.starts_with("0 conflict"));
}

#[test]
fn asset_and_device_lifecycle() {
    let dir = TempDir::new().unwrap();
    let ws = dir.path();
    for args in [
        vec!["asset", "register", "--id", "acme", "--level", "enterprise"],
        vec!["asset", "register", "--id", "de", "--level", "site", "--parent", "acme", "--attr", "jurisdiction=DE"],
        vec!["asset", "register", "--id", "fr", "--level", "site", "--parent", "acme", "--attr", "jurisdiction=FR"],
        vec!["asset", "register", "--id", "l1", "--level", "line", "--parent", "de"],
        vec!["asset", "register", "--id", "l2", "--level", "line", "--parent", "fr"],
        vec!["asset", "register", "--id", "oven", "--level", "asset", "--parent", "l1"],
        vec!["asset", "relocate", "--id", "oven", "--parent", "l2"],
        vec!["asset", "lifecycle", "--id", "oven", "--to", "Operation"],
        vec!["device", "register", "--id", "d1", "--asset", "oven", "--secret", "s"],
        vec!["device", "revoke", "--id", "d1"],
    ] {
        let r = govfabric(ws, &args);
        assert_eq!(r.code, 0, "{args:?}: {}{}", r.stdout, r.stderr);
    }
    let r = govfabric(ws, &["asset", "register", "--id", "x", "--level", "line", "--parent", "acme"]);
    assert_ne!(r.code, 0);
    let r = govfabric(ws, &["audit", "verify"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("10 records"), "{}", r.stdout);
}

#[test]
fn tampered_audit_log_is_detected_and_writes_refused() {
    let dir = TempDir::new().unwrap();
    let ws = dir.path();
    for id in ["a", "b", "c"] {
        assert_eq!(govfabric(ws, &["asset", "register", "--id", id, "--level", "enterprise"]).code, 0);
    }
    let path = ws.join("audit.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"resource\":\"b\"", "\"resource\":\"B\"", 1)).unwrap();
    let r = govfabric(ws, &["audit", "verify"]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("broken at record 1"));
    let r = govfabric(ws, &["asset", "register", "--id", "d", "--level", "enterprise"]);
    assert_eq!(r.code, 1);
}

#[test]
fn simulation_is_reproducible_and_reports_run() {
    let dir = TempDir::new().unwrap();
    let ws = dir.path();
    let a = govfabric(ws, &["--seed", "3", "simulate", "run", "baseline"]);
    let b = govfabric(ws, &["--seed", "3", "simulate", "run", "baseline"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.contains("produced 500 accepted 500"));
    let c = govfabric(ws, &["--seed", "4", "simulate", "run", "baseline"]);
    assert_ne!(a.stdout, c.stdout);

    let r = govfabric(ws, &["--format", "records", "simulate", "run", "faults", "--save"]);
    assert_eq!(r.code, 0);
    let rec: Value = serde_json::from_str(r.stdout.lines().next().unwrap()).unwrap();
    assert_eq!(rec["record"], "scenario");
    assert!(rec["audit_valid"].as_bool().unwrap());

    let r = govfabric(ws, &["governance", "report"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("mttd"));
    let r = govfabric(ws, &["quality", "report", "--window", "300"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("completeness"));
    assert_eq!(govfabric(ws, &["audit", "verify"]).code, 0);
}

#[test]
fn quarantine_list_resolve_and_requeue() {
    let dir = TempDir::new().unwrap();
    let ws = dir.path();
    assert_eq!(govfabric(ws, &["simulate", "run", "faults", "--save"]).code, 0);
    let r = govfabric(ws, &["--format", "records", "quarantine", "list"]);
    assert_eq!(r.code, 0);
    let items: Vec<Value> = r.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!items.is_empty());
    let first = items[0]["id"].as_str().unwrap().to_string();
    let second = items[1]["id"].as_str().unwrap().to_string();

    let r = govfabric(ws, &["quarantine", "resolve", &first, "--note", "sensor replaced"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert_eq!(govfabric(ws, &["quarantine", "resolve", &first, "--note", "again"]).code, 1);
    assert_eq!(govfabric(ws, &["quarantine", "resolve", "q999999", "--note", "x"]).code, 2);

    // Nothing was fixed, so the message goes straight back.
    let r = govfabric(ws, &["quarantine", "requeue", &second]);
    assert_eq!(r.code, 1, "{}{}", r.stdout, r.stderr);
    let after = govfabric(ws, &["quarantine", "list"]);
    assert!(after.stdout.starts_with(&format!("{} item(s)", items.len() - 1)));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let r = govfabric(dir.path(), &["simulate", "run", "nope"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("baseline"));
}

#[test]
fn mapping_load_and_ingest() {
    let dir = TempDir::new().unwrap();
    let ws = dir.path();
    let fleet = generate_fleet(&FleetSpec::new(1, 1, 1, 1), 9).unwrap();
    let f = write(ws, "fleet.json", &serde_json::to_string(&fleet.fleet).unwrap());
    assert_eq!(govfabric(ws, &["asset", "register", "--file", &f]).code, 0);
    let c = write(ws, "c.json", &serde_json::to_string(&fleet.contracts[0]).unwrap());
    assert_eq!(govfabric(ws, &["contract", "register", "--file", &c, "--enforce"]).code, 0);
    let m = write(ws, "m.json", &serde_json::to_string(&fleet.mappings).unwrap());
    let stream = &fleet.streams[0];
    let bind = format!("{}={}", stream.signal, fleet.contracts[0].contract_id);
    let r = govfabric(ws, &["mapping", "load", "--file", &m, "--bind", &bind]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    let p = write(ws, "ingest.policy", govfabric_sim::INGEST_POLICY);
    assert_eq!(govfabric(ws, &["policy", "load", "--file", &p]).code, 0);

    let t: chrono::DateTime<chrono::Utc> = NOW.parse().unwrap();
    let msg = |value: f64, seq: u64| {
        serde_json::json!({
            "device_id": stream.device_id,
            "signal": stream.signal,
            "payload": stream.payload(stream.raw_value(value, stream.kind.source_unit(stream.dialect)), t),
            "sequence": seq,
            "credential": stream.secret,
        })
        .to_string()
    };
    let good = write(ws, "good.jsonl", &format!("{}\n{}\n", msg(60.0, 1), msg(61.0, 2)));
    let r = govfabric(ws, &["ingest", "--file", &good]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert_eq!(r.stdout.matches("Accept").count(), 2);

    let bad = write(ws, "bad.jsonl", &msg(60.0, 3).replace("\"status\":\"ok\",", ""));
    let r = govfabric(ws, &["ingest", "--file", &bad]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    assert!(r.stdout.contains("Quarantine"));
    assert_eq!(govfabric(ws, &["audit", "verify"]).code, 0);
}
