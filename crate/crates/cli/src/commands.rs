use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Duration, Utc};
use govfabric_core::asset_registry::{
    AssetId, AssetLifecycle, AssetNode, DeviceIdentity, DeviceState, FleetDefinition, Level,
};
use govfabric_core::attrs::AttrValue;
use govfabric_core::boundary::{
    verify_jsonl, AccessRequest, AuditAction, AuditEntry, BoundaryError, ExportRequest, Fabric,
    ProductDefinition, TelemetryMessage,
};
use govfabric_core::contract::{
    check_compatibility, classify_schema_change, CompatibilityMode, ContractRef, ContractState, DataContract,
};
use govfabric_core::mapping::MappingSet;
use govfabric_core::policy::{
    compose_effective, detect_conflicts, evaluate_request, lint_policy, parse_policy, AttributeDomains,
    AttributeRequest, Layer, Outcome, PolicyAst,
};
use govfabric_core::quality::governance_report;
use govfabric_sim::{simulate, Scenario};
use serde::Deserialize;
use serde_json::json;

use crate::args::*;
use crate::workspace::Workspace;
use crate::Output;

struct Ctx<'a> {
    cli: &'a Cli,
    ws: Workspace,
    now: DateTime<Utc>,
}

impl Ctx<'_> {
    fn load(&self) -> Result<Fabric> {
        self.ws.load(self.cli.seed.unwrap_or(0))
    }

    /// Loads the fabric for a command that will append audit records. A
    /// broken chain is refused rather than extended.
    fn load_for_write(&self, out: &mut Output) -> Result<Option<Fabric>> {
        let fabric = self.load()?;
        let v = fabric.audit.verify();
        if !v.valid {
            out.line(format!(
                "audit chain broken at record {}; refusing to write",
                v.first_bad_index.unwrap_or(0)
            ));
            out.record("audit", v);
            out.reject();
            return Ok(None);
        }
        Ok(Some(fabric))
    }

    fn admin(&self, fabric: &mut Fabric, resource: &str, outcome: &str, reason: impl Into<String>) -> Result<()> {
        fabric.audit.record_audit(AuditEntry::new(
            self.now,
            &self.cli.actor,
            AuditAction::Admin,
            resource,
            outcome,
            reason,
        ))?;
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn parse_enum<T: for<'de> Deserialize<'de>>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(json!(s)).map_err(|_| anyhow!("unknown {what} `{s}`"))
}

fn parse_attr(raw: &str) -> Result<(String, AttrValue)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| anyhow!("attribute `{raw}` is not name=value"))?;
    let value = serde_json::from_str::<AttrValue>(v).unwrap_or_else(|_| AttrValue::Str(v.to_string()));
    Ok((k.to_string(), value))
}

pub fn execute(cli: &Cli) -> Result<Output> {
    let now = match &cli.now {
        Some(s) => DateTime::parse_from_rfc3339(s)
            .with_context(|| format!("--now `{s}` is not RFC 3339"))?
            .with_timezone(&Utc),
        None => Utc::now(),
    };
    let ctx = Ctx {
        cli,
        ws: Workspace::new(&cli.workspace),
        now,
    };
    let mut out = Output::default();
    match &cli.command {
        Command::Asset(c) => asset(&ctx, c, &mut out)?,
        Command::Device(c) => device(&ctx, c, &mut out)?,
        Command::Contract(c) => contract(&ctx, c, &mut out)?,
        Command::Policy(c) => policy(&ctx, c, &mut out)?,
        Command::Mapping(MappingCmd::Load { file, binds }) => mapping_load(&ctx, file, binds, &mut out)?,
        Command::Ingest { file } => ingest(&ctx, file, &mut out)?,
        Command::Product(ProductCmd::Publish { file }) => publish(&ctx, file, &mut out)?,
        Command::Access { request } => access(&ctx, request, &mut out)?,
        Command::Export { request } => export(&ctx, request, &mut out)?,
        Command::Simulate(SimulateCmd::Run { scenario, save }) => simulate_run(&ctx, scenario, *save, &mut out)?,
        Command::Quality(QualityCmd::Report {
            stream,
            window,
            fraction,
        }) => quality_report(&ctx, stream.as_deref(), *window, *fraction, &mut out)?,
        Command::Governance(GovernanceCmd::Report) => governance(&ctx, &mut out)?,
        Command::Quarantine(c) => quarantine(&ctx, c, &mut out)?,
        Command::Audit(AuditCmd::Verify) => audit_verify(&ctx, &mut out)?,
    }
    Ok(out)
}

fn asset(ctx: &Ctx, cmd: &AssetCmd, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    match cmd {
        AssetCmd::Register {
            file: Some(file),
            ..
        } => {
            let fleet: FleetDefinition = read_json(file)?;
            for node in fleet.nodes {
                let id = fabric.assets.register_node(node)?;
                out.record("asset", json!({ "id": id, "registered": true }));
            }
            for dev in fleet.devices {
                let id = fabric.assets.register_device(dev)?;
                out.record("device", json!({ "id": id, "registered": true }));
            }
            out.line(format!("registered {} records from {}", out.records.len(), file.display()));
            ctx.admin(&mut fabric, &file.display().to_string(), "registered", "fleet definition")?;
        }
        AssetCmd::Register {
            id, level, parent, attrs, ..
        } => {
            let id = id.as_deref().ok_or_else(|| anyhow!("--id is required"))?;
            let level = level.as_deref().ok_or_else(|| anyhow!("--level is required"))?;
            let level = Level::parse(level).ok_or_else(|| anyhow!("unknown level `{level}`"))?;
            let mut node = AssetNode::new(id, level, parent.as_deref());
            for a in attrs {
                let (k, v) = parse_attr(a)?;
                node = node.with_attr(&k, v);
            }
            fabric.assets.register_node(node)?;
            out.line(format!("registered {id}"));
            out.record("asset", json!({ "id": id, "registered": true }));
            ctx.admin(&mut fabric, id, "registered", "asset node")?;
        }
        AssetCmd::Relocate { id, parent } => {
            let node = fabric.assets.relocate_node(&AssetId::new(id.as_str()), &AssetId::new(parent.as_str()))?;
            out.line(format!("{id} now under {parent}"));
            out.record("asset", &node);
            ctx.admin(&mut fabric, id, "relocated", format!("parent {parent}"))?;
        }
        AssetCmd::Lifecycle { id, to } => {
            let target: AssetLifecycle = parse_enum("lifecycle state", to)?;
            let node = fabric.assets.transition_asset_lifecycle(&AssetId::new(id.as_str()), target)?;
            out.line(format!("{id} -> {}", target.as_str()));
            out.record("asset", &node);
            ctx.admin(&mut fabric, id, target.as_str(), "lifecycle transition")?;
        }
    }
    ctx.ws.save(&fabric)
}

fn device(ctx: &Ctx, cmd: &DeviceCmd, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    match cmd {
        DeviceCmd::Register {
            id,
            asset,
            secret,
            state,
        } => {
            let state: DeviceState = parse_enum("device state", state)?;
            fabric.assets.register_device(DeviceIdentity::new(id, asset, secret, state))?;
            out.line(format!("device {id} bound to {asset} ({state:?})"));
            out.record("device", json!({ "id": id, "asset": asset, "state": state }));
            ctx.admin(&mut fabric, id, "registered", "device")?;
        }
        DeviceCmd::Revoke { id } => {
            let state = fabric.assets.revoke_device(id)?;
            out.line(format!("device {id} {state:?}"));
            out.record("device", json!({ "id": id, "state": state }));
            ctx.admin(&mut fabric, id, "revoked", "device")?;
        }
    }
    ctx.ws.save(&fabric)
}

/// A contract from a file path, `id@version`, or the latest version of `id`.
fn resolve_contract(fabric: &Fabric, spec: &str) -> Result<DataContract> {
    let path = Path::new(spec);
    if path.exists() {
        return read_json(path);
    }
    let r = match spec.split_once('@') {
        Some((id, v)) => ContractRef {
            contract_id: id.to_string(),
            version: semver::Version::parse(v).with_context(|| format!("bad version in `{spec}`"))?,
        },
        None => fabric
            .contracts
            .latest(spec)
            .map_err(|_| anyhow!("`{spec}` is neither a file nor a registered contract"))?
            .reference(),
    };
    Ok(fabric.contracts.entry(&r)?.contract.clone())
}

fn contract(ctx: &Ctx, cmd: &ContractCmd, out: &mut Output) -> Result<()> {
    match cmd {
        ContractCmd::Register {
            file,
            enforce,
            reviewer,
        } => {
            let Some(mut fabric) = ctx.load_for_write(out)? else {
                return Ok(());
            };
            let c: DataContract = read_json(file)?;
            let baseline = fabric.baseline.clone();
            let r = match fabric.contracts.register_contract(c, &baseline) {
                Ok(r) => r,
                Err(e) => {
                    out.line(format!("rejected: {e}"));
                    out.record("contract", json!({ "registered": false, "error": e.to_string() }));
                    out.reject();
                    return Ok(());
                }
            };
            if *enforce {
                fabric.contracts.promote_to_enforcement(&r, reviewer, ctx.now)?;
            }
            let state = fabric.contracts.entry(&r)?.contract.state;
            out.line(format!("registered {r} ({state:?})"));
            out.record("contract", json!({ "registered": true, "contract": r, "state": state }));
            ctx.admin(&mut fabric, &r.to_string(), "registered", format!("{state:?}"))?;
            ctx.ws.save(&fabric)?;
        }
        ContractCmd::Diff { old, new } => {
            let fabric = ctx.load()?;
            let (a, b) = (resolve_contract(&fabric, old)?, resolve_contract(&fabric, new)?);
            let bump = classify_schema_change(&a.schema, &b.schema);
            let report = check_compatibility(&a.schema, &b.schema, CompatibilityMode::Full);
            out.line(format!("required bump: {bump:?}"));
            for v in &report.violations {
                out.line(format!("  {} {}: {:?}", v.direction, v.field, v.issue));
            }
            out.record("diff", json!({ "bump": bump, "violations": report.violations }));
        }
        ContractCmd::Check { old, new, mode } => {
            let fabric = ctx.load()?;
            let mode = CompatibilityMode::parse(mode).ok_or_else(|| anyhow!("unknown mode `{mode}`"))?;
            let (a, b) = (resolve_contract(&fabric, old)?, resolve_contract(&fabric, new)?);
            let report = check_compatibility(&a.schema, &b.schema, mode);
            if report.compatible {
                out.line(format!("compatible ({mode:?})"));
            } else {
                out.line(format!("incompatible ({mode:?}): {} violation(s)", report.violations.len()));
                for v in &report.violations {
                    out.line(format!("  {} {}: {:?}", v.direction, v.field, v.issue));
                }
                out.reject();
            }
            out.record("compatibility", &report);
        }
        ContractCmd::State {
            id,
            version,
            to,
            reviewer,
        } => {
            let Some(mut fabric) = ctx.load_for_write(out)? else {
                return Ok(());
            };
            let r = ContractRef {
                contract_id: id.clone(),
                version: semver::Version::parse(version)?,
            };
            let target = ContractState::parse(to).ok_or_else(|| anyhow!("unknown contract state `{to}`"))?;
            if let Some(reviewer) = reviewer {
                fabric.contracts.approve_review(&r, reviewer)?;
            }
            match fabric.contracts.transition_contract_state(&r, target, ctx.now) {
                Ok(s) => {
                    out.line(format!("{r} -> {s:?}"));
                    out.record("contract", json!({ "contract": r, "state": s }));
                    ctx.admin(&mut fabric, &r.to_string(), &format!("{s:?}"), "state transition")?;
                }
                Err(e) => {
                    out.line(format!("rejected: {e}"));
                    out.record("contract", json!({ "contract": r, "error": e.to_string() }));
                    out.reject();
                }
            }
            ctx.ws.save(&fabric)?;
        }
        ContractCmd::Impact { id } => {
            let fabric = ctx.load()?;
            let impact = fabric.contracts.impact_analysis(id)?;
            out.line(format!("{} consumer(s) of {id}", impact.len()));
            for e in &impact {
                out.line(format!(
                    "  {} on {} ({:?}{})",
                    e.consumer,
                    e.version,
                    e.state,
                    if e.deprecated { ", deprecated" } else { "" }
                ));
                out.record("impact", e);
            }
        }
    }
    Ok(())
}

fn load_policies(fabric: &Fabric, files: &[PathBuf]) -> Result<Vec<PolicyAst>> {
    if files.is_empty() {
        return Ok(fabric.policies().to_vec());
    }
    files
        .iter()
        .map(|f| parse_policy(&read(f)?).map_err(|e| anyhow!("{}: {e}", f.display())))
        .collect()
}

#[derive(Deserialize)]
struct PolicyCase {
    name: String,
    request: AttributeRequest,
    expect: Outcome,
}

fn policy(ctx: &Ctx, cmd: &PolicyCmd, out: &mut Output) -> Result<()> {
    match cmd {
        PolicyCmd::Lint { file, baseline } => {
            let fabric = ctx.load()?;
            let ast = parse_policy(&read(file)?).map_err(|e| anyhow!("{}: {e}", file.display()))?;
            let base: Vec<PolicyAst> = load_policies(&fabric, &baseline.policies)?
                .into_iter()
                .filter(|p| p.layer == Layer::Enterprise && p.policy_id != ast.policy_id)
                .collect();
            let findings = lint_policy(&ast, &base);
            if findings.is_empty() {
                out.line(format!("{} {}: ok", ast.policy_id, ast.version));
            } else {
                out.line(format!("{} {}: {} finding(s)", ast.policy_id, ast.version, findings.len()));
                for f in &findings {
                    out.line(format!("  {f:?}"));
                }
                out.reject();
            }
            out.record("lint", json!({ "policy": ast.policy_id, "findings": findings }));
        }
        PolicyCmd::Eval { request, sources } => {
            let fabric = ctx.load()?;
            let req: AttributeRequest = read_json(request)?;
            let policies = load_policies(&fabric, &sources.policies)?;
            let effective = compose_effective(&policies, req.timestamp.date_naive())?;
            let decision = evaluate_request(&effective, &req)?;
            out.line(format!("{:?}", decision.outcome));
            for o in &decision.obligations {
                out.line(format!("  obligation {o}"));
            }
            for r in &decision.reasons {
                out.line(format!("  reason {}", serde_json::to_string(r)?));
            }
            let retention = policies
                .iter()
                .any(|p| !p.retention.is_empty())
                .then(|| effective.evaluate_retention(&req));
            if let Some(r) = &retention {
                out.line(format!("  retention {:?}", r.disposition));
            }
            if decision.outcome != Outcome::Allow {
                out.reject();
            }
            out.record("decision", json!({ "decision": decision, "retention": retention }));
        }
        PolicyCmd::Conflicts { sources, limit } => {
            let fabric = ctx.load()?;
            let policies = load_policies(&fabric, &sources.policies)?;
            let domains = AttributeDomains::derive(&policies);
            let report = detect_conflicts(&policies, &domains, *limit)?;
            out.line(format!(
                "{} conflict(s) over {} assignment(s)",
                report.conflicts.len(),
                report.checked
            ));
            for c in &report.conflicts {
                out.line(format!("  {:?}: permit {:?} vs forbid {:?}", c.layer, c.permits, c.forbids));
            }
            if !report.conflicts.is_empty() {
                out.reject();
            }
            out.record("conflicts", &report);
        }
        PolicyCmd::Load { files } => {
            let Some(mut fabric) = ctx.load_for_write(out)? else {
                return Ok(());
            };
            let mut policies = fabric.policies().to_vec();
            for ast in load_policies(&fabric, files)? {
                policies.retain(|p| !(p.policy_id == ast.policy_id && p.version == ast.version));
                out.line(format!("loaded {} {}", ast.policy_id, ast.version));
                out.record("policy", json!({ "policy": ast.policy_id, "version": ast.version }));
                policies.push(ast);
            }
            fabric.set_policies(policies, ctx.now.date_naive())?;
            ctx.admin(&mut fabric, "policies", "loaded", format!("{} file(s)", files.len()))?;
            ctx.ws.save(&fabric)?;
        }
        PolicyCmd::Test { cases, sources } => {
            let fabric = ctx.load()?;
            let cases: Vec<PolicyCase> = read_json(cases)?;
            let policies = load_policies(&fabric, &sources.policies)?;
            let mut failed = 0;
            for case in &cases {
                let effective = compose_effective(&policies, case.request.timestamp.date_naive())?;
                let got = evaluate_request(&effective, &case.request)?.outcome;
                let pass = got == case.expect;
                failed += usize::from(!pass);
                out.line(format!(
                    "{} {}: expected {:?}, got {:?}",
                    if pass { "pass" } else { "FAIL" },
                    case.name,
                    case.expect,
                    got
                ));
                out.record("case", json!({ "name": case.name, "expect": case.expect, "got": got, "pass": pass }));
            }
            if failed > 0 {
                out.reject();
            }
        }
    }
    Ok(())
}

fn mapping_load(ctx: &Ctx, file: &Path, binds: &[String], out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    let set = MappingSet::load_mapping_set(&read(file)?, &fabric.baseline)?;
    out.line(format!("loaded {} mapping(s), version {}", set.len(), set.version));
    out.record("mapping", json!({ "mappings": set.len(), "version": set.version }));
    fabric.mappings = set;
    for b in binds {
        let (signal, contract) = b
            .split_once('=')
            .ok_or_else(|| anyhow!("binding `{b}` is not SIGNAL=CONTRACT"))?;
        fabric.bind(signal, contract);
        out.line(format!("bound {signal} -> {contract}"));
        out.record("binding", json!({ "signal": signal, "contract": contract }));
    }
    ctx.admin(&mut fabric, &file.display().to_string(), "loaded", "mapping set")?;
    ctx.ws.save(&fabric)
}

fn ingest(ctx: &Ctx, file: &Path, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    let text = read(file)?;
    let mut refused = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let msg: TelemetryMessage =
            serde_json::from_str(line).with_context(|| format!("{}:{}", file.display(), i + 1))?;
        let ack = fabric.ingest_message(msg, ctx.now);
        if !ack.disposition.is_stored() {
            refused += 1;
        }
        out.line(format!(
            "report {} {:?}{}",
            ack.report_id,
            ack.disposition,
            if ack.summary.is_empty() {
                String::new()
            } else {
                format!(": {}", ack.summary.join(", "))
            }
        ));
        out.record("ack", &ack);
    }
    if refused > 0 {
        out.reject();
    }
    ctx.ws.save(&fabric)
}

fn boundary_refusal(e: BoundaryError, out: &mut Output) -> Result<()> {
    match e {
        BoundaryError::UnknownProduct(_) | BoundaryError::UnknownSourceContract(_) | BoundaryError::Audit(_) => {
            Err(e.into())
        }
        e => {
            out.line(format!("rejected: {e}"));
            out.record("rejection", json!({ "error": e.to_string() }));
            out.reject();
            Ok(())
        }
    }
}

fn publish(ctx: &Ctx, file: &Path, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    let def: ProductDefinition = read_json(file)?;
    match fabric.publish_product(def, ctx.now) {
        Ok(r) => {
            out.line(format!(
                "published {} {} with {} record(s), quality {:.3}",
                r.product_id, r.version, r.records, r.quality.composite
            ));
            out.record("publication", &r);
        }
        Err(e) => boundary_refusal(e, out)?,
    }
    ctx.ws.save(&fabric)
}

fn access(ctx: &Ctx, request: &Path, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    let req: AccessRequest = read_json(request)?;
    match fabric.authorize_access(req) {
        Ok(r) => {
            out.line(format!("{:?}", r.decision.outcome));
            if let Some(ticket) = &r.pending {
                out.line(format!("  pending review {ticket}"));
            }
            if r.decision.outcome != Outcome::Allow {
                out.reject();
            }
            out.record("access", &r);
        }
        Err(e) => boundary_refusal(e, out)?,
    }
    ctx.ws.save(&fabric)
}

fn export(ctx: &Ctx, request: &Path, out: &mut Output) -> Result<()> {
    let Some(mut fabric) = ctx.load_for_write(out)? else {
        return Ok(());
    };
    let req: ExportRequest = read_json(request)?;
    match fabric.export_external(req) {
        Ok(r) => {
            out.line(format!("{:?}", r.decision.outcome));
            if r.decision.outcome != Outcome::Allow {
                out.reject();
            }
            out.record("export", &r);
        }
        Err(e) => boundary_refusal(e, out)?,
    }
    ctx.ws.save(&fabric)
}

fn simulate_run(ctx: &Ctx, scenario: &str, save: bool, out: &mut Output) -> Result<()> {
    let mut s = match Scenario::builtin(scenario) {
        Some(s) => s,
        None if Path::new(scenario).exists() => read_json(Path::new(scenario))?,
        None => bail!(
            "unknown scenario `{scenario}`; built-ins are {}",
            Scenario::builtin_names().join(", ")
        ),
    };
    if let Some(seed) = ctx.cli.seed {
        s.seed = seed;
    }
    let run = simulate(&s)?;
    let r = &run.result;
    out.line(format!("scenario {} seed {}", r.scenario, r.seed));
    out.line(format!(
        "produced {} accepted {} warned {} quarantined {} rejected {}",
        r.counts.produced, r.counts.accepted, r.counts.warned, r.counts.quarantined, r.counts.rejected
    ));
    out.line(format!(
        "audit records {} ({})",
        r.audit_records,
        if r.audit_valid { "chain valid" } else { "chain BROKEN" }
    ));
    for f in &r.faults {
        out.line(format!(
            "fault {} on {}: affected {} detected {} latency {}",
            f.kind,
            f.target,
            f.affected,
            f.detected,
            f.latency_s.map_or("undetected".to_string(), |l| format!("{l:.1}s"))
        ));
    }
    for st in &r.streams {
        out.line(format!(
            "stream {}: retention {:.3} completeness {:.3} breached windows {}",
            st.signal, st.retention, st.completeness, st.breached_windows
        ));
    }
    out.line(format!("digest {}", r.digest));
    out.record("scenario", r);
    if save {
        ctx.ws.save(&run.fabric)?;
        ctx.ws.save_run(r)?;
    }
    Ok(())
}

fn quality_report(ctx: &Ctx, stream: Option<&str>, window: i64, fraction: f64, out: &mut Output) -> Result<()> {
    if window <= 0 {
        bail!("--window must be positive");
    }
    let mut fabric = ctx.load()?;
    let streams: Vec<String> = match stream {
        Some(s) => vec![s.to_string()],
        None => fabric.observations.keys().cloned().collect(),
    };
    for s in streams {
        let Some(obs) = fabric.observations.get(&s) else {
            bail!("no observations for stream `{s}`");
        };
        let (Some(first), Some(last)) = (
            obs.iter().map(|o| o.event_time).min(),
            obs.iter().map(|o| o.event_time).max(),
        ) else {
            continue;
        };
        let mut ws = first;
        while ws <= last {
            let we = ws + Duration::seconds(window);
            let q = fabric.score_window(&s, ws, we, fraction)?;
            out.line(format!(
                "{s} {} completeness {:.3} accuracy {:.3} freshness {:.3} consistency {:.3} validity {:.3} composite {:.3}",
                ws.to_rfc3339(),
                q.dims.completeness,
                q.dims.accuracy,
                q.dims.freshness,
                q.dims.consistency,
                q.dims.validity,
                q.composite
            ));
            out.record("quality", &q);
            ws = we;
        }
    }
    Ok(())
}

fn governance(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let fabric = ctx.load()?;
    let last = ctx.ws.last_run()?;
    let (start, end, detections) = match &last {
        Some(r) => (
            r.start,
            r.end,
            r.faults
                .iter()
                .map(|f| govfabric_core::quality::DetectionEvent {
                    fault: format!("{}@{}", f.kind, f.target),
                    occurred_at: f.occurred_at,
                    detected_at: f.detected_at,
                })
                .collect(),
        ),
        None => {
            let times: Vec<DateTime<Utc>> = fabric.observations.values().flatten().map(|o| o.event_time).collect();
            let start = times.iter().min().copied().unwrap_or(ctx.now);
            let end = times.iter().max().map_or(ctx.now, |t| *t + Duration::seconds(1));
            (start, end, Vec::new())
        }
    };
    let report = governance_report(start, end, &fabric.governance_inputs(detections, end));
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.1}s"));
    out.line(format!("window {} .. {}", start.to_rfc3339(), end.to_rfc3339()));
    out.line(format!("mttd {} mttr {}", opt(report.mttd_s), opt(report.mttr_s)));
    out.line(format!(
        "decisions allow {:.3} deny {:.3} escalate {:.3}",
        report.decision_distribution.allow, report.decision_distribution.deny, report.decision_distribution.escalate
    ));
    for (k, v) in &report.failure_rates {
        out.line(format!("failure rate {k} {v:.4}"));
    }
    out.line(format!(
        "sla adherence {:.3} contract coverage {:.3}",
        report.sla_adherence, report.contract_coverage
    ));
    if !report.undetected.is_empty() {
        out.line(format!("undetected {}", report.undetected.join(", ")));
    }
    out.record("governance", &report);
    Ok(())
}

fn quarantine(ctx: &Ctx, cmd: &QuarantineCmd, out: &mut Output) -> Result<()> {
    match cmd {
        QuarantineCmd::List { all } => {
            let fabric = ctx.load()?;
            let items = fabric.quarantine_list(!all);
            out.line(format!("{} item(s)", items.len()));
            for q in items {
                let labels: Vec<&str> = q.violations.iter().map(|v| v.kind.label()).collect();
                out.line(format!(
                    "{} {} {} seq {} [{}] steward {}",
                    q.id,
                    q.message.device_id,
                    q.message.signal,
                    q.message.sequence,
                    labels.join(", "),
                    q.steward
                ));
                out.record("quarantine", q);
            }
        }
        QuarantineCmd::Requeue { id } => {
            let Some(mut fabric) = ctx.load_for_write(out)? else {
                return Ok(());
            };
            match fabric.quarantine_requeue(id, ctx.now) {
                Ok(d) => {
                    out.line(format!("{id} requeued: {d:?}"));
                    out.record("requeue", json!({ "id": id, "disposition": d }));
                    if !d.is_stored() {
                        out.reject();
                    }
                }
                Err(e @ BoundaryError::QuarantineClosed(_)) => boundary_refusal(e, out)?,
                Err(e) => return Err(e.into()),
            }
            ctx.ws.save(&fabric)?;
        }
        QuarantineCmd::Resolve { id, note } => {
            let Some(mut fabric) = ctx.load_for_write(out)? else {
                return Ok(());
            };
            match fabric.quarantine_resolve(id, note, ctx.now) {
                Ok(()) => {
                    out.line(format!("{id} resolved"));
                    out.record("resolve", json!({ "id": id, "note": note }));
                }
                Err(e @ BoundaryError::QuarantineClosed(_)) => boundary_refusal(e, out)?,
                Err(e) => return Err(e.into()),
            }
            ctx.ws.save(&fabric)?;
        }
    }
    Ok(())
}

fn audit_verify(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let path = ctx.ws.audit_path();
    let text = if path.exists() { read(&path)? } else { String::new() };
    let v = verify_jsonl(&text);
    match v.first_bad_index {
        None => out.line(format!("audit chain valid ({} records)", v.checked)),
        Some(i) => {
            out.line(format!("audit chain broken at record {i}"));
            out.reject();
        }
    }
    out.record("audit", v);
    Ok(())
}
