use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Records,
}

#[derive(Debug, Parser)]
#[command(name = "govfabric", version, about = "Governance fabric for industrial telemetry")]
pub struct Cli {
    /// Directory holding the persisted registries, stores and audit log.
    #[arg(long, global = true, default_value = ".govfabric")]
    pub workspace: PathBuf,
    /// Seed for sampling and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    /// Clock override (RFC 3339) for reproducible runs.
    #[arg(long, global = true)]
    pub now: Option<String>,
    /// Actor recorded in audit entries.
    #[arg(long, global = true, default_value = "cli")]
    pub actor: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Asset(AssetCmd),
    #[command(subcommand)]
    Device(DeviceCmd),
    #[command(subcommand)]
    Contract(ContractCmd),
    #[command(subcommand)]
    Policy(PolicyCmd),
    #[command(subcommand)]
    Mapping(MappingCmd),
    /// Runs line-delimited telemetry messages through the ingestion boundary.
    Ingest {
        #[arg(long)]
        file: PathBuf,
    },
    #[command(subcommand)]
    Product(ProductCmd),
    /// Requests access to a published product.
    Access {
        #[arg(long)]
        request: PathBuf,
    },
    /// Requests an external export of a published product.
    Export {
        #[arg(long)]
        request: PathBuf,
    },
    #[command(subcommand)]
    Simulate(SimulateCmd),
    #[command(subcommand)]
    Quality(QualityCmd),
    #[command(subcommand)]
    Governance(GovernanceCmd),
    #[command(subcommand)]
    Quarantine(QuarantineCmd),
    #[command(subcommand)]
    Audit(AuditCmd),
}

#[derive(Debug, Subcommand)]
pub enum AssetCmd {
    /// Registers one node, or a whole fleet definition with `--file`.
    Register {
        #[arg(long, conflicts_with_all = ["id", "level"])]
        file: Option<PathBuf>,
        #[arg(long, required_unless_present = "file")]
        id: Option<String>,
        #[arg(long, required_unless_present = "file")]
        level: Option<String>,
        #[arg(long)]
        parent: Option<String>,
        /// name=value, repeatable. Values parse as JSON when they can.
        #[arg(long = "attr")]
        attrs: Vec<String>,
    },
    Relocate {
        #[arg(long)]
        id: String,
        #[arg(long)]
        parent: String,
    },
    Lifecycle {
        #[arg(long)]
        id: String,
        #[arg(long)]
        to: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum DeviceCmd {
    Register {
        #[arg(long)]
        id: String,
        #[arg(long)]
        asset: String,
        #[arg(long)]
        secret: String,
        #[arg(long, default_value = "Active")]
        state: String,
    },
    Revoke {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum ContractCmd {
    Register {
        #[arg(long)]
        file: PathBuf,
        /// Approve and drive the new version to enforcement.
        #[arg(long)]
        enforce: bool,
        #[arg(long, default_value = "governance-office")]
        reviewer: String,
    },
    /// Classifies the change between two contracts.
    Diff {
        #[arg(long)]
        old: String,
        #[arg(long)]
        new: String,
    },
    /// Checks compatibility; exits 1 when incompatible.
    Check {
        #[arg(long)]
        old: String,
        #[arg(long)]
        new: String,
        #[arg(long, default_value = "backward")]
        mode: String,
    },
    State {
        #[arg(long)]
        id: String,
        #[arg(long)]
        version: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        reviewer: Option<String>,
    },
    Impact {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Args)]
pub struct PolicySources {
    /// Policy files; defaults to the workspace policy set.
    #[arg(long = "policy")]
    pub policies: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PolicyCmd {
    /// Parses a policy and checks it against the enterprise baseline.
    Lint {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        baseline: PolicySources,
    },
    Eval {
        #[arg(long)]
        request: PathBuf,
        #[command(flatten)]
        sources: PolicySources,
    },
    Conflicts {
        #[command(flatten)]
        sources: PolicySources,
        #[arg(long, default_value_t = 1_000_000)]
        limit: u128,
    },
    /// Installs policy files into the workspace, replacing same-id versions.
    Load {
        #[arg(long = "file", required = true)]
        files: Vec<PathBuf>,
    },
    /// Runs expected-outcome cases against the policy set.
    Test {
        #[arg(long)]
        cases: PathBuf,
        #[command(flatten)]
        sources: PolicySources,
    },
}

#[derive(Debug, Subcommand)]
pub enum MappingCmd {
    Load {
        #[arg(long)]
        file: PathBuf,
        /// SIGNAL=CONTRACT_ID, repeatable.
        #[arg(long = "bind")]
        binds: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProductCmd {
    Publish {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    /// Runs a built-in scenario by name or a scenario JSON file.
    Run {
        scenario: String,
        /// Keep the resulting fabric as the workspace state.
        #[arg(long)]
        save: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum QualityCmd {
    Report {
        #[arg(long)]
        stream: Option<String>,
        #[arg(long, default_value_t = 60)]
        window: i64,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GovernanceCmd {
    Report,
}

#[derive(Debug, Subcommand)]
pub enum QuarantineCmd {
    List {
        /// Include closed items.
        #[arg(long)]
        all: bool,
    },
    Requeue {
        id: String,
    },
    Resolve {
        id: String,
        #[arg(long)]
        note: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    Verify,
}
