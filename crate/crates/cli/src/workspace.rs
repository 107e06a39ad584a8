//! On-disk workspace: fabric state as JSON, the audit log as JSON lines.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use govfabric_core::boundary::{AuditLog, Fabric};
use govfabric_core::mapping::CanonicalBaseline;
use govfabric_sim::ScenarioResult;

const STATE: &str = "state.json";
const AUDIT: &str = "audit.jsonl";
const LAST_RUN: &str = "last_run.json";

pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: &Path) -> Self {
        Workspace { dir: dir.to_path_buf() }
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.join(AUDIT)
    }

    pub fn load(&self, seed: u64) -> Result<Fabric> {
        let state = self.dir.join(STATE);
        let mut fabric = if state.exists() {
            let text = fs::read_to_string(&state).with_context(|| format!("reading {}", state.display()))?;
            serde_json::from_str::<Fabric>(&text).with_context(|| format!("parsing {}", state.display()))?
        } else {
            Fabric::new(CanonicalBaseline::standard(), seed)
        };
        let audit = self.audit_path();
        if audit.exists() {
            let text = fs::read_to_string(&audit)?;
            fabric.audit = AuditLog::from_jsonl(&text)?;
        }
        Ok(fabric)
    }

    pub fn save(&self, fabric: &Fabric) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut state = fabric.clone();
        let audit = std::mem::take(&mut state.audit);
        fs::write(self.dir.join(STATE), serde_json::to_string(&state)?)?;
        fs::write(self.audit_path(), audit.to_jsonl())?;
        Ok(())
    }

    pub fn save_run(&self, result: &ScenarioResult) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(LAST_RUN), serde_json::to_string_pretty(result)?)?;
        Ok(())
    }

    pub fn last_run(&self) -> Result<Option<ScenarioResult>> {
        let path = self.dir.join(LAST_RUN);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }
}
