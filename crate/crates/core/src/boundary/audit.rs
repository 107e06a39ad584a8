//! Append-only, hash-chained audit log.

use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("audit record is missing {0}")]
    IncompleteRecord(&'static str),
    #[error("audit chain broken at index {0}")]
    ChainBroken(u64),
    #[error("range {start}..{end} outside log of {len} records")]
    RangeOutOfBounds { start: u64, end: u64, len: u64 },
    #[error("unreadable audit line {line}: {reason}")]
    Unreadable { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Ingest,
    Publish,
    Access,
    Export,
    Quarantine,
    Admin,
}

/// What a caller hands to `record_audit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub action: AuditAction,
    pub resource: String,
    pub outcome: String,
    pub reason: String,
}

impl AuditEntry {
    pub fn new(
        timestamp: DateTime<Utc>,
        actor: &str,
        action: AuditAction,
        resource: &str,
        outcome: &str,
        reason: impl Into<String>,
    ) -> Self {
        AuditEntry {
            timestamp,
            actor: actor.to_string(),
            action,
            resource: resource.to_string(),
            outcome: outcome.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub index: u64,
    #[serde(flatten)]
    pub entry: AuditEntry,
    pub prev_hash: String,
    pub hash: String,
}

#[derive(Serialize)]
struct Body<'a> {
    index: u64,
    entry: &'a AuditEntry,
}

fn digest(prev_hash: &str, index: u64, entry: &AuditEntry) -> String {
    let body = serde_json::to_vec(&Body { index, entry }).expect("audit body serializes");
    let mut h = Sha256::new();
    h.update(prev_hash.as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

impl AuditRecord {
    pub fn expected_hash(&self) -> String {
        digest(&self.prev_hash, self.index, &self.entry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainVerification {
    pub valid: bool,
    pub first_bad_index: Option<u64>,
    pub checked: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn head(&self) -> &str {
        self.records.last().map_or(GENESIS_HASH, |r| r.hash.as_str())
    }

    pub fn record_audit(&mut self, entry: AuditEntry) -> Result<u64, AuditError> {
        for (name, v) in [
            ("actor", &entry.actor),
            ("resource", &entry.resource),
            ("outcome", &entry.outcome),
        ] {
            if v.trim().is_empty() {
                return Err(AuditError::IncompleteRecord(name));
            }
        }
        let index = self.records.len() as u64;
        let prev_hash = self.head().to_string();
        let hash = digest(&prev_hash, index, &entry);
        self.records.push(AuditRecord {
            index,
            entry,
            prev_hash,
            hash,
        });
        Ok(index)
    }

    pub fn verify(&self) -> ChainVerification {
        verify_records(&self.records, 0, GENESIS_HASH)
    }

    /// Verifies `range`, anchoring on the hash of the record just before it.
    pub fn verify_audit_chain(&self, range: Range<u64>) -> Result<ChainVerification, AuditError> {
        let len = self.records.len() as u64;
        if range.start > range.end || range.end > len {
            return Err(AuditError::RangeOutOfBounds {
                start: range.start,
                end: range.end,
                len,
            });
        }
        let anchor = match range.start {
            0 => GENESIS_HASH,
            s => self.records[(s - 1) as usize].hash.as_str(),
        };
        Ok(verify_records(
            &self.records[range.start as usize..range.end as usize],
            range.start,
            anchor,
        ))
    }

    pub fn ensure_intact(&self) -> Result<(), AuditError> {
        match self.verify().first_bad_index {
            Some(i) => Err(AuditError::ChainBroken(i)),
            None => Ok(()),
        }
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("audit record serializes") + "\n")
            .collect()
    }

    /// Loads without checking the chain; call `verify` afterwards.
    pub fn from_jsonl(text: &str) -> Result<AuditLog, AuditError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: AuditRecord = serde_json::from_str(line).map_err(|e| AuditError::Unreadable {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(AuditLog { records })
    }
}

fn verify_records(records: &[AuditRecord], first_index: u64, anchor: &str) -> ChainVerification {
    let mut prev = anchor;
    for (i, r) in records.iter().enumerate() {
        let index = first_index + i as u64;
        if r.index != index || r.prev_hash != prev || r.hash != r.expected_hash() {
            return ChainVerification {
                valid: false,
                first_bad_index: Some(index),
                checked: i as u64 + 1,
            };
        }
        prev = &r.hash;
    }
    ChainVerification {
        valid: true,
        first_bad_index: None,
        checked: records.len() as u64,
    }
}

/// Verifies a line-delimited log as written to disk. A line that no longer
/// parses counts as the first bad record.
pub fn verify_jsonl(text: &str) -> ChainVerification {
    let mut prev = GENESIS_HASH.to_string();
    let mut checked = 0;
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        checked += 1;
        let ok = serde_json::from_str::<AuditRecord>(line)
            .ok()
            .filter(|r| r.index == index as u64 && r.prev_hash == prev && r.hash == r.expected_hash());
        match ok {
            Some(r) => prev = r.hash,
            None => {
                return ChainVerification {
                    valid: false,
                    first_bad_index: Some(index as u64),
                    checked,
                }
            }
        }
    }
    ChainVerification {
        valid: true,
        first_bad_index: None,
        checked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> DateTime<Utc> {
        "2025-01-01T00:00:00Z".parse().unwrap()
    }

    fn three() -> AuditLog {
        let mut log = AuditLog::new();
        for (i, action) in [AuditAction::Ingest, AuditAction::Access, AuditAction::Export]
            .into_iter()
            .enumerate()
        {
            log.record_audit(AuditEntry::new(t0(), "dev-1", action, &format!("r{i}"), "Allow", ""))
                .unwrap();
        }
        log
    }

    #[test]
    fn three_records_verify() {
        let log = three();
        assert_eq!(log.len(), 3);
        let v = log.verify();
        assert!(v.valid);
        assert_eq!(v.checked, 3);
        assert!(verify_jsonl(&log.to_jsonl()).valid);
    }

    #[test]
    fn empty_log_is_valid() {
        let v = AuditLog::new().verify();
        assert!(v.valid);
        assert_eq!(v.first_bad_index, None);
        assert!(verify_jsonl("").valid);
    }

    #[test]
    fn flipped_byte_in_record_two_is_found() {
        let text = three().to_jsonl();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let pos = lines[2].find("\"r2\"").unwrap() + 2;
        let mut bytes = lines[2].clone().into_bytes();
        bytes[pos] ^= 0x01;
        lines[2] = String::from_utf8(bytes).unwrap();
        let tampered = lines.join("\n");
        let v = verify_jsonl(&tampered);
        assert!(!v.valid);
        assert_eq!(v.first_bad_index, Some(2));

        let log = AuditLog::from_jsonl(&tampered).unwrap();
        assert_eq!(log.verify().first_bad_index, Some(2));
        assert_eq!(log.ensure_intact(), Err(AuditError::ChainBroken(2)));
    }

    #[test]
    fn every_single_bit_flip_in_hash_field_is_detected() {
        let log = three();
        for bit in 0..8 {
            let mut l = log.clone();
            let mut h = l.records[1].hash.clone().into_bytes();
            h[5] ^= 1 << bit;
            l.records[1].hash = String::from_utf8_lossy(&h).into_owned();
            assert_eq!(l.verify().first_bad_index, Some(1));
        }
    }

    #[test]
    fn incomplete_record_is_refused() {
        let mut log = AuditLog::new();
        let err = log
            .record_audit(AuditEntry::new(t0(), " ", AuditAction::Ingest, "r", "Allow", ""))
            .unwrap_err();
        assert_eq!(err, AuditError::IncompleteRecord("actor"));
        assert!(log.is_empty());
    }

    #[test]
    fn range_verification_anchors_on_previous_record() {
        let log = three();
        assert!(log.verify_audit_chain(1..3).unwrap().valid);
        assert!(log.verify_audit_chain(0..0).unwrap().valid);
        assert!(matches!(
            log.verify_audit_chain(1..4),
            Err(AuditError::RangeOutOfBounds { .. })
        ));
    }
}
