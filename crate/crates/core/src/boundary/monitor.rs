//! Stream-level quality monitoring over ingested observations.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BoundaryError, Fabric};
use crate::contract::DataContract;
use crate::quality::{
    compute_dimension_scores, evaluate_sla, DetectionEvent, GovernanceInputs, QualityScore, SlaEvaluation,
    StreamWindow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamQuality {
    pub score: QualityScore,
    pub evaluation: SlaEvaluation,
}

impl StreamQuality {
    pub fn breached(&self) -> bool {
        !self.evaluation.breaches.is_empty()
    }
}

impl Fabric {
    pub fn stream_contract(&self, stream: &str, at: DateTime<Utc>) -> Result<&DataContract, BoundaryError> {
        let id = self
            .bindings
            .get(stream)
            .ok_or_else(|| BoundaryError::UnboundStream(stream.to_string()))?;
        Ok(self.contracts.resolve_contract(id, None, at)?)
    }

    /// Scores one window of a stream without judging it.
    pub fn score_window(
        &mut self,
        stream: &str,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        fraction: f64,
    ) -> Result<QualityScore, BoundaryError> {
        let contract = self.stream_contract(stream, end)?.clone();
        let window = StreamWindow {
            stream_id: stream.to_string(),
            start,
            end,
            scheduled_s: None,
            observations: self
                .observations
                .get(stream)
                .map(|obs| {
                    obs.iter()
                        .filter(|o| o.event_time >= start && o.event_time < end)
                        .cloned()
                        .collect()
                })
                .unwrap_or_default(),
        };
        let mut rng = self.op_rng();
        Ok(compute_dimension_scores(&window, &contract, fraction, &self.weights, &mut rng)?)
    }

    /// Scores one window of a stream against its contract SLA. Breaches are
    /// logged and alerts queued for the Responsible steward.
    pub fn monitor_window(
        &mut self,
        stream: &str,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        fraction: f64,
    ) -> Result<StreamQuality, BoundaryError> {
        let score = self.score_window(stream, start, end, fraction)?;
        let contract = self.stream_contract(stream, end)?;
        let evaluation = evaluate_sla(stream, contract, &score, end)?;
        self.sla_log.push((stream.to_string(), start, !evaluation.breaches.is_empty()));
        self.breaches.extend(evaluation.breaches.iter().cloned());
        for alert in &evaluation.alerts {
            self.notify(end, &alert.to, "sla_breach", format!("{}: {}", alert.product_id, alert.message));
        }
        Ok(StreamQuality { score, evaluation })
    }

    /// Every stream seen at ingestion or bound to a contract.
    pub fn streams(&self) -> Vec<String> {
        let mut out: Vec<String> = self.observations.keys().chain(self.bindings.keys()).cloned().collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn governance_inputs(&self, detections: Vec<DetectionEvent>, at: DateTime<Utc>) -> GovernanceInputs {
        let streams = self.streams();
        let governed = streams
            .iter()
            .filter(|s| self.stream_contract(s, at).is_ok())
            .count();
        GovernanceInputs {
            detections,
            breaches: self.breaches.clone(),
            sla_evaluations: self.sla_log.clone(),
            decisions: self.decisions,
            severities: self.severities,
            streams_total: streams.len() as u64,
            streams_governed: governed as u64,
            resolutions: self.quarantine_resolutions(),
        }
    }
}
