//! The per-run JSON document shared between CLI invocations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::AggregationMode;
use super::plan::AttackPlan;
use super::recommendation::RecommendationGroup;
use super::vuln::Vulnerability;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub s_d: f64,
    pub s_r: f64,
    pub c: f64,
    pub s_overall: f64,
    pub found_count: usize,
    pub truth_count: usize,
    pub run_id: String,
    #[serde(default = "default_mode")]
    pub aggregation_mode: AggregationMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn default_mode() -> AggregationMode {
    AggregationMode::DividedByThree
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Complete,
    /// The iteration cap was reached before the loop converged.
    BudgetExhausted,
    /// The executor backend failed; history is partial.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub capacity: f64,
    pub used: f64,
    pub total_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    #[serde(default)]
    pub created_at: String,
    #[serde(default)]
    pub target_address: String,
    pub status: RunStatus,
    pub plan: AttackPlan,
    pub findings: Vec<Vulnerability>,
    #[serde(default)]
    pub recommendations: Vec<RecommendationGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSummary>,
    #[serde(default)]
    pub score_report: Option<ScoreReport>,
    #[serde(default)]
    pub transcript_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunArtifact {
    pub fn new(run_id: impl Into<String>, plan: AttackPlan, findings: Vec<Vulnerability>) -> Self {
        RunArtifact {
            run_id: run_id.into(),
            created_at: String::new(),
            target_address: String::new(),
            status: RunStatus::Complete,
            plan,
            findings,
            recommendations: Vec::new(),
            budget: None,
            score_report: None,
            transcript_ref: None,
            history_ref: None,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
#[error("run artifact parse error at byte {offset} (line {line}, column {column}): {message}")]
pub struct ArtifactParseError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

pub fn serialize_run(artifact: &RunArtifact) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(artifact).expect("artifact serialization is infallible");
    bytes.push(b'\n');
    bytes
}

pub fn deserialize_run(bytes: &[u8]) -> Result<RunArtifact, ArtifactParseError> {
    serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))
}

/// Converts serde_json's line/column into a byte offset into `bytes`.
pub fn json_error(bytes: &[u8], e: &serde_json::Error) -> ArtifactParseError {
    let (line, column) = (e.line(), e.column());
    let mut offset = 0usize;
    if line > 0 {
        for (i, l) in bytes.split(|b| *b == b'\n').enumerate() {
            if i + 1 == line {
                offset += column.saturating_sub(1).min(l.len());
                break;
            }
            offset += l.len() + 1;
        }
    }
    ArtifactParseError {
        offset: offset.min(bytes.len()),
        line,
        column,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::plan::TaskNode;

    #[test]
    fn empty_run_round_trips() {
        let a = RunArtifact::new("r1", AttackPlan::new(vec![TaskNode::todo("1", "Recon")]), vec![]);
        let back = deserialize_run(&serialize_run(&a)).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn truncated_input_reports_offset() {
        let a = RunArtifact::new("r1", AttackPlan::new(vec![TaskNode::todo("1", "Recon")]), vec![]);
        let bytes = serialize_run(&a);
        let cut = &bytes[..bytes.len() / 2];
        let err = deserialize_run(cut).unwrap_err();
        assert!(err.offset <= cut.len());
        assert!(err.offset > 0);
    }

    #[test]
    fn garbage_reports_first_byte() {
        let err = deserialize_run(b"  x").unwrap_err();
        assert_eq!(err.offset, 2);
    }
}
