use serde::{Deserialize, Serialize};

use super::vuln::VulnKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecommendationStatus {
    Proposed,
    Adopted,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub text: String,
    pub target_vuln_ids: Vec<VulnKey>,
    pub cost: f64,
    pub value: f64,
    pub status: RecommendationStatus,
    #[serde(default)]
    pub rationale: String,
}

impl Recommendation {
    pub fn proposed(text: impl Into<String>, target: VulnKey) -> Self {
        Recommendation {
            text: text.into(),
            target_vuln_ids: vec![target],
            cost: 0.0,
            value: 0.0,
            status: RecommendationStatus::Proposed,
            rationale: String::new(),
        }
    }

    /// Checks the cost range and the value bound implied by the targets' scores.
    pub fn validate(&self, target_score_sum: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.target_vuln_ids.is_empty() {
            out.push(format!("{}: no target vulnerabilities", self.text));
        }
        if !(0.0..=10.0).contains(&self.cost) {
            out.push(format!("{}: cost {} outside [0, 10]", self.text, self.cost));
        }
        if self.value.abs() > target_score_sum + 1e-9 {
            out.push(format!(
                "{}: value {} exceeds target score sum {}",
                self.text, self.value, target_score_sum
            ));
        }
        out
    }
}

/// Candidate fixes generated for one finding; at most one may be adopted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationGroup {
    pub vuln_id: VulnKey,
    pub candidates: Vec<Recommendation>,
}

impl RecommendationGroup {
    pub fn adopted(&self) -> Option<&Recommendation> {
        self.candidates
            .iter()
            .find(|c| c.status == RecommendationStatus::Adopted)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.candidates.is_empty() {
            out.push(format!("{}: empty group", self.vuln_id));
        }
        for c in &self.candidates {
            if !c.target_vuln_ids.contains(&self.vuln_id) {
                out.push(format!("{}: candidate '{}' does not target the group", self.vuln_id, c.text));
            }
        }
        let adopted = self
            .candidates
            .iter()
            .filter(|c| c.status == RecommendationStatus::Adopted)
            .count();
        if adopted > 1 {
            out.push(format!("{}: {adopted} candidates adopted", self.vuln_id));
        }
        out
    }
}

/// Rounds to two decimals, the storage precision for non-CVSS scores.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
