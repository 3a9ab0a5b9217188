//! Domain types shared across the pipeline and their run-artifact encoding.

pub mod artifact;
pub mod config;
pub mod cvss;
pub mod plan;
pub mod recommendation;
pub mod vuln;

pub use artifact::{
    deserialize_run, serialize_run, ArtifactParseError, BudgetSummary, RunArtifact, RunStatus,
    ScoreReport,
};
pub use config::{AggregationMode, BudgetMode, Components, CostPolicy, CostTier, RunConfig, TierModels};
pub use cvss::{
    AttackComplexity, AttackVector, BaseVector, CvssMetrics, Impact, PrivilegesRequired, Scope, UserInteraction,
};
pub use plan::{validate_plan, AttackPlan, TaskNode, TaskStatus};
pub use recommendation::{round2, Recommendation, RecommendationGroup, RecommendationStatus};
pub use vuln::{
    is_cve_id, is_valid_vuln_id, merge_findings, normalize_service, CvssSource, VulnKey, Vulnerability, CVE_NA,
};
