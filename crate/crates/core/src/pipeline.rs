//! The two stages back to back: pentest, then remediation, then scoring.

use tracing::warn;

use crate::gateway::Gateway;
use crate::knowledge::KnowledgeBase;
use crate::model::{Recommendation, RunArtifact, RunConfig, RunStatus, Vulnerability};
use crate::pentest::{run_pentest, ExecutorBackend, PentestOutcome};
use crate::remediation::nvd::CveSource;
use crate::remediation::{remediate, RemediationOutcome};
use crate::scoring::score_run;

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub artifact: RunArtifact,
    pub pentest: PentestOutcome,
    pub remediation: Option<RemediationOutcome>,
}

/// Adopted recommendations across all groups.
pub fn selected(artifact: &RunArtifact) -> Vec<Recommendation> {
    artifact
        .recommendations
        .iter()
        .filter_map(|g| g.adopted().cloned())
        .collect()
}

/// Runs everything for `config`. An aborted pentest skips remediation; a
/// gateway failure during remediation marks the artifact Aborted. Scores
/// are filled in when `truth` is given.
pub fn run_pipeline(
    run_id: &str,
    config: &RunConfig,
    gw: &Gateway,
    kb: Option<&KnowledgeBase>,
    backend: &mut dyn ExecutorBackend,
    source: &dyn CveSource,
    truth: Option<&[Vulnerability]>,
) -> PipelineOutput {
    let pentest = run_pentest(config, gw, kb, backend);
    let mut artifact = RunArtifact::new(run_id, pentest.plan.clone(), pentest.findings.clone());
    artifact.target_address = config.target_address.clone();
    artifact.status = pentest.status;
    artifact.warnings = pentest.warnings.clone();
    if let Some(reason) = &pentest.abort_reason {
        artifact.warnings.push(format!("pentest aborted: {reason}"));
    }
    let mut remediation = None;
    if pentest.status != RunStatus::Aborted {
        match remediate(&pentest.findings, config, source, gw) {
            Ok(out) => {
                artifact.findings = out.findings.clone();
                artifact.recommendations = out.groups.clone();
                artifact.budget = Some(out.budget.clone());
                artifact.warnings.extend(out.warnings.iter().cloned());
                remediation = Some(out);
            }
            Err(e) => {
                warn!(error = %e, "remediation aborted");
                artifact.status = RunStatus::Aborted;
                artifact.warnings.push(format!("remediation aborted: {e}"));
            }
        }
    }
    if let Some(truth) = truth {
        match score_run(run_id, &artifact.findings, truth, &selected(&artifact), config.aggregation_mode) {
            Ok(r) => artifact.score_report = Some(r),
            Err(e) => artifact.warnings.push(format!("scoring skipped: {e}")),
        }
    }
    PipelineOutput {
        artifact,
        pentest,
        remediation,
    }
}
