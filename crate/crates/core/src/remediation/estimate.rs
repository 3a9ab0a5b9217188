//! CVSS data for each finding: NVD first, the Estimator otherwise.

use tracing::warn;

use super::cvss::{find_vector, metrics_from_vector, score};
use super::nvd::{CveSource, LookupError};
use crate::gateway::{render_prompt, vars, AgentRole, ChatTurn, Gateway, GatewayError, PromptKind};
use crate::model::{CvssMetrics, CvssSource, Vulnerability, CVE_NA};

/// Used when the Estimator fails twice: network-reachable, low impact.
pub const FALLBACK_VECTOR: &str = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:L/I:L/A:L";

/// One-line description of a finding for agent prompts.
pub fn describe(v: &Vulnerability) -> String {
    let mut s = match v.port {
        Some(p) => format!("{} on {} (port {p})", v.id, v.service),
        None => format!("{} on {}", v.id, v.service),
    };
    if !v.description.is_empty() {
        s.push_str(": ");
        s.push_str(&v.description);
    }
    s
}

fn context(v: &Vulnerability) -> String {
    let mut lines = Vec::new();
    if !v.description.is_empty() {
        lines.push(format!("Description: {}", v.description));
    }
    if !v.exploitation_method.is_empty() {
        lines.push(format!("Exploited with: {}", v.exploitation_method));
    }
    if v.id == CVE_NA {
        lines.push("No CVE entry is published for this weakness.".into());
    }
    if lines.is_empty() {
        "(none recorded)".into()
    } else {
        lines.join("\n")
    }
}

/// Asks the Estimator for a vector; one re-prompt quoting the parse error,
/// then [`FALLBACK_VECTOR`].
pub fn estimate_vector(v: &Vulnerability, gw: &Gateway, warnings: &mut Vec<String>) -> Result<CvssMetrics, GatewayError> {
    let mut turns = vec![
        ChatTurn::system(render_prompt(PromptKind::EstimatorSystem, &vars([]))?),
        ChatTurn::user(render_prompt(
            PromptKind::Estimate,
            &vars([("vulnerability", describe(v)), ("context", context(v))]),
        )?),
    ];
    let reply = gw.complete(AgentRole::Estimator, &turns)?;
    let error = match find_vector(&reply) {
        Ok(vector) => return Ok(score(vector)),
        Err(e) => e,
    };
    turns.push(ChatTurn::assistant(if reply.is_empty() { "(empty reply)".to_string() } else { reply }));
    turns.push(ChatTurn::user(render_prompt(
        PromptKind::EstimateRetry,
        &vars([("error", error.to_string())]),
    )?));
    let reply = gw.complete(AgentRole::Estimator, &turns)?;
    match find_vector(&reply) {
        Ok(vector) => Ok(score(vector)),
        Err(e) => {
            warnings.push(format!("{}: estimator gave no usable vector ({e}); using {FALLBACK_VECTOR}", v.key()));
            Ok(metrics_from_vector(FALLBACK_VECTOR).expect("fallback vector parses"))
        }
    }
}

/// Attaches CVSS metrics to every finding: an NVD record when the id is a
/// published CVE with v3 data, an estimate otherwise.
pub fn enrich(
    findings: &[Vulnerability],
    source: &dyn CveSource,
    gw: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vulnerability>, GatewayError> {
    let mut out = Vec::with_capacity(findings.len());
    for v in findings {
        let mut v = v.clone();
        if v.has_public_cve() {
            match source.lookup(&v.id) {
                Ok(record) => {
                    if v.description.is_empty() {
                        v.description = record.description.clone();
                    }
                    v.cvss = Some(record.metrics);
                    v.cvss_source = CvssSource::NvdLookup;
                    out.push(v);
                    continue;
                }
                Err(LookupError::NotFound(_)) => {}
                Err(e) => {
                    warn!(id = %v.id, error = %e, "NVD lookup failed");
                    warnings.push(format!("{}: NVD lookup failed ({e}); estimating", v.id));
                }
            }
        }
        v.cvss = Some(estimate_vector(&v, gw, warnings)?);
        v.cvss_source = CvssSource::Estimated;
        out.push(v);
    }
    Ok(out)
}
