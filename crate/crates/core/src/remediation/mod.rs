//! Remediation: CVSS enrichment, recommendation generation, scoring and
//! budgeted selection.

pub mod advise;
pub mod cvss;
pub mod estimate;
pub mod evaluate;
pub mod knapsack;
pub mod nvd;

use std::fmt::Write as _;

use crate::gateway::{Gateway, GatewayError};
use crate::model::{
    round2, BudgetMode, BudgetSummary, Recommendation, RecommendationGroup, RecommendationStatus, RunConfig,
    Vulnerability,
};
use knapsack::Item;
use nvd::CveSource;

pub const NOTHING_TO_REMEDIATE: &str = "no findings; nothing to remediate";

#[derive(Debug, Clone, PartialEq)]
pub struct RemediationOutcome {
    /// Findings with CVSS metrics attached.
    pub findings: Vec<Vulnerability>,
    pub groups: Vec<RecommendationGroup>,
    pub budget: BudgetSummary,
    pub warnings: Vec<String>,
}

impl RemediationOutcome {
    pub fn selected(&self) -> Vec<&Recommendation> {
        self.groups.iter().filter_map(|g| g.adopted()).collect()
    }
}

fn items(g: &RecommendationGroup) -> Vec<Item> {
    g.candidates.iter().map(|c| Item { cost: c.cost, value: c.value }).collect()
}

fn mark(g: &mut RecommendationGroup, choice: Option<usize>) {
    for (i, c) in g.candidates.iter_mut().enumerate() {
        c.status = if Some(i) == choice {
            RecommendationStatus::Adopted
        } else {
            RecommendationStatus::Discarded
        };
    }
}

fn summary(groups: &[RecommendationGroup], capacity: f64) -> BudgetSummary {
    let adopted: Vec<&Recommendation> = groups.iter().filter_map(|g| g.adopted()).collect();
    BudgetSummary {
        capacity,
        used: round2(adopted.iter().map(|r| r.cost).sum()),
        total_value: round2(adopted.iter().map(|r| r.value).sum()),
    }
}

/// One knapsack over all groups with capacity `budget`; every candidate
/// ends up Adopted or Discarded.
pub fn select(groups: &mut [RecommendationGroup], budget: f64) -> BudgetSummary {
    let all: Vec<Vec<Item>> = groups.iter().map(items).collect();
    let sel = knapsack::solve(&all, budget);
    for (g, choice) in groups.iter_mut().zip(sel.choices) {
        mark(g, choice);
    }
    summary(groups, budget)
}

/// Each group gets its own `per_group` budget.
pub fn select_per_group(groups: &mut [RecommendationGroup], per_group: f64) -> BudgetSummary {
    for g in groups.iter_mut() {
        let sel = knapsack::solve(&[items(g)], per_group);
        mark(g, sel.choices[0]);
    }
    summary(groups, per_group * groups.len() as f64)
}

/// Enrich, advise, evaluate, select. Failures on one finding become
/// warnings; only gateway errors abort.
pub fn remediate(
    findings: &[Vulnerability],
    config: &RunConfig,
    source: &dyn CveSource,
    gw: &Gateway,
) -> Result<RemediationOutcome, GatewayError> {
    let mut warnings = Vec::new();
    if findings.is_empty() {
        return Ok(RemediationOutcome {
            findings: Vec::new(),
            groups: Vec::new(),
            budget: BudgetSummary {
                capacity: 0.0,
                used: 0.0,
                total_value: 0.0,
            },
            warnings: vec![NOTHING_TO_REMEDIATE.to_string()],
        });
    }
    let enriched = estimate::enrich(findings, source, gw, &mut warnings)?;
    let mut groups = Vec::new();
    for v in &enriched {
        if let Some(g) = advise::advise(v, gw, &mut warnings)? {
            groups.push(g);
        }
    }
    for g in &mut groups {
        let key = g.vuln_id.clone();
        for c in &mut g.candidates {
            *c = evaluate::evaluate(c, &key, &enriched, &config.cost_policy, gw, &mut warnings)?;
        }
    }
    let n = enriched.len() as f64;
    let budget = if !config.components.evaluator {
        // without the Evaluator there is nothing to optimise: take each
        // group's first suggestion
        for g in &mut groups {
            mark(g, Some(0));
        }
        summary(&groups, config.budget_per_vuln * n)
    } else {
        match config.budget_mode {
            BudgetMode::Total => select(&mut groups, config.budget_per_vuln * n),
            BudgetMode::PerGroup => {
                let mut s = select_per_group(&mut groups, config.budget_per_vuln);
                s.capacity = config.budget_per_vuln * n;
                s
            }
        }
    };
    Ok(RemediationOutcome {
        findings: enriched,
        groups,
        budget,
        warnings,
    })
}

fn status_label(s: RecommendationStatus) -> &'static str {
    match s {
        RecommendationStatus::Adopted => "Adopted",
        RecommendationStatus::Discarded => "Discarded",
        RecommendationStatus::Proposed => "Proposed",
    }
}

/// Human-readable report, one numbered block per group:
///
/// ```text
/// 1. [Adopted] Update Samba
///   Cost: 2.0, Value: 9.0
/// ```
pub fn render_recommendations(groups: &[RecommendationGroup], budget: Option<&BudgetSummary>) -> String {
    let mut out = String::new();
    if groups.is_empty() {
        out.push_str("No recommendations.\n");
    }
    for g in groups {
        let k = &g.vuln_id;
        match k.port {
            Some(p) => writeln!(out, "{} on {} (port {p}):", k.id, k.service),
            None => writeln!(out, "{} on {}:", k.id, k.service),
        }
        .expect("write to String");
        for (i, c) in g.candidates.iter().enumerate() {
            let mut lines = c.text.lines();
            let _ = writeln!(out, "{}. [{}] {}", i + 1, status_label(c.status), lines.next().unwrap_or_default());
            for l in lines {
                let _ = writeln!(out, "     {l}");
            }
            let _ = writeln!(out, "  Cost: {:.1}, Value: {:.1}", c.cost, c.value);
        }
        out.push('\n');
    }
    if let Some(b) = budget {
        let _ = writeln!(
            out,
            "Budget: {:.1} of {:.1} used, total value {:.2}",
            b.used, b.capacity, b.total_value
        );
    }
    out
}
