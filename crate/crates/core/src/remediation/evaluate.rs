//! Evaluator: the model classifies a recommendation, the engine turns the
//! class into numbers.

use std::sync::LazyLock;

use regex::Regex;

use super::estimate::describe;
use crate::gateway::prompts::{cost_definition, VALUE_DEFINITION};
use crate::gateway::{render_prompt, vars, AgentRole, ChatTurn, Gateway, GatewayError, PromptKind};
use crate::model::{round2, CostPolicy, CostTier, Recommendation, VulnKey, Vulnerability};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Effectiveness {
    Full,
    /// Percentage in 0..=100.
    Partial(f64),
    Zero,
    Negative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostAnswer {
    Tier(CostTier),
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub effectiveness: Effectiveness,
    /// Labels (`V2`) or ids named on the Addresses line.
    pub addresses: Vec<String>,
    pub cost: CostAnswer,
    pub rationale: String,
}

static PCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(-?\d+(?:\.\d+)?)\s*%?").expect("static regex"));

fn line_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| {
        let l = l.trim().trim_start_matches(['-', '*', ' ']).replace("**", "");
        let (k, v) = l.split_once(':')?;
        if k.trim().eq_ignore_ascii_case(key) {
            // recover the slice from the original text
            let v = v.trim().to_string();
            text.find(v.as_str()).map(|i| &text[i..i + v.len()]).or(Some(""))
        } else {
            None
        }
    })
}

fn percentage(s: &str) -> Result<f64, String> {
    let k: f64 = PCT
        .captures(s)
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| format!("no percentage in {s:?}"))?;
    let k = k.abs();
    if k > 100.0 {
        return Err(format!("percentage {k} outside 0..100"));
    }
    Ok(k)
}

pub fn parse_effectiveness(s: &str) -> Result<Effectiveness, String> {
    let lower = s.trim().to_ascii_lowercase();
    if lower.starts_with("full") {
        Ok(Effectiveness::Full)
    } else if let Some(rest) = lower.strip_prefix("partial") {
        percentage(rest).map(Effectiveness::Partial)
    } else if lower.starts_with("zero") || lower.starts_with("none") {
        Ok(Effectiveness::Zero)
    } else if let Some(rest) = lower.strip_prefix("negative") {
        percentage(rest).map(Effectiveness::Negative)
    } else {
        Err(format!("unknown effectiveness {s:?}"))
    }
}

pub fn parse_cost(s: &str) -> Result<CostAnswer, String> {
    let lower = s.trim().to_ascii_lowercase();
    if lower.starts_with("low") {
        return Ok(CostAnswer::Tier(CostTier::Low));
    }
    if lower.starts_with("moderate") || lower.starts_with("medium") {
        return Ok(CostAnswer::Tier(CostTier::Moderate));
    }
    if lower.starts_with("high") {
        return Ok(CostAnswer::Tier(CostTier::High));
    }
    let n: f64 = lower
        .split_whitespace()
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| format!("unknown cost {s:?}"))?;
    if (0.0..=10.0).contains(&n) {
        Ok(CostAnswer::Explicit(n))
    } else {
        Err(format!("cost {n} outside 0..10"))
    }
}

/// Parses the Effectiveness / Addresses / Cost / Rationale reply.
pub fn parse_evaluation(text: &str) -> Result<Evaluation, String> {
    let eff = line_value(text, "effectiveness").ok_or("missing Effectiveness line")?;
    let cost = line_value(text, "cost").ok_or("missing Cost line")?;
    let addresses = line_value(text, "addresses")
        .unwrap_or_default()
        .split([',', ';'])
        .map(|s| s.trim().trim_matches('.').to_string())
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .collect();
    Ok(Evaluation {
        effectiveness: parse_effectiveness(eff)?,
        addresses,
        cost: parse_cost(cost)?,
        rationale: line_value(text, "rationale").unwrap_or_default().trim().to_string(),
    })
}

/// Full → the sum of target scores; Partial k% → k% of it; Zero → 0;
/// Negative k% → minus k% of it. Rounded to two decimals.
pub fn compute_value(eff: Effectiveness, target_scores: &[f64]) -> f64 {
    let sum: f64 = target_scores.iter().sum();
    round2(match eff {
        Effectiveness::Full => sum,
        Effectiveness::Partial(k) => k / 100.0 * sum,
        Effectiveness::Zero => 0.0,
        Effectiveness::Negative(k) => -(k / 100.0) * sum,
    })
}

pub fn cost_of(answer: CostAnswer, policy: &CostPolicy) -> f64 {
    match answer {
        CostAnswer::Tier(t) => policy.score(t),
        CostAnswer::Explicit(n) => n,
    }
}

/// `V1. <finding> [CVSS 9.8]` per finding, the labels the Evaluator answers with.
pub fn vulnerability_list(findings: &[Vulnerability]) -> String {
    findings
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let score = v.base_score().map(|s| format!(" [CVSS {s:.1}]")).unwrap_or_default();
            format!("V{}. {}{score}", i + 1, describe(v))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Findings named on the Addresses line, resolved by label or id.
fn resolve_targets(addresses: &[String], findings: &[Vulnerability]) -> Vec<VulnKey> {
    let mut out = Vec::new();
    for a in addresses {
        let a_up = a.to_ascii_uppercase();
        let by_label = a_up
            .strip_prefix('V')
            .and_then(|n| n.trim().parse::<usize>().ok())
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| findings.get(i));
        let hit = by_label.or_else(|| {
            // ids are only unambiguous when they are real CVEs
            findings.iter().find(|v| v.has_public_cve() && a_up.contains(&v.id))
        });
        if let Some(v) = hit {
            let k = v.key();
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    out
}

pub fn system_prompt(findings: &[Vulnerability], policy: &CostPolicy) -> Result<String, GatewayError> {
    render_prompt(
        PromptKind::EvaluatorSystem,
        &vars([
            ("vulns", vulnerability_list(findings)),
            ("value_def", VALUE_DEFINITION.to_string()),
            (
                "cost_def",
                cost_definition(
                    policy.score(CostTier::Low),
                    policy.score(CostTier::Moderate),
                    policy.score(CostTier::High),
                    policy.user_preference_text.as_deref(),
                ),
            ),
        ]),
    )
}

/// Scores `rec` (generated for `group`). The group's own finding is always
/// a target; others join when the Evaluator names them. An unusable reply
/// gets one re-prompt, then Moderate cost and value 0.
pub fn evaluate(
    rec: &Recommendation,
    group: &VulnKey,
    findings: &[Vulnerability],
    policy: &CostPolicy,
    gw: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Recommendation, GatewayError> {
    let mut turns = vec![
        ChatTurn::system(system_prompt(findings, policy)?),
        ChatTurn::user(render_prompt(PromptKind::Evaluate, &vars([("recommendation", rec.text.clone())]))?),
    ];
    let mut parsed = Err(String::new());
    for attempt in 0..2 {
        let reply = gw.complete(AgentRole::Evaluator, &turns)?;
        parsed = parse_evaluation(&reply);
        if parsed.is_ok() || attempt == 1 {
            break;
        }
        turns.push(ChatTurn::assistant(if reply.is_empty() { "(empty reply)".to_string() } else { reply }));
        turns.push(ChatTurn::user(render_prompt(PromptKind::EvaluateRetry, &vars([]))?));
    }
    let mut out = rec.clone();
    match parsed {
        Ok(ev) => {
            let mut targets = vec![group.clone()];
            for k in resolve_targets(&ev.addresses, findings) {
                if !targets.contains(&k) {
                    targets.push(k);
                }
            }
            let scores: Vec<f64> = targets
                .iter()
                .filter_map(|k| findings.iter().find(|v| &v.key() == k))
                .map(|v| v.base_score().unwrap_or(0.0))
                .collect();
            out.value = compute_value(ev.effectiveness, &scores);
            out.cost = cost_of(ev.cost, policy);
            out.target_vuln_ids = targets;
            out.rationale = ev.rationale;
        }
        Err(e) => {
            warnings.push(format!("{group}: unusable evaluation for '{}' ({e}); scored as moderate cost, no value", first_line(&rec.text)));
            out.value = 0.0;
            out.cost = policy.score(CostTier::Moderate);
            out.rationale = "evaluation could not be parsed".into();
        }
    }
    Ok(out)
}

pub fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or_default()
}
