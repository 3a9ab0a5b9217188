//! Advisor: numbered remediation lists, one group per finding.

use std::sync::LazyLock;

use regex::Regex;

use super::estimate::describe;
use crate::gateway::{render_prompt, vars, AgentRole, ChatTurn, Gateway, GatewayError, PromptKind};
use crate::model::{Recommendation, RecommendationGroup, Vulnerability};

static ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\*\*)?(\d+)[.)](?:\*\*)?\s+(.+)$").expect("static regex"));

/// Items of a numbered list. Indented or unnumbered lines after an item
/// (commands, code fences) belong to it; text before the first item is
/// ignored.
pub fn parse_numbered_list(text: &str) -> Vec<String> {
    let mut items: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        if let Some(c) = ITEM.captures(line) {
            items.push(vec![c[2].trim().to_string()]);
        } else if let Some(cur) = items.last_mut() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with("```") {
                cur.push(t.to_string());
            }
        }
    }
    items
        .into_iter()
        .map(|lines| lines.join("\n"))
        .filter(|s| !s.trim().is_empty())
        .collect()
}

/// Candidates for `v`; `None` (with a warning) when two replies in a row
/// contain no numbered list.
pub fn advise(v: &Vulnerability, gw: &Gateway, warnings: &mut Vec<String>) -> Result<Option<RecommendationGroup>, GatewayError> {
    let mut turns = vec![
        ChatTurn::system(render_prompt(PromptKind::AdvisorSystem, &vars([]))?),
        ChatTurn::user(render_prompt(PromptKind::Advise, &vars([("vulnerability", describe(v))]))?),
    ];
    let mut items = Vec::new();
    for attempt in 0..2 {
        let reply = gw.complete(AgentRole::Advisor, &turns)?;
        items = parse_numbered_list(&reply);
        if !items.is_empty() || attempt == 1 {
            break;
        }
        turns.push(ChatTurn::assistant(if reply.is_empty() { "(empty reply)".to_string() } else { reply }));
        turns.push(ChatTurn::user(render_prompt(PromptKind::AdviseRetry, &vars([]))?));
    }
    if items.is_empty() {
        warnings.push(format!("{}: advisor gave no numbered list; no recommendations", v.key()));
        return Ok(None);
    }
    let key = v.key();
    Ok(Some(RecommendationGroup {
        vuln_id: key.clone(),
        candidates: items.into_iter().map(|t| Recommendation::proposed(t, key.clone())).collect(),
    }))
}
