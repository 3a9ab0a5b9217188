//! Prompt catalog for every agent role.
//!
//! Templates use `{name}` placeholders. Substitution is verbatim and
//! single-pass: text inserted for one placeholder is never re-expanded.

use std::collections::BTreeMap;

use super::{AgentRole, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    PlannerSystem,
    PlannerInit,
    PlannerNextTask,
    PlannerUpdate,
    PlannerCounterfactual,
    ExecutorSystem,
    ExecutorTask,
    ExecutorRetry,
    Instructor,
    SummarizerSystem,
    Summarize,
    ExtractorSystem,
    Extract,
    EstimatorSystem,
    Estimate,
    EstimateRetry,
    AdvisorSystem,
    Advise,
    AdviseRetry,
    EvaluatorSystem,
    Evaluate,
    EvaluateRetry,
}

impl PromptKind {
    pub fn role(self) -> AgentRole {
        use PromptKind::*;
        match self {
            PlannerSystem | PlannerInit | PlannerNextTask | PlannerUpdate
            | PlannerCounterfactual => AgentRole::Planner,
            ExecutorSystem | ExecutorTask | ExecutorRetry | Instructor => AgentRole::Executor,
            SummarizerSystem | Summarize => AgentRole::Summarizer,
            ExtractorSystem | Extract => AgentRole::Extractor,
            EstimatorSystem | Estimate | EstimateRetry => AgentRole::Estimator,
            AdvisorSystem | Advise | AdviseRetry => AgentRole::Advisor,
            EvaluatorSystem | Evaluate | EvaluateRetry => AgentRole::Evaluator,
        }
    }

    pub fn template(self) -> &'static str {
        use PromptKind::*;
        match self {
            PlannerSystem => PLANNER_SYSTEM,
            PlannerInit => PLANNER_INIT,
            PlannerNextTask => PLANNER_NEXT,
            PlannerUpdate => PLANNER_UPDATE,
            PlannerCounterfactual => PLANNER_COUNTERFACTUAL,
            ExecutorSystem => EXECUTOR_SYSTEM,
            ExecutorTask => EXECUTOR_TASK,
            ExecutorRetry => EXECUTOR_RETRY,
            Instructor => INSTRUCTOR,
            SummarizerSystem => SUMMARIZER_SYSTEM,
            Summarize => SUMMARIZE,
            ExtractorSystem => EXTRACTOR_SYSTEM,
            Extract => EXTRACT,
            EstimatorSystem => ESTIMATOR_SYSTEM,
            Estimate => ESTIMATE,
            EstimateRetry => ESTIMATE_RETRY,
            AdvisorSystem => ADVISOR_SYSTEM,
            Advise => ADVISE,
            AdviseRetry => ADVISE_RETRY,
            EvaluatorSystem => EVALUATOR_SYSTEM,
            Evaluate => EVALUATE,
            EvaluateRetry => EVALUATE_RETRY,
        }
    }

    /// The system prompt that opens a conversation for `role`.
    pub fn system_for(role: AgentRole) -> PromptKind {
        match role {
            AgentRole::Planner => PromptKind::PlannerSystem,
            AgentRole::Executor => PromptKind::ExecutorSystem,
            AgentRole::Summarizer => PromptKind::SummarizerSystem,
            AgentRole::Extractor => PromptKind::ExtractorSystem,
            AgentRole::Estimator => PromptKind::EstimatorSystem,
            AgentRole::Advisor => PromptKind::AdvisorSystem,
            AgentRole::Evaluator => PromptKind::EvaluatorSystem,
        }
    }
}

/// Placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

pub fn render_template(template: &str, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                let value = vars
                    .get(name)
                    .ok_or_else(|| GatewayError::MissingPlaceholder(name.to_string()))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders `kind` with `vars`; extra variables are ignored.
pub fn render_prompt(kind: PromptKind, vars: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    render_template(kind.template(), vars)
}

/// Convenience for call sites with a handful of `(&str, String)` pairs.
pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Opening line of the counterfactual re-planning prompt; used to spot it
/// in transcripts.
pub const COUNTERFACTUAL_MARKER: &str = "Here is the list of vulnerabilities already identified";

const PLANNER_SYSTEM: &str = "\
You are the lead planner of an authorized penetration test and are responsible for high-level planning. Rules:
(1) Task structure: organize tasks in a layered sequence (e.g., 1, 1.1, 1.1.1), following the phases Reconnaissance, Scanning, Vulnerability Assessment and Exploitation.
(2) Every task has a status: to-do, completed, or failed. Update the status from the latest outcomes and record a short description of what the task produced.
(3) When a task is uncertain or the outcomes show that more information is needed, add subtasks that gather it (e.g., search in Metasploit).
(4) Choose the next task based on the latest outcomes and the current plan; either start a to-do task or continue the current one.
(5) Write plans one task per line: `<id> <description> [<status>] -- <result>`. Omit the result for to-do tasks. Never renumber existing tasks.
(6) Demonstrate each weakness only as far as needed to confirm it.";

const PLANNER_INIT: &str = "\
The target machine is at {target}. Build the initial attack plan covering the Reconnaissance, Scanning, Vulnerability Assessment and Exploitation phases. Reply with the plan only.";

const PLANNER_NEXT: &str = "\
Current attack plan:
{plan}
Choose the next to-do task to work on. Reply with `Next task: <id>`.";

const PLANNER_UPDATE: &str = "\
Current attack plan:
{plan}
Task {task_id} ({task}) was attempted. Summary of the results:
{summary}
Mark task {task_id} as completed or failed, give it a concise result, and add subtasks if more information is needed. Reply with the full updated plan.";

const PLANNER_COUNTERFACTUAL: &str = "\
Here is the list of vulnerabilities already identified, please mark them as completed on the attack list. Now exploit the system as if they do not exist:
{findings}";

const EXECUTOR_SYSTEM: &str = "\
You are responsible for generating commands for the tasks your planner assigns during an authorized penetration test. Rules:
(1) Give your command(s) in a format starting and ending with \"$\" for easy parsing, e.g. $nmap -sV 192.168.1.10$.
(2) Split a long or complex command into several simpler commands.
(3) Only give a sequence of commands when they are logically connected and their order makes sense.
(4) If you want to use Metasploit, please write in this format: \"msfconsole: [command]\", e.g. $msfconsole: search vsftpd$.
(5) You operate on a Kali Linux machine with all tools pre-installed and permission to use them.
(6) Commands run non-interactively: pass credentials and options on the command line.";

const EXECUTOR_TASK: &str = "\
Target: {target}
Task: {task}
Give the command(s) for this task.";

const EXECUTOR_RETRY: &str = "\
Your reply contained no command wrapped in \"$\". Give the command(s) for the task again, each starting and ending with \"$\".";

const INSTRUCTOR: &str = "\
Here is a brief introduction to the task: {task}. Here is some info from the knowledge base for your reference:
{excerpts}";

const SUMMARIZER_SYSTEM: &str = "\
You condense the output of penetration-testing commands. Keep what matters for the next step: open ports, service versions, credentials, errors, and whether access was gained. Answer in at most 150 words.";

const SUMMARIZE: &str = "\
Command: {command}
Output:
{output}";

const EXTRACTOR_SYSTEM: &str = "\
You extract the vulnerabilities that were successfully exploited from a penetration-test history. For each distinct vulnerability output one block:
Exploited: <CVE ID, or CVE-NA if no CVE is disclosed>
service: <service name>
port: <port number>
description: <one line>
method: <exploit module, credentials or technique used>
Separate blocks with a blank line. Reply `None` when nothing was exploited.";

const EXTRACT: &str = "\
Attack history:
{history}";

const ESTIMATOR_SYSTEM: &str = "\
You are responsible for producing a vector string for a CVSS calculator.
(1) A vector string is of the form 'CVSS:3.0/AV:[value]/AC:[value]/PR:[value]/UI:[value]/S:[value]/C:[value]/I:[value]/A:[value]'.
(2) Attack Vector (AV), how the vulnerability is exploited: Network (N), Adjacent (A), Local (L), Physical (P).
(3) Attack Complexity (AC), conditions outside the attacker's control: Low (L), High (H).
(4) Privileges Required (PR): None (N), Low (L), High (H).
(5) User Interaction (UI): None (N), Required (R).
(6) Scope (S): Unchanged (U), Changed (C).
(7) Confidentiality (C), Integrity (I) and Availability (A) impact: High (H), Low (L), None (N).
Reply with the vector string only.";

const ESTIMATE: &str = "\
Vulnerability: {vulnerability}
Recorded context:
{context}";

const ESTIMATE_RETRY: &str = "\
That reply could not be parsed: {error}. Reply with a single vector string in the required form.";

const ADVISOR_SYSTEM: &str = "\
You are responsible for remediation strategies for the vulnerabilities found during an authorized penetration test.
(1) Recommendations must be actionable and effective against the identified risk.
(2) Specific commands are preferred over general advice. For example, \"sudo apt update\" is better than \"Update the system\".
(3) Adding protection is preferred over shutting down services, e.g. enabling a firewall rule with the exact commands.
(4) Reply with a numbered list, one recommendation per item.";

const ADVISE: &str = "\
Vulnerability: {vulnerability}
Give your remediation recommendations.";

const ADVISE_RETRY: &str = "\
Reply again as a numbered list (1., 2., ...) with one recommendation per item.";

const EVALUATOR_SYSTEM: &str = "\
You have already discovered these vulnerabilities: {vulns}. If the following remediation approach is adopted, to what extent can it mitigate the risks? Give the score based on the rule: {value_def}. Give the score based on their cost: {cost_def}.";

const EVALUATE: &str = "\
Recommendation: {recommendation}
Imagine the recommendation has been implemented. Reply in exactly this format:
Effectiveness: Full | Partial <k>% | Zero | Negative <k>%
Addresses: <labels of the vulnerabilities it fixes, comma separated>
Cost: Low | Moderate | High | <number from 0 to 10>
Rationale: <one sentence>";

const EVALUATE_RETRY: &str = "\
That reply did not follow the format. Reply again with the Effectiveness, Addresses, Cost and Rationale lines.";

/// Default description of the value classes given to the evaluator.
pub const VALUE_DEFINITION: &str = "\
Full: the recommendation directly and completely fixes the vulnerability (it earns the full CVSS score). \
Partial <k>%: it only partly addresses the vulnerability, with k between 0 and 100 reflecting how much. \
Zero: it cannot address the vulnerability or is irrelevant. \
Negative <k>%: it makes the vulnerability worse, with k between 0 and 100 reflecting how much. \
A recommendation that fixes several vulnerabilities earns the sum of their scores; list all of them under Addresses";

/// Default cost tiers, with the user's preference text appended when given.
pub fn cost_definition(low: f64, moderate: f64, high: f64, preference: Option<&str>) -> String {
    let mut s = format!(
        "Low ({low:.1}): free patches, configuration changes or simple commands. \
         Moderate ({moderate:.1}): writing scripts or programs, buying software or hardware, or some risk. \
         High ({high:.1}): stopping a service, shutting down a system, or a high risk of disruption"
    );
    if let Some(p) = preference.filter(|p| !p.trim().is_empty()) {
        s.push_str(". User preference: ");
        s.push_str(p.trim());
    }
    s
}
