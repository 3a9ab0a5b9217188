//! The pentest loop: plan, pick a task, ask for commands, run them,
//! summarize, update the plan, and re-plan around each new finding.

pub mod command;
pub mod exec;
pub mod extract;
pub mod plan_text;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::gateway::prompts::COUNTERFACTUAL_MARKER;
use crate::gateway::{render_prompt, vars, AgentRole, ChatTurn, Exchange, Gateway, GatewayError, PromptKind};
use crate::knowledge::{build_instructor_prompt, KnowledgeBase};
use crate::model::plan::cap_result_summary;
use crate::model::{is_cve_id, merge_findings, AttackPlan, RunConfig, RunStatus, TaskNode, TaskStatus, Vulnerability};

pub use command::{batch_console_commands, parse_commands, Channel, Command, CommandParse};
pub use exec::{ExecError, ExecOutput, ExecutorBackend, ExitStatus, ShellBackend, SimBackend};
pub use extract::{parse_extraction, render_findings};
pub use plan_text::{merge_plan, parse_plan, parse_plan_lines, MergeReport, PlanParseError};

/// Stored summaries never exceed this many characters, marker included.
pub const SUMMARY_CAP: usize = 1200;
pub const SUMMARY_TRUNCATION_MARKER: &str = " [summary truncated]";
pub const NO_OUTPUT: &str = "(no output)";
/// Result recorded when the planner's update cannot be parsed.
pub const PLANNER_PARSE_FAILURE: &str = "planner-parse-failure";
/// Characters of raw output shown to the summarizer.
const SUMMARIZER_INPUT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub iteration: usize,
    pub task_id: String,
    pub command: Command,
    pub raw_output: String,
    pub summary: String,
    pub exit_status: ExitStatus,
}

/// Append-only record of what was run and what was found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PentestHistory {
    records: Vec<ExecutionRecord>,
    findings_so_far: Vec<Vulnerability>,
}

impl PentestHistory {
    pub fn push(&mut self, record: ExecutionRecord) {
        self.records.push(record);
    }

    /// Adds findings not yet known; returns the ones that were new.
    pub fn add_findings(&mut self, incoming: Vec<Vulnerability>) -> Vec<Vulnerability> {
        let before = self.findings_so_far.len();
        merge_findings(&mut self.findings_so_far, incoming);
        self.findings_so_far[before..].to_vec()
    }

    pub fn records(&self) -> &[ExecutionRecord] {
        &self.records
    }

    pub fn findings(&self) -> &[Vulnerability] {
        &self.findings_so_far
    }

    /// One JSON object per execution record.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl(path: &Path) -> std::io::Result<Vec<ExecutionRecord>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub task_id: String,
    pub task_status: TaskStatus,
    /// Keys of findings first seen in this iteration.
    pub new_findings: Vec<String>,
    pub counterfactual_issued: bool,
    /// The set of task ids changed during this iteration.
    pub structure_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PentestOutcome {
    pub history: PentestHistory,
    pub plan: AttackPlan,
    pub findings: Vec<Vulnerability>,
    pub status: RunStatus,
    pub iterations: Vec<IterationLog>,
    pub warnings: Vec<String>,
    /// Why the run stopped early, when it did.
    pub abort_reason: Option<String>,
}

fn planner(gw: &Gateway, user: String) -> Result<String, GatewayError> {
    let system = render_prompt(PromptKind::PlannerSystem, &vars([]))?;
    gw.ask(AgentRole::Planner, &system, &user)
}

/// Plan used when the planner's first reply cannot be parsed.
pub fn default_plan(target: &str) -> AttackPlan {
    AttackPlan::new(vec![
        TaskNode::todo("1", "Reconnaissance")
            .with_children(vec![TaskNode::todo("1.1", format!("Confirm that {target} is reachable"))]),
        TaskNode::todo("2", "Scanning").with_children(vec![TaskNode::todo(
            "2.1",
            format!("Scan all TCP ports of {target} and identify service versions"),
        )]),
        TaskNode::todo("3", "Vulnerability Assessment").with_children(vec![TaskNode::todo(
            "3.1",
            "Run vulnerability detection scripts against the open services",
        )]),
        TaskNode::todo("4", "Exploitation")
            .with_children(vec![TaskNode::todo("4.1", "Exploit the most promising vulnerable service")]),
    ])
}

/// Asks the planner for the opening plan; falls back to [`default_plan`].
pub fn initial_plan(target: &str, gw: &Gateway, warnings: &mut Vec<String>) -> Result<AttackPlan, GatewayError> {
    let reply = planner(gw, render_prompt(PromptKind::PlannerInit, &vars([("target", target.to_string())]))?)?;
    match parse_plan(&reply) {
        Ok((mut plan, skipped)) => {
            warnings.extend(skipped);
            plan.roll_up();
            if plan.has_todo() {
                return Ok(plan);
            }
            warnings.push("initial plan has no to-do task; using the default plan".into());
        }
        Err(e) => warnings.push(format!("initial plan: {e}; using the default plan")),
    }
    Ok(default_plan(target))
}

static NEXT_TASK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)next\s+task\W{0,5}(\d+(?:\.\d+)*)").expect("static regex"));

/// Id the planner names in a `Next task: <id>` reply, or a bare id.
pub fn parse_next_task(reply: &str) -> Option<String> {
    if let Some(c) = NEXT_TASK.captures(reply) {
        return Some(c[1].to_string());
    }
    let bare = reply.trim().trim_end_matches('.');
    crate::model::plan::is_well_formed_id(bare).then(|| bare.to_string())
}

/// The planner's choice when it names an actionable task, otherwise the
/// first actionable task in depth-first order. `None` means the plan has
/// no to-do work left.
pub fn select_next_task(plan: &AttackPlan, gw: &Gateway) -> Result<Option<String>, GatewayError> {
    let candidates = plan.actionable();
    let Some(first) = candidates.first() else {
        return Ok(None);
    };
    let reply = planner(gw, render_prompt(PromptKind::PlannerNextTask, &vars([("plan", plan.render())]))?)?;
    let chosen = parse_next_task(&reply).filter(|id| candidates.iter().any(|c| &c.id == id));
    if chosen.is_none() {
        warn!(reply = %reply.trim(), "planner did not name a to-do task; falling back to {}", first.id);
    }
    Ok(Some(chosen.unwrap_or_else(|| first.id.clone())))
}

/// Cuts `text` so that it fits [`SUMMARY_CAP`] characters, marker included.
pub fn cap_summary(text: &str) -> String {
    let text = text.trim();
    if text.chars().count() <= SUMMARY_CAP {
        return text.to_string();
    }
    let keep = SUMMARY_CAP - SUMMARY_TRUNCATION_MARKER.chars().count();
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(SUMMARY_TRUNCATION_MARKER);
    out
}

/// Light-tier summary of one command's output. Empty output is summarized
/// without a model call.
pub fn summarize(command: &Command, raw_output: &str, gw: &Gateway) -> Result<String, GatewayError> {
    if raw_output.trim().is_empty() {
        return Ok(NO_OUTPUT.to_string());
    }
    let mut output: String = raw_output.chars().take(SUMMARIZER_INPUT_CAP).collect();
    if output.len() < raw_output.len() {
        output.push_str("\n[output clipped]");
    }
    let system = render_prompt(PromptKind::SummarizerSystem, &vars([]))?;
    let user = render_prompt(
        PromptKind::Summarize,
        &vars([("command", command.display()), ("output", output)]),
    )?;
    let reply = gw.ask(AgentRole::Summarizer, &system, &user)?;
    let capped = cap_summary(&reply);
    Ok(if capped.is_empty() { NO_OUTPUT.to_string() } else { capped })
}

fn force_status(plan: &mut AttackPlan, id: &str, status: TaskStatus, result: &str) {
    if let Some(node) = plan.find_mut(id) {
        if node.status == TaskStatus::ToDo {
            node.status = status;
            node.result_summary = Some(cap_result_summary(result));
        }
    }
}

/// Asks the planner to judge task `task_id` from `summary`. The task always
/// leaves ToDo: an unparseable reply or a reply that leaves it open marks
/// it Failed.
pub fn update_plan(
    plan: &AttackPlan,
    task_id: &str,
    summary: &str,
    gw: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<AttackPlan, GatewayError> {
    let task = plan.find(task_id).map(|t| t.description.clone()).unwrap_or_default();
    let user = render_prompt(
        PromptKind::PlannerUpdate,
        &vars([
            ("plan", plan.render()),
            ("task_id", task_id.to_string()),
            ("task", task),
            ("summary", summary.to_string()),
        ]),
    )?;
    let reply = planner(gw, user)?;
    let mut next = match parse_plan_lines(&reply) {
        Ok(lines) => {
            let (merged, report) = merge_plan(plan, &lines);
            warnings.extend(report.rejected.into_iter().map(|r| format!("plan update: {r}")));
            merged
        }
        Err(e) => {
            warnings.push(format!("plan update for {task_id}: {e}"));
            let mut p = plan.clone();
            force_status(&mut p, task_id, TaskStatus::Failed, PLANNER_PARSE_FAILURE);
            p.roll_up();
            return Ok(p);
        }
    };
    if next.find(task_id).is_some_and(|t| t.status == TaskStatus::ToDo) {
        warnings.push(format!("plan update left {task_id} open; marking it failed"));
        force_status(&mut next, task_id, TaskStatus::Failed, summary);
    } else if let Some(t) = next.find_mut(task_id) {
        if t.result_summary.as_deref().is_none_or(|r| r.starts_with("(marked")) {
            t.result_summary = Some(cap_result_summary(summary));
        }
    }
    next.roll_up();
    Ok(next)
}

/// The counterfactual prompt: the findings list, then the current plan.
pub fn counterfactual_prompt(plan: &AttackPlan, findings: &[Vulnerability]) -> Result<String, GatewayError> {
    let head = render_prompt(
        PromptKind::PlannerCounterfactual,
        &vars([("findings", render_findings(findings))]),
    )?;
    Ok(format!(
        "{}\n\nCurrent attack plan:\n{}Reply with the full updated plan.",
        head.trim_end(),
        plan.render()
    ))
}

/// Marks every open task (and its open subtasks) that names an
/// already-found CVE as completed. Returns the ids that were changed.
pub fn force_mark_found(plan: &mut AttackPlan, findings: &[Vulnerability]) -> Vec<String> {
    let found: Vec<String> = findings
        .iter()
        .filter(|v| is_cve_id(&v.id))
        .map(|v| v.id.to_ascii_uppercase())
        .collect();
    let stragglers: Vec<(String, String)> = plan
        .nodes()
        .into_iter()
        .filter(|n| n.status == TaskStatus::ToDo)
        .filter_map(|n| {
            let desc = n.description.to_ascii_uppercase();
            found.iter().find(|id| desc.contains(id.as_str())).map(|id| (n.id.clone(), id.clone()))
        })
        .collect();
    for (id, cve) in &stragglers {
        if let Some(node) = plan.find_mut(id) {
            close_subtree(node, &format!("{cve} already exploited"));
        }
    }
    plan.roll_up();
    stragglers.into_iter().map(|(id, _)| id).collect()
}

fn close_subtree(node: &mut TaskNode, result: &str) {
    if node.status == TaskStatus::ToDo {
        node.status = TaskStatus::Completed;
        node.result_summary = Some(result.to_string());
    }
    for c in node.children.iter_mut() {
        close_subtree(c, result);
    }
}

/// Re-plans as if the found vulnerabilities did not exist, then enforces
/// that no open task still targets one of them.
pub fn counterfactual_update(
    plan: &AttackPlan,
    findings: &[Vulnerability],
    gw: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<AttackPlan, GatewayError> {
    let reply = planner(gw, counterfactual_prompt(plan, findings)?)?;
    let mut next = match parse_plan_lines(&reply) {
        Ok(lines) => {
            let (merged, report) = merge_plan(plan, &lines);
            warnings.extend(report.rejected.into_iter().map(|r| format!("counterfactual update: {r}")));
            merged
        }
        Err(e) => {
            warnings.push(format!("counterfactual update: {e}; keeping the current plan"));
            plan.clone()
        }
    };
    let forced = force_mark_found(&mut next, findings);
    if !forced.is_empty() {
        info!(?forced, "closed tasks targeting found vulnerabilities");
    }
    Ok(next)
}

/// Text of `records` as shown to the extractor.
pub fn render_history(records: &[ExecutionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("[task {}] $ {}\n{}\n\n", r.task_id, r.command.display(), r.summary));
    }
    out
}

/// Structured findings from `records`; no model call when there is nothing
/// to read.
pub fn extract_findings(
    records: &[ExecutionRecord],
    gw: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vulnerability>, GatewayError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let system = render_prompt(PromptKind::ExtractorSystem, &vars([]))?;
    let user = render_prompt(PromptKind::Extract, &vars([("history", render_history(records))]))?;
    let reply = gw.ask(AgentRole::Extractor, &system, &user)?;
    let (found, w) = parse_extraction(&reply);
    warnings.extend(w);
    Ok(found)
}

/// True when no task is left, when the last `window` iterations brought
/// neither a finding nor a change in the plan's task set, or when the
/// iteration budget is spent.
pub fn should_terminate(
    plan: &AttackPlan,
    timeline: &[IterationLog],
    iteration: usize,
    window: usize,
    max_iterations: usize,
) -> bool {
    if !plan.has_todo() || iteration >= max_iterations {
        return true;
    }
    window > 0
        && timeline.len() >= window
        && timeline[timeline.len() - window..]
            .iter()
            .all(|l| l.new_findings.is_empty() && !l.structure_changed)
}

/// Drives the loop against `backend` until [`should_terminate`] fires.
/// Gateway failures and an unreachable backend end the run as Aborted with
/// everything gathered so far.
pub fn run_pentest(
    config: &RunConfig,
    gw: &Gateway,
    kb: Option<&KnowledgeBase>,
    backend: &mut dyn ExecutorBackend,
) -> PentestOutcome {
    let mut run = Run {
        config,
        gw,
        kb,
        history: PentestHistory::default(),
        plan: AttackPlan::default(),
        iterations: Vec::new(),
        warnings: Vec::new(),
        executor: Vec::new(),
    };
    let (status, abort_reason) = match run.drive(backend) {
        Ok(status) => (status, None),
        Err(reason) => {
            warn!(%reason, "pentest aborted");
            (RunStatus::Aborted, Some(reason))
        }
    };
    PentestOutcome {
        findings: run.history.findings().to_vec(),
        history: run.history,
        plan: run.plan,
        status,
        iterations: run.iterations,
        warnings: run.warnings,
        abort_reason,
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    gw: &'a Gateway,
    kb: Option<&'a KnowledgeBase>,
    history: PentestHistory,
    plan: AttackPlan,
    iterations: Vec<IterationLog>,
    warnings: Vec<String>,
    /// Executor conversation; instructor excerpts are never stored here.
    executor: Vec<ChatTurn>,
}

fn g(e: GatewayError) -> String {
    e.to_string()
}

impl Run<'_> {
    fn drive(&mut self, backend: &mut dyn ExecutorBackend) -> Result<RunStatus, String> {
        let target = self.config.target_address.clone();
        self.plan = initial_plan(&target, self.gw, &mut self.warnings).map_err(g)?;
        self.executor = vec![ChatTurn::system(render_prompt(PromptKind::ExecutorSystem, &vars([])).map_err(g)?)];
        let mut iteration = 0;
        loop {
            if should_terminate(
                &self.plan,
                &self.iterations,
                iteration,
                self.config.no_new_finding_window,
                self.config.max_iterations,
            ) {
                let exhausted = iteration >= self.config.max_iterations && self.plan.has_todo();
                return Ok(if exhausted { RunStatus::BudgetExhausted } else { RunStatus::Complete });
            }
            iteration += 1;
            let Some(task_id) = select_next_task(&self.plan, self.gw).map_err(g)? else {
                return Ok(RunStatus::Complete);
            };
            let log = self.iterate(iteration, &task_id, backend)?;
            info!(iteration, task = %task_id, new = log.new_findings.len(), "iteration done");
            self.iterations.push(log);
        }
    }

    /// Commands for `task`, re-prompting once when the first reply has none.
    fn executor_reply(&mut self, task: &TaskNode) -> Result<CommandParse, String> {
        let task_prompt = render_prompt(
            PromptKind::ExecutorTask,
            &vars([("target", self.config.target_address.clone()), ("task", task.description.clone())]),
        )
        .map_err(g)?;
        let mut sent = task_prompt.clone();
        if self.config.components.instructor {
            if let Some(kb) = self.kb {
                match kb.retrieve(&task.description, self.config.retrieval_k) {
                    Ok(excerpts) => {
                        sent = format!("{}\n\n{task_prompt}", build_instructor_prompt(&task.description, &excerpts))
                    }
                    Err(e) => self.warnings.push(format!("instructor: {e}")),
                }
            }
        }
        let mut turns = self.executor.clone();
        turns.push(ChatTurn::user(sent));
        let reply = self.gw.complete(AgentRole::Executor, &turns).map_err(g)?;
        self.executor.push(ChatTurn::user(task_prompt));
        self.executor.push(ChatTurn::assistant(non_empty(&reply)));
        let parsed = parse_commands(&reply);
        if !parsed.is_empty() {
            return Ok(parsed);
        }
        self.executor
            .push(ChatTurn::user(render_prompt(PromptKind::ExecutorRetry, &vars([])).map_err(g)?));
        let reply = self.gw.complete(AgentRole::Executor, &self.executor).map_err(g)?;
        self.executor.push(ChatTurn::assistant(non_empty(&reply)));
        Ok(parse_commands(&reply))
    }

    fn run_commands(
        &mut self,
        iteration: usize,
        task_id: &str,
        commands: Vec<Command>,
        backend: &mut dyn ExecutorBackend,
    ) -> Result<Vec<ExecutionRecord>, String> {
        let mut records = Vec::new();
        for cmd in batch_console_commands(commands) {
            let cmd = cmd.with_timeout(self.config.command_timeout_seconds);
            let (raw_output, exit_status, summary) = match backend.execute(&cmd) {
                Ok(out) => {
                    let s = summarize(&cmd, &out.output, self.gw).map_err(g)?;
                    (out.output, out.status, s)
                }
                Err(ExecError::Spawn(msg)) => {
                    let s = format!("The command could not be started: {msg}");
                    (msg, ExitStatus::SpawnFailed, s)
                }
                Err(ExecError::Unreachable(msg)) => return Err(format!("executor backend unreachable: {msg}")),
            };
            let record = ExecutionRecord {
                iteration,
                task_id: task_id.to_string(),
                command: cmd,
                raw_output,
                summary,
                exit_status,
            };
            self.history.push(record.clone());
            records.push(record);
        }
        Ok(records)
    }

    fn iterate(
        &mut self,
        iteration: usize,
        task_id: &str,
        backend: &mut dyn ExecutorBackend,
    ) -> Result<IterationLog, String> {
        let ids_before: HashSet<String> = self.plan.ids();
        let task = self.plan.find(task_id).cloned().expect("selected task exists");
        let parsed = self.executor_reply(&task)?;
        for e in &parsed.errors {
            self.warnings.push(format!("task {task_id}: {e}"));
        }
        let no_command = parsed.is_empty();
        let records = self.run_commands(iteration, task_id, parsed.commands, backend)?;
        let summary = if no_command {
            self.warnings.push(format!("task {task_id}: executor gave no command after a retry"));
            "The executor produced no command for this task.".to_string()
        } else {
            records
                .iter()
                .map(|r| format!("$ {}\n{}", r.command.display(), r.summary))
                .collect::<Vec<_>>()
                .join("\n\n")
        };
        self.plan = update_plan(&self.plan, task_id, &summary, self.gw, &mut self.warnings).map_err(g)?;
        if no_command && self.plan.find(task_id).is_some_and(|t| t.status == TaskStatus::Completed) {
            // nothing ran, so nothing can have succeeded
            if let Some(t) = self.plan.find_mut(task_id) {
                t.status = TaskStatus::Failed;
                t.result_summary = Some("no command produced".into());
            }
        }
        let task_status = self.plan.find(task_id).map(|t| t.status).unwrap_or(TaskStatus::Failed);
        let mut new_findings = Vec::new();
        let mut counterfactual_issued = false;
        if task_status == TaskStatus::Completed {
            let found = extract_findings(&records, self.gw, &mut self.warnings).map_err(g)?;
            new_findings = self.history.add_findings(found);
            if !new_findings.is_empty() && self.config.components.counterfactual {
                self.plan = counterfactual_update(&self.plan, self.history.findings(), self.gw, &mut self.warnings)
                    .map_err(g)?;
                counterfactual_issued = true;
            }
        }
        Ok(IterationLog {
            iteration,
            task_id: task_id.to_string(),
            task_status,
            new_findings: new_findings.iter().map(|v| v.key().to_string()).collect(),
            counterfactual_issued,
            structure_changed: self.plan.ids() != ids_before,
        })
    }
}

fn non_empty(reply: &str) -> String {
    if reply.is_empty() {
        "(empty reply)".into()
    } else {
        reply.to_string()
    }
}

/// Number of planner requests in `transcript` that carry the counterfactual
/// prompt.
pub fn counterfactual_requests(transcript: &[Exchange]) -> usize {
    transcript
        .iter()
        .filter(|e| e.role == AgentRole::Planner && e.last_user().is_some_and(|u| u.starts_with(COUNTERFACTUAL_MARKER)))
        .count()
}
