use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use penheal_core::gateway::{AgentRole, ChatRequest, Gateway, GatewayError, LlmBackend, ReplayBackend, RoleTag};
use penheal_core::knowledge::bundled_index;
use penheal_core::model::{AttackPlan, RunConfig, RunStatus, TaskNode, TaskStatus, Vulnerability};
use penheal_core::pentest::{
    cap_summary, counterfactual_requests, force_mark_found, run_pentest, select_next_task, summarize, update_plan,
    Command, ExecError, ExecOutput, ExecutorBackend, PentestHistory, PentestOutcome, SimBackend, NO_OUTPUT,
    PLANNER_PARSE_FAILURE, SUMMARY_CAP, SUMMARY_TRUNCATION_MARKER,
};
use penheal_core::scripted::{Scenario, ScriptedModel};
use penheal_core::sim::{metasploitable2, Simulator};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn sim() -> SimBackend {
    SimBackend::new(Simulator::new(metasploitable2()))
}

fn config() -> RunConfig {
    RunConfig::new("10.0.2.4")
}

/// Scripted replies, with `f` given the first say.
fn overriding(
    scenario: Scenario,
    f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
) -> Arc<dyn LlmBackend> {
    let base = ScriptedModel::new(scenario);
    Arc::new(move |r: &ChatRequest| match f(r) {
        Some(reply) => Ok(reply),
        None => base.complete(r),
    })
}

fn fixed(reply: &'static str) -> Gateway {
    Gateway::new(Arc::new(move |_: &ChatRequest| Ok(reply.to_string())))
}

fn last_user(r: &ChatRequest) -> &str {
    r.messages
        .iter()
        .rev()
        .find(|m| m.role_tag == RoleTag::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

fn golden(config: &RunConfig) -> (PentestOutcome, Gateway) {
    let gw = Gateway::new(Arc::new(ScriptedModel::new(Scenario::Golden)));
    let kb = bundled_index();
    let out = run_pentest(config, &gw, Some(&kb), &mut sim());
    (out, gw)
}

fn small_plan() -> AttackPlan {
    AttackPlan::new(vec![TaskNode::todo("1", "Scanning").with_children(vec![
        TaskNode::todo("1.1", "Scan all TCP ports"),
        TaskNode::todo("1.2", "Scan UDP ports"),
    ])])
}

#[test]
fn planner_choice_is_followed() {
    let id = select_next_task(&small_plan(), &fixed("Next task: 1.2")).unwrap();
    assert_eq!(id.as_deref(), Some("1.2"));
}

#[test]
fn non_actionable_choice_falls_back_to_first_todo() {
    // 1 is a parent with open children, 9.9 does not exist
    for reply in ["Next task: 1", "Next task: 9.9", "no idea"] {
        let id = select_next_task(&small_plan(), &fixed(reply)).unwrap();
        assert_eq!(id.as_deref(), Some("1.1"), "{reply}");
    }
}

#[test]
fn finished_plan_selects_nothing_without_asking() {
    let mut plan = small_plan();
    for id in ["1.1", "1.2"] {
        let t = plan.find_mut(id).unwrap();
        t.status = TaskStatus::Failed;
        t.result_summary = Some("x".into());
    }
    plan.roll_up();
    let gw = fixed("Next task: 1.1");
    assert_eq!(select_next_task(&plan, &gw).unwrap(), None);
    assert!(gw.transcript().is_empty());
}

#[test]
fn long_summaries_are_capped_with_marker() {
    let long = "x".repeat(5000);
    let gw = Gateway::new(Arc::new(move |_: &ChatRequest| Ok(long.clone())));
    let s = summarize(&Command::shell("nmap 10.0.2.4"), "output", &gw).unwrap();
    assert_eq!(s.chars().count(), SUMMARY_CAP);
    assert!(s.ends_with(SUMMARY_TRUNCATION_MARKER));
    assert_eq!(cap_summary("short"), "short");
}

#[test]
fn empty_output_is_summarized_without_a_call() {
    let gw = fixed("should not be used");
    assert_eq!(summarize(&Command::shell("true"), "  \n", &gw).unwrap(), NO_OUTPUT);
    assert!(gw.transcript().is_empty());
}

#[test]
fn unparseable_update_marks_the_task_failed() {
    let mut warnings = Vec::new();
    let plan = update_plan(&small_plan(), "1.1", "ports found", &fixed("Sure, sounds good."), &mut warnings).unwrap();
    let t = plan.find("1.1").unwrap();
    assert_eq!(t.status, TaskStatus::Failed);
    assert_eq!(t.result_summary.as_deref(), Some(PLANNER_PARSE_FAILURE));
    assert_eq!(warnings.len(), 1);
}

#[test]
fn update_that_leaves_the_task_open_fails_it() {
    let mut warnings = Vec::new();
    let reply = "1. Scanning [to-do]\n  1.1 Scan all TCP ports [to-do]\n  1.2 Scan UDP ports [to-do]\n";
    let gw = Gateway::new(Arc::new(move |_: &ChatRequest| Ok(reply.to_string())));
    let plan = update_plan(&small_plan(), "1.1", "nothing useful", &gw, &mut warnings).unwrap();
    let t = plan.find("1.1").unwrap();
    assert_eq!(t.status, TaskStatus::Failed);
    assert_eq!(t.result_summary.as_deref(), Some("nothing useful"));
}

#[test]
fn update_adds_subtasks_and_rejects_reopening() {
    let mut start = small_plan();
    let t = start.find_mut("1.2").unwrap();
    t.status = TaskStatus::Failed;
    t.result_summary = Some("filtered".into());
    let reply = "1. Scanning [to-do]\n  1.1 Scan all TCP ports [completed] -- 21 open\n    1.1.1 Grab the FTP banner [to-do]\n  1.2 Scan UDP ports [to-do]\n";
    let gw = Gateway::new(Arc::new(move |_: &ChatRequest| Ok(reply.to_string())));
    let mut warnings = Vec::new();
    let plan = update_plan(&start, "1.1", "21 open", &gw, &mut warnings).unwrap();
    assert_eq!(plan.find("1.1").unwrap().status, TaskStatus::Completed);
    assert_eq!(plan.find("1.1.1").unwrap().status, TaskStatus::ToDo);
    assert_eq!(plan.find("1.2").unwrap().status, TaskStatus::Failed);
    assert!(warnings.iter().any(|w| w.contains("1.2")), "{warnings:?}");
}

#[test]
fn force_mark_closes_whole_subtrees_naming_found_cves() {
    let mut plan = AttackPlan::new(vec![TaskNode::todo("4", "Exploitation").with_children(vec![
        TaskNode::todo("4.1", "Exploit vsftpd (cve-2011-2523)")
            .with_children(vec![TaskNode::todo("4.1.1", "Check the shell")]),
        TaskNode::todo("4.2", "Exploit the telnet service"),
    ])]);
    let found = vec![
        Vulnerability::new("CVE-2011-2523", "ftp", Some(21)),
        Vulnerability::new("CVE-NA", "telnet", Some(23)),
    ];
    let changed = force_mark_found(&mut plan, &found);
    assert_eq!(changed, vec!["4.1"]);
    assert_eq!(plan.find("4.1.1").unwrap().status, TaskStatus::Completed);
    // CVE-NA names nothing specific
    assert_eq!(plan.find("4.2").unwrap().status, TaskStatus::ToDo);
}

#[test]
fn golden_scenario_finds_six_and_counterfactual_follows_findings() {
    let (out, gw) = golden(&config());
    assert_eq!(out.status, RunStatus::Complete);
    let keys: Vec<String> = out.findings.iter().map(|v| v.key().to_string()).collect();
    assert_eq!(
        keys,
        ["CVE-2011-2523 (21/ftp)", "CVE-2010-2075 (6667/irc)", "CVE-2007-2447 (139/samba)", "CVE-NA (23/telnet)", "CVE-NA (80/http)", "CVE-NA (22/ssh)"]
    );
    let with_new = out.iterations.iter().filter(|l| !l.new_findings.is_empty()).count();
    assert_eq!(with_new, 6);
    for l in &out.iterations {
        assert_eq!(l.counterfactual_issued, !l.new_findings.is_empty(), "iteration {}", l.iteration);
    }
    assert_eq!(counterfactual_requests(&gw.transcript()), 6);
    // the post-exploitation straggler was closed by the engine, not run
    let straggler = out.plan.find("5.1").unwrap();
    assert_eq!(straggler.status, TaskStatus::Completed);
    assert!(out.iterations.iter().all(|l| l.task_id != "5.1"));
}

#[test]
fn without_counterfactual_fewer_paths_are_tried_and_duplicates_merge() {
    let mut cfg = config();
    cfg.components.counterfactual = false;
    let (out, gw) = golden(&cfg);
    assert_eq!(counterfactual_requests(&gw.transcript()), 0);
    let ids: Vec<&str> = out.findings.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, ["CVE-2011-2523", "CVE-2010-2075"]);
    // 5.1 re-ran the vsftpd exploit; the repeat is not a new finding
    let rerun = out.iterations.iter().find(|l| l.task_id == "5.1").unwrap();
    assert_eq!(rerun.task_status, TaskStatus::Completed);
    assert!(rerun.new_findings.is_empty());
}

#[test]
fn instructor_changes_the_samba_attempt_and_never_enters_history() {
    let (out, gw) = golden(&config());
    let executor: Vec<_> = gw.transcript().into_iter().filter(|e| e.role == AgentRole::Executor).collect();
    assert!(!executor.is_empty());
    for e in &executor {
        let users: Vec<&str> = e
            .request
            .iter()
            .filter(|t| t.role_tag == RoleTag::User)
            .map(|t| t.content.as_str())
            .collect();
        let (last, earlier) = users.split_last().unwrap();
        assert!(last.starts_with("Here is a brief introduction to the task"));
        assert!(earlier.iter().all(|u| !u.contains("knowledge base")));
    }
    assert!(out.history.records().iter().any(|r| r.command.raw.contains("usermap_script")));

    let mut cfg = config();
    cfg.components.instructor = false;
    let (plain, _) = golden(&cfg);
    assert!(plain.history.records().iter().any(|r| r.command.raw.contains("lsa_transnames_heap")));
    assert!(plain.findings.iter().all(|v| v.service != "samba"));
}

#[test]
fn no_command_gets_one_retry_then_the_task_fails() {
    let backend = overriding(Scenario::NoExploit, |r| {
        (r.role == AgentRole::Executor && last_user(r).contains("ProFTPD")).then(|| "Let me think about it.".to_string())
    });
    let gw = Gateway::new(backend);
    let out = run_pentest(&config(), &gw, None, &mut sim());
    let t = out.plan.find("4.1").unwrap();
    assert_eq!(t.status, TaskStatus::Failed);
    assert!(out.history.records().iter().all(|r| r.task_id != "4.1"));
    let proftpd_requests = gw
        .transcript()
        .iter()
        .filter(|e| e.role == AgentRole::Executor)
        .filter(|e| e.request.iter().any(|t| t.content.contains("ProFTPD")))
        .filter(|e| !e.request.iter().any(|t| t.content.contains("lsa_transnames")))
        .count();
    assert_eq!(proftpd_requests, 2);
    assert!(out.warnings.iter().any(|w| w.contains("4.1") && w.contains("no command")));
}

#[test]
fn stale_window_stops_the_run() {
    // every task fails and the plan never grows
    let backend = overriding(Scenario::NoExploit, |r| {
        if r.role == AgentRole::Planner && last_user(r).starts_with("The target machine") {
            let tasks: String = (1..=9).map(|i| format!("  1.{i} Brute-force the SSH service with the root account, list {i} [to-do]\n")).collect();
            return Some(format!("1. Exploitation [to-do]\n{tasks}"));
        }
        None
    });
    let mut cfg = config();
    cfg.no_new_finding_window = 3;
    let out = run_pentest(&cfg, &Gateway::new(backend), None, &mut sim());
    assert_eq!(out.status, RunStatus::Complete);
    assert_eq!(out.iterations.len(), 3);
    assert!(out.plan.has_todo());
}

#[test]
fn iteration_cap_is_budget_exhausted() {
    let mut cfg = config();
    cfg.max_iterations = 4;
    let (out, _) = golden(&cfg);
    assert_eq!(out.status, RunStatus::BudgetExhausted);
    assert_eq!(out.iterations.len(), 4);
}

#[test]
fn missing_fixture_aborts_with_partial_results() {
    // a replay that only knows the first few exchanges
    let (_, recorded) = golden(&config());
    let partial: Vec<_> = recorded.transcript().into_iter().take(12).collect();
    let gw = Gateway::new(Arc::new(ReplayBackend::from_exchanges(partial)));
    let out = run_pentest(&config(), &gw, Some(&bundled_index()), &mut sim());
    assert_eq!(out.status, RunStatus::Aborted);
    assert!(out.abort_reason.as_deref().unwrap().contains("no replay fixture"));
    assert!(!out.history.records().is_empty());
}

struct Unreachable;

impl ExecutorBackend for Unreachable {
    fn execute(&mut self, _: &Command) -> Result<ExecOutput, ExecError> {
        Err(ExecError::Unreachable("no route to executor host".into()))
    }
}

#[test]
fn unreachable_executor_aborts() {
    let gw = Gateway::new(Arc::new(ScriptedModel::new(Scenario::Golden)));
    let out = run_pentest(&config(), &gw, None, &mut Unreachable);
    assert_eq!(out.status, RunStatus::Aborted);
    assert!(out.abort_reason.unwrap().contains("no route"));
}

#[test]
fn spawn_failures_are_recorded_not_fatal() {
    struct NoSpawn;
    impl ExecutorBackend for NoSpawn {
        fn execute(&mut self, _: &Command) -> Result<ExecOutput, ExecError> {
            Err(ExecError::Spawn("sh: not found".into()))
        }
    }
    let gw = Gateway::new(Arc::new(ScriptedModel::new(Scenario::NoExploit)));
    let out = run_pentest(&config(), &gw, None, &mut NoSpawn);
    assert_eq!(out.status, RunStatus::Complete);
    assert!(out.history.records().iter().all(|r| r.summary.starts_with("The command could not be started")));
    assert!(out.findings.is_empty());
}

#[test]
fn recorded_run_replays_identically() {
    let (live, gw) = golden(&config());
    let replay = Gateway::new(Arc::new(ReplayBackend::from_exchanges(gw.transcript())));
    let again = run_pentest(&config(), &replay, Some(&bundled_index()), &mut sim());
    assert_eq!(again.findings, live.findings);
    assert_eq!(again.plan, live.plan);
    assert_eq!(again.history, live.history);
}

#[test]
fn bundled_transcript_drives_the_golden_run() {
    let gw = Gateway::replay_mode(&fixtures().join("golden/transcript.jsonl")).unwrap();
    let out = run_pentest(&config(), &gw, Some(&bundled_index()), &mut sim());
    assert_eq!(out.status, RunStatus::Complete, "{:?}", out.abort_reason);
    assert_eq!(out.findings.len(), 6);
}

#[test]
fn history_round_trips_through_jsonl() {
    let (out, _) = golden(&config());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    out.history.write_jsonl(&path).unwrap();
    let back = PentestHistory::read_jsonl(&path).unwrap();
    assert_eq!(back, out.history.records());
}

#[test]
fn gateway_errors_are_not_swallowed() {
    let gw = Gateway::new(Arc::new(|r: &ChatRequest| -> Result<String, GatewayError> {
        Err(GatewayError::Transport {
            endpoint: "http://127.0.0.1:9".into(),
            message: format!("{} refused", r.role),
        })
    }));
    let calls = Arc::new(Mutex::new(0));
    let c = calls.clone();
    struct Counting(Arc<Mutex<usize>>);
    impl ExecutorBackend for Counting {
        fn execute(&mut self, _: &Command) -> Result<ExecOutput, ExecError> {
            *self.0.lock().unwrap() += 1;
            Err(ExecError::Spawn("unused".into()))
        }
    }
    let out = run_pentest(&config(), &gw, None, &mut Counting(c));
    assert_eq!(out.status, RunStatus::Aborted);
    assert!(out.abort_reason.unwrap().contains("Planner refused"));
    assert_eq!(*calls.lock().unwrap(), 0);
}
