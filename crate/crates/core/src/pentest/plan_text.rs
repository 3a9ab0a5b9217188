//! Planner replies as text: parsing and merging into the current plan.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::model::plan::{cap_result_summary, compare_ids, parent_id};
use crate::model::{AttackPlan, TaskNode, TaskStatus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable plan: {0}")]
pub struct PlanParseError(pub String);

static TASK_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[\s>*#-]*(\d+(?:\.\d+)*)\.?\)?\s+(.+?)\s*$").expect("static regex")
});
static STATUS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([A-Za-z -]+)\]").expect("static regex"));

/// One parsed line of a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanLine {
    pub id: String,
    pub description: String,
    pub status: TaskStatus,
    pub result: Option<String>,
}

/// Parses a line of the form `<id> <description> [<status>] -- <result>`.
/// Lines without a status are ToDo.
pub fn parse_plan_line(line: &str) -> Option<PlanLine> {
    let line = line.replace("**", "");
    let caps = TASK_LINE.captures(&line)?;
    let id = caps[1].to_string();
    let rest = caps[2].to_string();
    let (head, result) = match rest.split_once(" -- ") {
        Some((h, r)) => (h.to_string(), Some(r.trim().to_string()).filter(|r| !r.is_empty())),
        None => (rest.clone(), None),
    };
    let mut status = TaskStatus::ToDo;
    let mut description = head.clone();
    if let Some(m) = STATUS.captures_iter(&head).last() {
        if let Some(s) = TaskStatus::from_label(&m[1]) {
            status = s;
            let whole = m.get(0).expect("match");
            description = format!("{}{}", &head[..whole.start()], &head[whole.end()..]);
        }
    }
    let description = description.trim().trim_end_matches([':', '-']).trim().to_string();
    if description.is_empty() {
        return None;
    }
    Some(PlanLine {
        id,
        description,
        status,
        result,
    })
}

/// All task lines in `text`, parents before children.
pub fn parse_plan_lines(text: &str) -> Result<Vec<PlanLine>, PlanParseError> {
    let mut lines: Vec<PlanLine> = text.lines().filter_map(parse_plan_line).collect();
    if lines.is_empty() {
        return Err(PlanParseError("no task lines found".into()));
    }
    lines.sort_by(|a, b| compare_ids(&a.id, &b.id));
    Ok(lines)
}

/// Builds a plan from text; lines that are not tasks are ignored. Tasks
/// whose parent is missing or whose id repeats are skipped and reported.
pub fn parse_plan(text: &str) -> Result<(AttackPlan, Vec<String>), PlanParseError> {
    let lines = parse_plan_lines(text)?;
    let mut plan = AttackPlan::default();
    let mut skipped = Vec::new();
    for l in lines {
        let id = l.id.clone();
        if !plan.insert(node_from_line(l)) {
            skipped.push(format!("plan line {id}: parent missing or duplicate id"));
        }
    }
    if plan.roots.is_empty() {
        return Err(PlanParseError("no root task".into()));
    }
    Ok((plan, skipped))
}

fn node_from_line(l: PlanLine) -> TaskNode {
    let result_summary = match (l.status, l.result) {
        (TaskStatus::ToDo, _) => None,
        (_, Some(r)) => Some(cap_result_summary(&r)),
        (s, None) => Some(format!("(marked {s} without a result)")),
    };
    TaskNode {
        id: l.id,
        description: l.description,
        status: l.status,
        result_summary,
        children: Vec::new(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub status_changes: Vec<String>,
    pub added: Vec<String>,
    /// Illegal transitions or orphan nodes that were ignored.
    pub rejected: Vec<String>,
}

/// Applies a planner revision to `current`: legal status transitions are
/// taken, nodes absent from the revision are kept, and new nodes are added
/// under existing parents. Parents are rolled up afterwards.
pub fn merge_plan(current: &AttackPlan, revision: &[PlanLine]) -> (AttackPlan, MergeReport) {
    let mut plan = current.clone();
    let mut report = MergeReport::default();
    for line in revision {
        let node = node_from_line(line.clone());
        match plan.find_mut(&node.id) {
            Some(existing) => {
                if existing.status == node.status {
                    continue;
                }
                if existing.status.can_become(node.status) {
                    existing.status = node.status;
                    existing.result_summary = node.result_summary.clone();
                    report.status_changes.push(format!("{} -> {}", node.id, node.status));
                } else {
                    report
                        .rejected
                        .push(format!("{}: {} -> {} is not allowed", node.id, existing.status, node.status));
                }
            }
            None => {
                let id = node.id.clone();
                if parent_id(&id).is_some_and(|p| plan.find(p).is_none()) || !plan.insert(node) {
                    report.rejected.push(format!("{id}: no parent in the current plan"));
                } else {
                    report.added.push(id);
                }
            }
        }
    }
    plan.roll_up();
    (plan, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLAN: &str = "\
1. Reconnaissance [completed] -- host up
  1.1 Ping the target [completed] -- replies
2. Scanning [to-do]
  2.1 Full TCP port scan [to-do]
  2.2 Service version scan [to-do]
3. Exploitation [to-do]
";

    #[test]
    fn parses_rendered_form() {
        let (plan, skipped) = parse_plan(PLAN).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(plan.nodes().len(), 6);
        assert_eq!(plan.find("1.1").unwrap().status, TaskStatus::Completed);
        assert_eq!(plan.find("1.1").unwrap().result_summary.as_deref(), Some("replies"));
        assert_eq!(plan.find("2.2").unwrap().description, "Service version scan");
        let again = parse_plan(&plan.render()).unwrap().0;
        assert_eq!(again, plan);
    }

    #[test]
    fn line_variants() {
        let l = parse_plan_line("- **4.1** Exploit vsftpd [done] -- root shell").unwrap();
        assert_eq!((l.id.as_str(), l.status), ("4.1", TaskStatus::Completed));
        assert_eq!(l.description, "Exploit vsftpd");
        let l = parse_plan_line("3) Enumerate NFS").unwrap();
        assert_eq!((l.id.as_str(), l.status), ("3", TaskStatus::ToDo));
        assert!(parse_plan_line("Here is the plan:").is_none());
        assert!(parse_plan_line("2. [failed]").is_none());
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(parse_plan("I cannot help with that.").is_err());
    }

    #[test]
    fn orphans_are_skipped() {
        let (plan, skipped) = parse_plan("1 A\n2.1 orphan\n").unwrap();
        assert_eq!(plan.nodes().len(), 1);
        assert_eq!(skipped.len(), 1);
    }

    #[test]
    fn merge_keeps_missing_nodes_and_rejects_reopening() {
        let (current, _) = parse_plan(PLAN).unwrap();
        let rev = parse_plan_lines("1 Reconnaissance [to-do]\n2.1 Full TCP port scan [completed] -- 10 ports\n2.3 UDP scan [to-do]\n5.1 orphan\n").unwrap();
        let (merged, report) = merge_plan(&current, &rev);
        assert_eq!(merged.find("1").unwrap().status, TaskStatus::Completed);
        assert_eq!(merged.find("2.1").unwrap().status, TaskStatus::Completed);
        assert!(merged.find("2.2").is_some());
        assert!(merged.find("2.3").is_some());
        assert_eq!(report.added, vec!["2.3"]);
        assert_eq!(report.rejected.len(), 2);
    }

    #[test]
    fn merge_rolls_up_parents() {
        let (current, _) = parse_plan("1 Scan\n1.1 a\n").unwrap();
        let rev = parse_plan_lines("1 Scan\n1.1 a [failed] -- refused\n").unwrap();
        let (merged, _) = merge_plan(&current, &rev);
        assert_eq!(merged.find("1").unwrap().status, TaskStatus::Failed);
    }
}
